import init, { synth_points, similarity_field, score_points, far_frr, eer, targets_preview } from "./pkg/csda_web.js";

const GRID = 84;
const COLORS = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

let points = new Float64Array();

function extent(pts) {
  let m = 1;
  for (let i = 0; i < pts.length; i += 3) {
    m = Math.max(m, Math.abs(pts[i]), Math.abs(pts[i + 1]));
  }
  return m * 1.1;
}

function drawField(field, ext) {
  const cv = $("field");
  const ctx = cv.getContext("2d");
  const cell = cv.width / GRID;
  const logs = Array.from(field, (v) => Math.log(v));
  const lo = Math.min(...logs);
  const hi = Math.max(...logs);
  for (let r = 0; r < GRID; r++) {
    for (let c = 0; c < GRID; c++) {
      const t = (logs[r * GRID + c] - lo) / (hi - lo || 1);
      const g = Math.round(255 * t);
      ctx.fillStyle = `rgb(${g},${g},${Math.round(120 + 135 * t)})`;
      ctx.fillRect(c * cell, r * cell, cell + 1, cell + 1);
    }
  }
  const toPx = (v) => ((v + ext) / (2 * ext)) * cv.width;
  for (let i = 0; i < points.length; i += 3) {
    ctx.fillStyle = COLORS[(points[i + 2] - 1) % COLORS.length];
    ctx.beginPath();
    ctx.arc(toPx(points[i]), cv.height - toPx(points[i + 1]), 2.5, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawCurve(curve, rate) {
  const cv = $("curve");
  const ctx = cv.getContext("2d");
  const w = cv.width;
  const h = cv.height;
  ctx.clearRect(0, 0, w, h);
  const n = curve.length / 3;
  const series = [
    [1, "#d62728", "FAR"],
    [2, "#1f77b4", "FRR"],
  ];
  for (const [k, color, name] of series) {
    ctx.strokeStyle = color;
    ctx.beginPath();
    for (let i = 0; i < n; i++) {
      const x = (i / Math.max(n - 1, 1)) * w;
      const y = h - curve[3 * i + k] * h;
      i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    }
    ctx.stroke();
    ctx.fillStyle = color;
    ctx.fillText(name, 8, k * 14);
  }
  ctx.strokeStyle = "#555";
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(0, h - rate * h);
  ctx.lineTo(w, h - rate * h);
  ctx.stroke();
  ctx.setLineDash([]);
}

function fit() {
  $("status").textContent = "";
  try {
    points = synth_points($("mode").value, num("classes"), num("perClass"), num("separation"), num("seed"));
    const method = $("method").value;
    const ext = extent(points);
    drawField(similarity_field(points, method, num("dim"), GRID, ext, num("seed")), ext);

    const scores = score_points(points, method, num("dim"), num("seed"));
    const pos = [];
    const neg = [];
    for (let i = 0; i < scores.length; i++) {
      (points[3 * i + 2] === 1 ? pos : neg).push(scores[i]);
    }
    const rate = eer(Float64Array.from(pos), Float64Array.from(neg));
    drawCurve(far_frr(Float64Array.from(pos), Float64Array.from(neg)), rate);
    $("eer").textContent = `training EER for class 1: ${(100 * rate).toFixed(2)}%`;
  } catch (e) {
    $("status").textContent = String(e);
  }
}

function preview() {
  $("status").textContent = "";
  try {
    if (points.length === 0) fit();
    const labels = new Uint32Array(points.length / 3);
    for (let i = 0; i < labels.length; i++) labels[i] = points[3 * i + 2];
    const rows = num("targetRows");
    const t = targets_preview(labels, num("targetClass"), rows, num("seed"));
    const n = labels.length;
    const cv = $("targets");
    const ctx = cv.getContext("2d");
    ctx.clearRect(0, 0, cv.width, cv.height);
    const cw = cv.width / n;
    const ch = cv.height / rows;
    const peak = Math.max(...Array.from(t, Math.abs)) || 1;
    for (let r = 0; r < rows; r++) {
      for (let j = 0; j < n; j++) {
        const v = t[r * n + j] / peak;
        const a = Math.round(255 * (1 - Math.abs(v)));
        ctx.fillStyle = v >= 0 ? `rgb(255,${a},${a})` : `rgb(${a},${a},255)`;
        ctx.fillRect(j * cw, r * ch, cw + 0.5, ch - 1);
      }
    }
  } catch (e) {
    $("status").textContent = String(e);
  }
}

await init();
$("fit").addEventListener("click", fit);
$("preview").addEventListener("click", preview);
fit();
