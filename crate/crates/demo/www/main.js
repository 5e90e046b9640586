import init, { Playground } from "./pkg/mega_demo.js";

const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c"];
const SHADES = ["#c6dbef", "#fdd0a2", "#c7e9c0"];
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

let playground = null;
let points = null;
const scores = {};

function status(text, error = false) {
  $("status").textContent = text;
  $("status").className = error ? "error" : "";
}

// Yield so the status line repaints before a long synchronous call.
const nextFrame = () => new Promise((r) => requestAnimationFrame(() => setTimeout(r, 0)));

async function guarded(label, fn) {
  status(label + "...");
  await nextFrame();
  try {
    fn();
    status("");
  } catch (e) {
    status(String(e.message ?? e), true);
  }
}

function drawGrid(canvasId, which) {
  const canvas = $(canvasId);
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  let grid;
  try {
    grid = JSON.parse(playground.decisionGrid(which, 80));
  } catch {
    return;
  }
  const r = grid.resolution;
  const cw = canvas.width / r;
  const ch = canvas.height / r;
  grid.classes.forEach((c, k) => {
    const i = k % r;
    const j = Math.floor(k / r);
    ctx.fillStyle = SHADES[c % SHADES.length];
    ctx.fillRect(i * cw, canvas.height - (j + 1) * ch, cw + 0.5, ch + 0.5);
  });
  const sx = (x) => ((x - grid.x_min) / (grid.x_max - grid.x_min)) * canvas.width;
  const sy = (y) => canvas.height - ((y - grid.y_min) / (grid.y_max - grid.y_min)) * canvas.height;
  for (let k = 0; k < points.x.length; k++) {
    ctx.fillStyle = COLORS[points.label[k] % COLORS.length];
    ctx.globalAlpha = points.part[k] === 1 ? 1 : 0.45;
    ctx.beginPath();
    ctx.arc(sx(points.x[k]), sy(points.y[k]), points.part[k] === 1 ? 2.6 : 1.6, 0, 2 * Math.PI);
    ctx.fill();
  }
  ctx.globalAlpha = 1;
}

function drawLines(canvasId, xs, series, yRange) {
  const canvas = $(canvasId);
  const ctx = canvas.getContext("2d");
  const pad = 30;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const [lo, hi] = yRange;
  const x0 = xs[0];
  const x1 = xs[xs.length - 1] === x0 ? x0 + 1 : xs[xs.length - 1];
  const px = (x) => pad + ((x - x0) / (x1 - x0)) * w;
  const py = (y) => pad + h - ((y - lo) / (hi - lo || 1)) * h;
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w, h);
  ctx.fillStyle = "#555";
  ctx.font = "11px system-ui";
  ctx.fillText(hi.toFixed(3), 2, pad + 4);
  ctx.fillText(lo.toFixed(3), 2, pad + h);
  ctx.fillText(String(x0), pad, pad + h + 14);
  ctx.fillText(String(x1), pad + w - 10, pad + h + 14);
  series.forEach(({ ys, color }) => {
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    ys.forEach((y, i) => (i ? ctx.lineTo(px(xs[i]), py(y)) : ctx.moveTo(px(xs[i]), py(y))));
    ctx.stroke();
  });
}

function range(values) {
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const pad = Math.max(0.005, (hi - lo) * 0.1);
  return [Math.max(0, lo - pad), Math.min(1, hi + pad)];
}

function renderScores() {
  const rows = Object.entries(scores)
    .map(([k, v]) => `<tr><td>${k}</td><td>${v.toFixed(4)}</td></tr>`)
    .join("");
  $("scores").innerHTML = `<tr><th>model</th><th>val acc</th></tr>${rows}`;
}

function trainParents() {
  playground?.free();
  playground = new Playground($("kind").value, num("n"), num("noise"), $("hidden").value, 1);
  points = JSON.parse(playground.points());
  const summary = JSON.parse(
    playground.trainParents(BigInt(num("seedA")), BigInt(num("seedB")), num("epochs")),
  );
  for (const k of Object.keys(scores)) delete scores[k];
  scores[`parent A (seed ${num("seedA")})`] = summary.val_accuracy[0];
  scores[`parent B (seed ${num("seedB")})`] = summary.val_accuracy[1];
  renderScores();
  drawGrid("gridA", "parent_a");
  drawGrid("gridB", "parent_b");
  drawGrid("gridAvg", "average");
  drawGrid("gridMerged", "merged");
  for (const id of ["history", "alpha"]) $(id).getContext("2d").clearRect(0, 0, 420, 220);
  $("merge").disabled = false;
  $("sweep").disabled = false;
}

function runMerge() {
  const out = JSON.parse(playground.merge(num("pop"), num("gens"), num("pmut"), BigInt(num("gaSeed"))));
  scores["weight average"] = out.weight_average;
  scores["MeGA merged"] = out.merged;
  renderScores();
  drawGrid("gridAvg", "average");
  drawGrid("gridMerged", "merged");
  const gens = out.history.map((r) => r.generation);
  const best = out.history.map((r) => r.best_fitness);
  const mean = out.history.map((r) => r.mean_fitness);
  drawLines("history", gens, [
    { ys: mean, color: "#aaa" },
    { ys: best, color: "#d62728" },
  ], range([...best, ...mean]));
}

function sweep() {
  const pts = JSON.parse(playground.alphaSweep(num("steps")));
  const acc = pts.map((p) => p.accuracy);
  drawLines("alpha", pts.map((p) => p.alpha), [{ ys: acc, color: "#9467bd" }], range(acc));
}

await init();
$("train").onclick = () => guarded("training parents", trainParents);
$("merge").onclick = () => guarded("merging", runMerge);
$("sweep").onclick = () => guarded("sweeping", sweep);
