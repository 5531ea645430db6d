import init, { three_point, gaussian_schedule, follmer_paths } from "./pkg/mbridge_wasm.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const list = (id) => $(id).value.split(",").map((s) => Number(s.trim()));

function fail(out, e) {
  out.innerHTML = `<p class="err">${String(e)}</p>`;
}

// Maps data coordinates into a sub-rectangle of a canvas.
function frame(ctx, box, xr, yr) {
  const [x0, y0, w, h] = box;
  const px = (x) => x0 + ((x - xr[0]) / (xr[1] - xr[0])) * w;
  const py = (y) => y0 + h - ((y - yr[0]) / (yr[1] - yr[0])) * h;
  ctx.strokeStyle = "#999";
  ctx.lineWidth = 1;
  ctx.strokeRect(x0, y0, w, h);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(xr[0].toPrecision(3), x0, y0 + h + 13);
  ctx.fillText(xr[1].toPrecision(3), x0 + w - 24, y0 + h + 13);
  ctx.fillText(yr[1].toPrecision(3), x0 - 34, y0 + 10);
  ctx.fillText(yr[0].toPrecision(3), x0 - 34, y0 + h);
  return { px, py };
}

function polyline(ctx, xs, ys, map, color, width = 1, dash = []) {
  ctx.beginPath();
  ctx.setLineDash(dash);
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  xs.forEach((x, i) => (i ? ctx.lineTo(map.px(x), map.py(ys[i])) : ctx.moveTo(map.px(x), map.py(ys[i]))));
  ctx.stroke();
  ctx.setLineDash([]);
}

function matrixTable(title, m) {
  const head = "<tr><th></th><th>−2</th><th>0</th><th>2</th></tr>";
  const rows = m
    .map((r, i) => `<tr><th>${i - 1}</th>${r.map((v) => `<td>${v.toFixed(6)}</td>`).join("")}</tr>`)
    .join("");
  return `<table><caption>${title}</caption>${head}${rows}</table>`;
}

// Clips a convex polygon to the half-plane a·(u, v) <= b.
function clip(poly, a, b) {
  const out = [];
  for (let i = 0; i < poly.length; i++) {
    const p = poly[i];
    const q = poly[(i + 1) % poly.length];
    const fp = a[0] * p[0] + a[1] * p[1] - b;
    const fq = a[0] * q[0] + a[1] * q[1] - b;
    if (fp <= 0) out.push(p);
    if (fp * fq < 0) {
      const s = fp / (fp - fq);
      out.push([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
    }
  }
  return out;
}

function runThreePoint() {
  const out = $("tp-out");
  let r;
  try {
    r = JSON.parse(three_point(num("tp-p1"), num("tp-q1"), num("tp-p2"), num("tp-q2")));
  } catch (e) {
    fail(out, e);
    return;
  }
  const { p1, q1, r1, p2 } = r.instance;
  out.innerHTML =
    matrixTable("entropy optimizer", r.entropy.matrix) +
    matrixTable("Bass optimizer", r.bass.matrix) +
    `<pre>u^E − u^B = ${r.gap[0].toExponential(4)}   v^E − v^B = ${r.gap[1].toExponential(4)}\n` +
    `H(m^E | μ⊗ν) = ${r.entropy.value.toFixed(10)}   Bass value = ${r.bass.value.toFixed(10)}</pre>`;

  let poly = [
    [p1 / 2, 0],
    [0.75 * p1, 0],
    [0.75 * p1, q1 / 2],
    [p1 / 2, q1 / 2],
  ];
  poly = clip(poly, [1, 1], p2);
  poly = clip(poly, [-1, -1], -(p2 - r1 / 4));
  const c = $("tp-canvas");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const us = poly.map((p) => p[0]);
  const vs = poly.map((p) => p[1]);
  const pad = (lo, hi) => [lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo)];
  const map = frame(ctx, [50, 10, c.width - 70, c.height - 40], pad(Math.min(...us), Math.max(...us)), pad(Math.min(...vs), Math.max(...vs)));
  ctx.beginPath();
  poly.forEach((p, i) => (i ? ctx.lineTo(map.px(p[0]), map.py(p[1])) : ctx.moveTo(map.px(p[0]), map.py(p[1]))));
  ctx.closePath();
  ctx.fillStyle = "#eef3fa";
  ctx.fill();
  ctx.strokeStyle = "#6a8fc0";
  ctx.stroke();
  const dot = (u, v, color, label) => {
    ctx.fillStyle = color;
    ctx.beginPath();
    ctx.arc(map.px(u), map.py(v), 4, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillText(label, map.px(u) + 6, map.py(v) - 6);
  };
  dot(r.entropy.u, r.entropy.v, COLORS[0], "m^E");
  dot(r.bass.u, r.bass.v, COLORS[1], "m^B");
  ctx.fillStyle = "#555";
  ctx.fillText("u", c.width / 2, c.height - 4);
  ctx.fillText("v", 8, c.height / 2);
}

function runGaussian() {
  const out = $("g-out");
  let r;
  try {
    r = JSON.parse(gaussian_schedule(new Float64Array(list("g-s0")), new Float64Array(list("g-s1")), num("g-steps")));
  } catch (e) {
    fail(out, e);
    return;
  }
  out.innerHTML =
    `<pre>eigenvalues of Δ = [${r.eigenvalues.map((l) => l.toFixed(6)).join(", ")}]\n` +
    `entropy value = ${r.entropy_value.toFixed(12)}   weighted energy = ${r.weighted_energy.toFixed(12)}\n` +
    `max |Föllmer − Bass| covariance gap on the grid = ${r.max_discrepancy.toExponential(2)}</pre>`;
  const c = $("g-canvas");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const d = r.eigenvalues.length;
  const vol = r.volatility.flat();
  const left = frame(ctx, [50, 10, 380, 250], [0, 1], [Math.min(0, ...vol), Math.max(1, ...vol)]);
  const right = frame(ctx, [510, 10, 380, 250], [0, 1], [0, 1]);
  for (let k = 0; k < d; k++) {
    const color = COLORS[k % COLORS.length];
    polyline(ctx, r.grid, r.volatility.map((row) => row[k]), left, color, 2);
    polyline(ctx, r.grid, r.time_change.map((row) => row[k]), right, color, 2, [6, 4]);
  }
  polyline(ctx, [0, 1], [0, 1], right, "#bbb");
  ctx.fillStyle = "#555";
  ctx.fillText("σ_k(t)", 60, 25);
  ctx.fillText("τ_k(t)", 520, 25);
}

function runFollmer() {
  const out = $("f-out");
  let r;
  try {
    const json = follmer_paths(
      new Float64Array(list("f-atoms")),
      new Float64Array(list("f-weights")),
      num("f-paths"),
      num("f-steps"),
      num("f-seed") >>> 0,
    );
    r = JSON.parse(json);
  } catch (e) {
    fail(out, e);
    return;
  }
  out.innerHTML =
    `<pre>start x = ${r.start.toFixed(6)}   paths = ${r.n_paths}   ` +
    `drift energy = ${r.drift_energy[0].toFixed(5)} ± ${r.drift_energy[1].toExponential(1)}</pre>`;
  const c = $("f-canvas");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const all = r.drifted.flat().concat(r.atoms);
  const yr = [Math.min(...all), Math.max(...all)];
  const mplot = frame(ctx, [50, 10, 330, 250], [0, 1], yr);
  const xplot = frame(ctx, [420, 10, 330, 250], [0, 1], yr);
  ctx.globalAlpha = 0.25;
  r.martingale.forEach((p) => polyline(ctx, r.grid, p, mplot, COLORS[0]));
  r.drifted.forEach((p) => polyline(ctx, r.grid, p, xplot, COLORS[1]));
  ctx.globalAlpha = 1;

  // Terminal frequencies against target weights, one pair of bars per atom.
  const [bx, by, bw, bh] = [790, 10, 120, 250];
  ctx.strokeStyle = "#999";
  ctx.strokeRect(bx, by, bw, bh);
  const top = Math.max(...r.weights, ...r.terminal_frequencies);
  const slot = bw / r.atoms.length;
  r.atoms.forEach((a, j) => {
    const hTarget = (r.weights[j] / top) * (bh - 20);
    const hFreq = (r.terminal_frequencies[j] / top) * (bh - 20);
    ctx.fillStyle = "#bbb";
    ctx.fillRect(bx + j * slot + 4, by + bh - hTarget, slot / 2 - 4, hTarget);
    ctx.fillStyle = COLORS[0];
    ctx.fillRect(bx + j * slot + slot / 2, by + bh - hFreq, slot / 2 - 4, hFreq);
    ctx.fillStyle = "#555";
    ctx.fillText(String(a), bx + j * slot + 4, by + bh + 13);
  });
  ctx.fillText("M_t", 60, 25);
  ctx.fillText("X_t", 430, 25);
}

await init();
$("tp-run").addEventListener("click", runThreePoint);
$("g-run").addEventListener("click", runGaussian);
$("f-run").addEventListener("click", runFollmer);
runThreePoint();
runGaussian();
runFollmer();
