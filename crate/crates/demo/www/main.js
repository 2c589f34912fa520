import init, { window_weights, filter_run, l2nw_curve, target } from "./pkg/lbmpc_demo.js";

const $ = (id) => document.getElementById(id);

function frame(canvas, xs, ys) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const pad = 30;
  let [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) { y0 -= 1; y1 += 1; }
  const dy = 0.05 * (y1 - y0);
  y0 -= dy; y1 += dy;
  const px = (x) => pad + ((x - x0) / (x1 - x0)) * (w - 2 * pad);
  const py = (y) => h - pad - ((y - y0) / (y1 - y0)) * (h - 2 * pad);
  ctx.strokeStyle = "#eee";
  ctx.beginPath();
  ctx.moveTo(pad, py(0)); ctx.lineTo(w - pad, py(0));
  ctx.stroke();
  ctx.fillStyle = "#888";
  ctx.font = "11px monospace";
  ctx.fillText(y1.toPrecision(3), 2, pad - 4);
  ctx.fillText(y0.toPrecision(3), 2, h - pad + 12);
  ctx.fillText(x0.toPrecision(3), pad, h - 6);
  ctx.fillText(x1.toPrecision(3), w - pad - 30, h - 6);
  return { ctx, px, py };
}

function line({ ctx, px, py }, xs, ys, color, width = 1.5) {
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(px(x), py(ys[i])) : ctx.moveTo(px(x), py(ys[i]))));
  ctx.stroke();
}

function dots({ ctx, px, py }, xs, ys, color, r = 2) {
  ctx.fillStyle = color;
  xs.forEach((x, i) => {
    ctx.beginPath();
    ctx.arc(px(x), py(ys[i]), r, 0, 2 * Math.PI);
    ctx.fill();
  });
}

function show(id, value) {
  $(id + "-v").textContent = value;
}

function drawWeights() {
  const k = +$("w-k").value, r = +$("w-r").value, h = +$("w-h").value;
  show("w-k", k); show("w-h", h.toFixed(2));
  try {
    const left = window_weights(k, r, h, false, $("w-kernel").value);
    const right = window_weights(k, r, h, true, $("w-kernel").value);
    const t = Array.from(left, (_, j) => j / k);
    const f = frame($("w-plot"), t, [...left, ...right]);
    line(f, t, left, "#1f77b4"); dots(f, t, left, "#1f77b4", 3);
    line(f, t, right, "#d62728"); dots(f, t, right, "#d62728", 3);
    $("w-msg").textContent = "";
  } catch (e) {
    $("w-msg").textContent = e.message;
  }
}

function drawFilter() {
  const k = +$("f-k").value, noise = +$("f-n").value, h = +$("f-h").value;
  show("f-k", k); show("f-n", noise.toFixed(2)); show("f-h", h > 0 ? h.toFixed(2) : "plug-in");
  try {
    const run = filter_run(k, 12, noise, h, BigInt($("f-seed").value || 0));
    const f = frame($("f-plot"), run.times, [...run.measured, ...run.truth]);
    dots(f, run.times, run.measured, "#bbb", 1.5);
    line(f, run.times, run.truth, "#222");
    dots(f, run.boundary_times, run.estimates, "#d62728", 4);
    $("f-msg").textContent = `max boundary error ${run.max_error().toFixed(4)}`;
  } catch (e) {
    $("f-msg").textContent = e.message;
  }
}

function drawOracle() {
  const n = +$("o-n").value, h = +$("o-h").value, lambda = +$("o-l").value;
  show("o-n", n); show("o-h", h.toFixed(2)); show("o-l", lambda.toFixed(2));
  const q = Array.from({ length: 301 }, (_, i) => -1.2 + 2.4 * i / 300);
  const fit = l2nw_curve(n, h, lambda, Float64Array.from(q));
  const truth = q.map(target);
  const xs = Array.from({ length: n }, (_, i) => (n === 1 ? 0 : -1 + 2 * i / (n - 1)));
  const f = frame($("o-plot"), q, [...truth, ...fit]);
  line(f, q, truth, "#222");
  line(f, q, Array.from(fit), "#2ca02c", 2);
  dots(f, xs, xs.map(target), "#222", 2.5);
}

await init();
for (const id of ["w-k", "w-r", "w-h", "w-kernel"]) $(id).addEventListener("input", drawWeights);
for (const id of ["f-k", "f-n", "f-h", "f-seed"]) $(id).addEventListener("input", drawFilter);
for (const id of ["o-n", "o-h", "o-l"]) $(id).addEventListener("input", drawOracle);
drawWeights();
drawFilter();
drawOracle();
