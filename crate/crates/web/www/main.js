import init, { rh, profile, stability } from "./pkg/combust_web.js";

const $ = (id) => document.getElementById(id);
const out = $("out");

function params() {
  return ["q", "k", "d", "s"].map((id) => Number($(id).value));
}

function show(text, isError = false) {
  out.textContent = text;
  out.className = isError ? "err" : "";
}

// Runs a wasm call after the "working" message has painted.
function run(label, f) {
  show(`${label}: working…`);
  setTimeout(() => {
    try {
      f();
    } catch (e) {
      show(`${label}: ${e.message ?? e}`, true);
    }
  }, 20);
}

function plot(canvas, series, opts = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 36;
  ctx.clearRect(0, 0, w, h);
  const xs = series.flatMap((s) => s.x);
  const ys = series.flatMap((s) => s.y).concat(opts.extraY ?? []);
  let [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (opts.equal) {
    const r = Math.max(x1 - x0, y1 - y0) / 2 || 1;
    const [cx, cy] = [(x0 + x1) / 2, (y0 + y1) / 2];
    [x0, x1, y0, y1] = [cx - r, cx + r, cy - r, cy + r];
  }
  if (y1 === y0) y1 = y0 + 1;
  const X = (x) => pad + ((x - x0) / (x1 - x0)) * (w - 2 * pad);
  const Y = (y) => h - pad - ((y - y0) / (y1 - y0)) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 14);
  ctx.fillText(x1.toPrecision(3), w - pad - 30, h - pad + 14);
  ctx.fillText(y1.toPrecision(3), 2, pad + 4);
  ctx.fillText(y0.toPrecision(3), 2, h - pad);
  if (opts.origin && x0 < 0 && x1 > 0 && y0 < 0 && y1 > 0) {
    ctx.fillStyle = "#000";
    ctx.beginPath();
    ctx.arc(X(0), Y(0), 3, 0, 2 * Math.PI);
    ctx.fill();
  }
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.x.forEach((x, i) => (i ? ctx.lineTo(X(x), Y(s.y[i])) : ctx.moveTo(X(x), Y(s.y[i]))));
    ctx.stroke();
  }
  let ly = pad + 12;
  for (const s of series) {
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, w - pad - 70, ly);
    ly += 14;
  }
}

function onRh() {
  const [q, , , s] = params();
  const v = JSON.parse(rh(q, s));
  const lines = v.roots.map(
    (r) => `u₋ = ${r.u_minus.toFixed(6)}  ${r.classification.class}  admissible: ${r.admissible}`,
  );
  lines.push(`CJ detonation speed s_* = ${v.cj.detonation ?? "none"}`);
  show(lines.join("\n") || "no RH roots at this speed");
}

function onProfile() {
  const [q, k, d, s] = params();
  const v = JSON.parse(profile(q, k, d, s));
  plot($("profile"), [
    { x: v.xi, y: v.u, color: "#1f77b4", label: "u" },
    { x: v.xi, y: v.z, color: "#d62728", label: "z" },
  ]);
  show(`u₋ = ${v.u_minus.toFixed(6)}, ${v.xi.length} samples, residual ${v.residual.toExponential(2)}, γ = ${v.gamma}`);
}

function onStability() {
  const [q, k, d, s] = params();
  const v = JSON.parse(stability(q, k, d, s));
  const re = v.image.map((p) => p[0]);
  const im = v.image.map((p) => p[1]);
  // Close the curve with the conjugate half.
  const x = re.concat(re.slice().reverse());
  const y = im.concat(im.slice().reverse().map((t) => -t));
  plot($("evans"), [{ x, y, color: "#2ca02c", label: "D(λ)" }], { equal: true, origin: true, extraY: [0] });
  const r = v.report;
  show(
    [
      `verdict: ${r.verdict}`,
      `winding: origin ${r.origin_winding}, outer ${r.outer_winding}, outer (2R) ${r.outer_winding_doubled_radius}`,
      `R = ${r.radius.toFixed(3)}, r₀ = ${r.r0.toExponential(2)}, D′(0) = ${r.d_prime_zero[0].toFixed(4)} + ${r.d_prime_zero[1].toFixed(4)}i`,
      ...r.notes,
    ].join("\n"),
  );
}

await init();
$("btn-rh").onclick = () => run("RH", onRh);
$("btn-profile").onclick = () => run("profile", onProfile);
$("btn-stability").onclick = () => run("stability", onStability);
show("ready");
run("profile", onProfile);
