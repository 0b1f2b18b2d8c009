import init, { Demo, nondegeneracy_ratio } from "./pkg/meshsplat_wasm.js";

await init();
const demo = new Demo(0n);

function blit(canvas, rgba) {
  const ctx = canvas.getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba.buffer, rgba.byteOffset, rgba.length), canvas.width, canvas.height), 0, 0);
}

// Drag to orbit; a click without movement is reported to `onClick`.
function orbit(canvas, state, redraw, onClick) {
  let drag = null;
  canvas.addEventListener("pointerdown", (e) => {
    drag = { x: e.clientX, y: e.clientY, moved: false };
    canvas.setPointerCapture(e.pointerId);
  });
  canvas.addEventListener("pointermove", (e) => {
    if (!drag) return;
    const dx = e.clientX - drag.x;
    const dy = e.clientY - drag.y;
    if (Math.abs(dx) + Math.abs(dy) > 2) drag.moved = true;
    state.yaw -= dx * 0.01;
    state.pitch = Math.max(-1.4, Math.min(1.4, state.pitch + dy * 0.01));
    drag.x = e.clientX;
    drag.y = e.clientY;
    redraw();
  });
  canvas.addEventListener("pointerup", (e) => {
    if (drag && !drag.moved && onClick) {
      const r = canvas.getBoundingClientRect();
      onClick(((e.clientX - r.left) / r.width) * canvas.width, ((e.clientY - r.top) / r.height) * canvas.height);
    }
    drag = null;
  });
}

// Splat rendering.
const splatCanvas = document.getElementById("splats");
const splatView = { yaw: 0.4, pitch: 0.3 };
let pending = false;
function drawSplats() {
  if (pending) return;
  pending = true;
  requestAnimationFrame(() => {
    pending = false;
    const twoD = document.querySelector('input[name="mode"]:checked').value === "2d";
    const t0 = performance.now();
    blit(splatCanvas, demo.render_splats(splatView.yaw, splatView.pitch, twoD, splatCanvas.width));
    document.getElementById("splat-info").textContent =
      `${demo.splat_count} splats, ${(performance.now() - t0).toFixed(0)} ms`;
  });
}
orbit(splatCanvas, splatView, drawSplats);
document.querySelectorAll('input[name="mode"]').forEach((el) => el.addEventListener("change", drawSplats));
drawSplats();

// Diffusion heat map.
const diffCanvas = document.getElementById("diffusion");
const diffView = { yaw: 0.0, pitch: 0.2 };
let impulse = 0;
function drawDiffusion() {
  const lambda = 10 ** Number(document.getElementById("lambda").value);
  const decades = Number(document.getElementById("decades").value);
  document.getElementById("lambda-out").textContent = lambda.toPrecision(3);
  document.getElementById("decades-out").textContent = decades;
  blit(diffCanvas, demo.diffusion_heatmap(impulse, lambda, decades, diffView.yaw, diffView.pitch, diffCanvas.width));
}
orbit(diffCanvas, diffView, drawDiffusion, (x, y) => {
  const v = demo.pick_vertex(diffView.yaw, diffView.pitch, diffCanvas.width, x, y);
  if (v !== undefined) {
    impulse = v;
    drawDiffusion();
  }
});
for (const id of ["lambda", "decades"]) document.getElementById(id).addEventListener("input", drawDiffusion);
drawDiffusion();

// Rank ratio against thickness, on log-log axes.
const curveCanvas = document.getElementById("curve");
function drawCurve() {
  const seed = BigInt(Math.max(0, Number(document.getElementById("seed").value) | 0));
  const ctx = curveCanvas.getContext("2d");
  const { width: w, height: h } = curveCanvas;
  const pad = 36;
  const xs = [];
  for (let e = -8; e <= 0.001; e += 0.25) xs.push(10 ** e);
  const ys = xs.map((t) => nondegeneracy_ratio(t, seed));
  const lx = (t) => pad + ((Math.log10(t) + 8) / 8) * (w - 2 * pad);
  const ly = (r) => h - pad - ((Math.log10(Math.max(r, 1e-16)) + 16) / 16) * (h - 2 * pad);
  ctx.clearRect(0, 0, w, h);
  ctx.font = "11px system-ui";
  ctx.strokeStyle = "#bbb";
  ctx.fillStyle = "#555";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  for (const e of [-8, -6, -4, -2, 0]) ctx.fillText(`1e${e}`, lx(10 ** e) - 10, h - pad + 14);
  for (const e of [-16, -12, -8, -4, 0]) ctx.fillText(`1e${e}`, 2, ly(10 ** e) + 4);
  ctx.fillText("thickness / in-plane scale", w / 2 - 60, h - 4);
  ctx.strokeStyle = "#c33";
  ctx.setLineDash([4, 3]);
  ctx.beginPath();
  ctx.moveTo(pad, ly(1e-6));
  ctx.lineTo(w - pad, ly(1e-6));
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.strokeStyle = "#236";
  ctx.lineWidth = 2;
  ctx.beginPath();
  xs.forEach((t, i) => (i ? ctx.lineTo(lx(t), ly(ys[i])) : ctx.moveTo(lx(t), ly(ys[i]))));
  ctx.stroke();
  ctx.lineWidth = 1;
  document.getElementById("curve-info").textContent =
    `ratio ${ys[ys.length - 1].toExponential(2)} at thickness 1, ${ys[0].toExponential(2)} at 1e-8 (dashed: 1e-6 threshold)`;
}
document.getElementById("seed").addEventListener("input", drawCurve);
drawCurve();
