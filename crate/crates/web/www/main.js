import init, { Demo } from "./pkg/romkit_web.js";

const $ = (id) => document.getElementById(id);

// blue-white-red around zero, or white-to-black for nonnegative data
function color(t, diverging) {
  if (!diverging) {
    const g = Math.round(255 * (1 - t));
    return [g, g, g];
  }
  const s = 2 * t - 1;
  return s < 0
    ? [Math.round(255 * (1 + s)), Math.round(255 * (1 + s)), 255]
    : [255, Math.round(255 * (1 - s)), Math.round(255 * (1 - s))];
}

function heatmap(canvas, values, side, { diverging = true, limit } = {}) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(side, side);
  const lim = limit ?? Math.max(1e-300, ...values.map(Math.abs));
  for (let j = 0; j < side; j++) {
    for (let i = 0; i < side; i++) {
      const v = values[j * side + i];
      const t = diverging ? 0.5 + 0.5 * Math.max(-1, Math.min(1, v / lim)) : Math.min(1, Math.abs(v) / lim);
      const [r, g, b] = color(t, diverging);
      // y grows upwards
      const k = 4 * ((side - 1 - j) * side + i);
      img.data.set([r, g, b, 255], k);
    }
  }
  const off = new OffscreenCanvas(side, side);
  off.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
  return lim;
}

function dots(canvas, xy) {
  const ctx = canvas.getContext("2d");
  ctx.fillStyle = "#0a0";
  ctx.strokeStyle = "#000";
  for (let k = 0; k < xy.length; k += 2) {
    ctx.beginPath();
    ctx.arc(xy[k] * canvas.width, (1 - xy[k + 1]) * canvas.height, 3.5, 0, 2 * Math.PI);
    ctx.fill();
    ctx.stroke();
  }
}

function spectrum(canvas, sv, highlight) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const logs = Array.from(sv, (s) => Math.log10(Math.max(s, 1e-16)));
  const hi = Math.max(...logs);
  const lo = Math.min(...logs);
  const bw = w / logs.length;
  logs.forEach((l, k) => {
    const bh = ((l - lo) / Math.max(hi - lo, 1e-12)) * (h - 20) + 10;
    ctx.fillStyle = k < highlight ? "#36c" : "#bbb";
    ctx.fillRect(k * bw + 1, h - bh, bw - 2, bh);
  });
  ctx.fillStyle = "#000";
  ctx.fillText(`1e${hi.toFixed(1)}`, 4, 12);
  ctx.fillText(`1e${lo.toFixed(1)}`, 4, h - 4);
}

const diff = (a, b) => a.map((v, i) => Math.abs(v - b[i]));

function compression(demo) {
  const mu = Number($("c-mu").value);
  const n = Number($("c-n").value);
  $("c-mu-v").textContent = mu.toFixed(2);
  $("c-n-v").textContent = n;
  const truth = demo.field(mu);
  const rec = demo.compress(mu, n);
  const side = demo.side();
  const lim = heatmap($("c-truth"), truth, side);
  heatmap($("c-rec"), rec, side, { limit: lim });
  heatmap($("c-res"), diff(truth, rec), side, { diverging: false });
  spectrum($("c-sv"), demo.singularValues(), n);
  $("c-err").textContent = demo.relativeError(mu, rec).toExponential(3);
}

function sensors(demo) {
  const mu = Number($("s-mu").value);
  const m = Number($("s-m").value);
  $("s-mu-v").textContent = mu.toFixed(2);
  $("s-m-v").textContent = m;
  const level = Number($("s-level").value);
  const seed = Math.max(0, Math.floor(Number($("s-seed").value) || 0));
  const truth = demo.field(mu);
  const rec = demo.interpolate(mu, m, level, seed, $("s-tik").checked);
  const side = demo.side();
  const lim = heatmap($("s-truth"), truth, side);
  dots($("s-truth"), demo.sensorPoints(m));
  heatmap($("s-rec"), rec, side, { limit: lim });
  heatmap($("s-res"), diff(truth, rec), side, { diverging: false });
  $("s-err").textContent = demo.relativeError(mu, rec).toExponential(3);
}

async function main() {
  await init();
  const demo = new Demo(50, 100, 20, 30, false);
  $("c-n").max = demo.rank();
  $("s-m").max = demo.sensorCount();
  $("status").textContent = "";
  for (const id of ["c-mu", "c-n"]) $(id).addEventListener("input", () => compression(demo));
  for (const id of ["s-mu", "s-m", "s-level", "s-seed", "s-tik"]) $(id).addEventListener("input", () => sensors(demo));
  compression(demo);
  sensors(demo);
}

main().catch((e) => {
  $("status").textContent = String(e);
});
