import init, { cell_tensors, coagulation, Simulation } from "./pkg/perihom_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);
const fmt = (x) => x.toPrecision(5);

function fail(out, e) {
  out.textContent = String(e);
  out.className = "err";
}

function paint(canvas, side, values, lo, hi) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(side, side);
  for (let j = 0; j < side; j++) {
    for (let i = 0; i < side; i++) {
      const x = values[j * side + i];
      const k = 4 * ((side - 1 - j) * side + i);
      if (Number.isNaN(x)) {
        img.data.set([60, 60, 60, 255], k);
      } else {
        const s = hi > lo ? (x - lo) / (hi - lo) : 0;
        img.data.set([255 * s, 80 + 100 * s * (1 - s), 255 * (1 - s), 255], k);
      }
    }
  }
  const off = new OffscreenCanvas(side, side);
  off.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

function solveCell() {
  const out = $("c-out");
  out.className = "";
  try {
    const r = JSON.parse(cell_tensors(num("c-radius"), num("c-res"), num("c-kappa"), num("c-d1"), num("c-d2"), num("c-g0")));
    paint($("c-mask"), r.side, r.mask.map((m) => (m ? 1 : NaN)), 0, 1);
    const row = (m) => `[${fmt(m[0][0])} ${fmt(m[0][1])}; ${fmt(m[1][0])} ${fmt(m[1][1])}]`;
    out.textContent = [
      `|Y1|      ${fmt(r.pore_area)}`,
      `|Γ|       ${fmt(r.perimeter)}`,
      `K         ${row(r.k)}`,
      `|Y1|·K    ${row(r.bulk)}`,
      ...r.d.map((m, i) => `D${i + 1}        ${row(m)}`),
      `g robin   ${fmt(r.g_robin)}`,
      r.warning ? `warning: ${r.warning}` : "",
    ].join("\n");
  } catch (e) {
    fail(out, e);
  }
}

let sim = null;
let playing = false;

function resetSim() {
  const out = $("s-out");
  out.className = "";
  try {
    if (sim) sim.free();
    sim = new Simulation(num("s-radius"), num("s-eps"), num("s-res"), num("s-beta"), num("s-tau"), num("s-dt"));
    out.textContent = "t = 0";
    drawSim();
  } catch (e) {
    sim = null;
    fail(out, e);
  }
}

function drawSim() {
  const f = sim.field(parseInt($("s-field").value));
  const live = f.filter((x) => !Number.isNaN(x));
  paint($("s-view"), sim.side(), f, 0, Math.max(...live, 1e-12));
}

function tick() {
  if (!playing || !sim) return;
  try {
    const d = JSON.parse(sim.advance(2));
    $("s-out").textContent = [
      `t          ${fmt(d.t)}`,
      `max θ      ${fmt(d.theta_max)}`,
      `∫θ         ${fmt(d.heat)}`,
      `mass       ${d.mass.map(fmt).join(" ")}`,
      `Σ i·mass   ${fmt(d.monomer_mass)}`,
      `iterations ${d.iterations}`,
    ].join("\n");
    drawSim();
    requestAnimationFrame(tick);
  } catch (e) {
    playing = false;
    $("s-play").textContent = "Play";
    fail($("s-out"), e);
  }
}

function integrate() {
  const out = $("k-out");
  out.className = "";
  const n = parseInt($("k-n").value);
  const steps = 400;
  const dt = num("k-t") / steps;
  const u0 = new Float64Array(n);
  u0[0] = 1;
  let traj;
  try {
    traj = coagulation($("k-kernel").value, num("k-c"), u0, dt, steps);
  } catch (e) {
    fail(out, e);
    return;
  }
  const canvas = $("k-plot");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (let i = 0; i < n; i++) {
    ctx.strokeStyle = `hsl(${(360 * i) / n}, 70%, 45%)`;
    ctx.beginPath();
    for (let k = 0; k <= steps; k++) {
      const x = (k / steps) * canvas.width;
      const y = canvas.height * (1 - traj[k * n + i]);
      k === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    }
    ctx.stroke();
  }
  const last = traj.slice(steps * n);
  const mass = last.reduce((a, x, i) => a + (i + 1) * x, 0);
  out.textContent = [...Array.from(last, (x, i) => `u${i + 1}  ${fmt(x)}`), `Σ i·u_i  ${fmt(mass)}`].join("\n");
}

await init();
$("c-run").onclick = solveCell;
$("s-reset").onclick = resetSim;
$("s-field").onchange = () => sim && drawSim();
$("s-play").onclick = () => {
  if (!sim) resetSim();
  playing = !playing;
  $("s-play").textContent = playing ? "Pause" : "Play";
  if (playing) requestAnimationFrame(tick);
};
$("k-run").onclick = integrate;
solveCell();
resetSim();
integrate();
