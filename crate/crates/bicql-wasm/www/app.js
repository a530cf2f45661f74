// Drives the DemoSession exported by the wasm module. Build the module with
//   wasm-pack build --target web --out-dir www/pkg
// then serve this directory.

import init, { DemoSession } from "./pkg/bicql_wasm.js";

const $ = (id) => document.getElementById(id);
const status = (msg) => { $("status").textContent = msg; };

let session = null;
let running = false;
let history = { score: [], delta: [], ll: [] };

function params() {
  const size = Number($("size").value);
  return {
    width: size,
    height: size,
    goal_x: size - 1,
    goal_y: size - 1,
    slip_prob: Number($("slip").value),
    step_reward: -0.01,
    goal_reward: 1.0,
    discount: Number($("discount").value),
    uniform_mix: Number($("mix").value),
    n_episodes: Number($("episodes").value),
    horizon: 50,
    n_expert_trajectories: Number($("trajs").value),
    seed: Number($("seed").value),
    alpha: Number($("alpha").value),
    reward_source: $("source").value,
    max_outer_iters: 600,
  };
}

// Blue-white-red diverging heatmap, symmetric around zero.
function cellColor(v, lo, hi) {
  const span = Math.max(Math.abs(lo), Math.abs(hi), 1e-12);
  const t = Math.max(-1, Math.min(1, v / span));
  if (t >= 0) {
    const k = 1 - t;
    return `rgb(${255},${Math.round(90 + 165 * k)},${Math.round(90 + 165 * k)})`;
  }
  const k = 1 + t;
  return `rgb(${Math.round(90 + 165 * k)},${Math.round(90 + 165 * k)},${255})`;
}

function drawGrid(canvas, cells, arrows, goal) {
  const n = session.width();
  const ctx = canvas.getContext("2d");
  const cell = canvas.width / n;
  const lo = Math.min(...cells);
  const hi = Math.max(...cells);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (let y = 0; y < n; y++) {
    for (let x = 0; x < n; x++) {
      const idx = y * n + x;
      ctx.fillStyle = cellColor(cells[idx], lo, hi);
      ctx.fillRect(x * cell, y * cell, cell, cell);
      ctx.strokeStyle = "#ddd";
      ctx.strokeRect(x * cell, y * cell, cell, cell);
    }
  }
  if (arrows) {
    ctx.fillStyle = "#222";
    const glyphs = ["↑", "↓", "←", "→"]; // up, down, left, right
    ctx.font = `${Math.round(cell * 0.55)}px sans-serif`;
    ctx.textAlign = "center";
    ctx.textBaseline = "middle";
    for (let y = 0; y < n; y++) {
      for (let x = 0; x < n; x++) {
        const idx = y * n + x;
        if (idx === goal) continue;
        ctx.fillText(glyphs[arrows[idx]], (x + 0.5) * cell, (y + 0.55) * cell);
      }
    }
  }
  const gx = goal % n, gy = Math.floor(goal / n);
  ctx.strokeStyle = "#000";
  ctx.lineWidth = 2;
  ctx.strokeRect(gx * cell + 1, gy * cell + 1, cell - 2, cell - 2);
  ctx.lineWidth = 1;
}

function drawChart() {
  const canvas = $("chart");
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#ccc";
  ctx.strokeRect(0, 0, w, h);
  const n = history.score.length;
  if (n < 2) return;

  const polyline = (values, color, lo, hi) => {
    ctx.strokeStyle = color;
    ctx.beginPath();
    values.forEach((v, i) => {
      const x = (i / (n - 1)) * (w - 10) + 5;
      const y = h - 5 - ((v - lo) / (hi - lo || 1)) * (h - 10);
      if (i === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
    });
    ctx.stroke();
  };
  polyline(history.score, "#c33", 0, 1.05);
  const logd = history.delta.map((d) => Math.log10(Math.max(d, 1e-12)));
  polyline(logd, "#36c", Math.min(...logd), Math.max(...logd));
  polyline(history.ll, "#393", Math.min(...history.ll), Math.max(...history.ll));
}

function redraw() {
  drawGrid($("truemap"), session.true_reward_cells(), session.expert_arrows(), session.goal_index());
  drawGrid($("learnedmap"), session.learned_reward_cells(), session.learned_arrows(), session.goal_index());
  drawGrid($("valuemap"), session.learned_value_cells(), null, session.goal_index());
  drawChart();
}

function generate() {
  running = false;
  $("run").textContent = "Run";
  try {
    session = new DemoSession(JSON.stringify(params()));
  } catch (err) {
    status(`error: ${err}`);
    return;
  }
  history = { score: [], delta: [], ll: [] };
  $("run").disabled = false;
  $("evaluate").disabled = false;
  $("evalout").textContent = "press Evaluate after training";
  status("environment and datasets ready — press Run");
  redraw();
}

function tick() {
  if (!running || !session) return;
  const stats = JSON.parse(session.step(5));
  history.score.push(stats.normalized_score);
  history.delta.push(stats.delta_theta);
  history.ll.push(stats.expert_ll);
  redraw();
  status(
    `iteration ${stats.iter} — score ${stats.normalized_score.toFixed(3)}, ` +
    `‖Δθ‖∞ ${stats.delta_theta.toExponential(2)}` +
    (stats.converged ? " — converged" : "")
  );
  if (stats.converged || stats.iter >= params().max_outer_iters) {
    running = false;
    $("run").textContent = "Run";
    return;
  }
  requestAnimationFrame(tick);
}

function evaluate() {
  if (!session) return;
  const e = JSON.parse(session.evaluate());
  $("evalout").textContent =
    `normalized score        ${e.normalized_score.toFixed(4)}\n` +
    `learned return          ${e.learned_return.toFixed(4)}\n` +
    `expert return           ${e.expert_return.toFixed(4)}\n` +
    `uniform-policy return   ${e.uniform_return.toFixed(4)}\n` +
    `behavioral cloning      ${e.bc_return.toFixed(4)}\n` +
    `expert greedy fraction  ${e.expert_greedy_fraction.toFixed(3)}\n` +
    `reward pearson          ${e.reward_pearson === null ? "absent" : e.reward_pearson.toFixed(3)}\n` +
    `covered cells           ${e.covered_cells}\n` +
    `iterations              ${e.iterations}${e.converged ? " (converged)" : ""}`;
}

async function main() {
  await init();
  $("generate").addEventListener("click", generate);
  $("run").addEventListener("click", () => {
    if (!session) return;
    running = !running;
    $("run").textContent = running ? "Pause" : "Run";
    if (running) requestAnimationFrame(tick);
  });
  $("evaluate").addEventListener("click", evaluate);
  status("module loaded — press Generate");
  generate();
}

main();
