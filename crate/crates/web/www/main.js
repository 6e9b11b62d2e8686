import init, { Demo, prior_matrix } from "./pkg/vocabsel_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

const STRATEGIES = [
  ["word_align", "#2e7d32"],
  ["cooccur", "#1565c0"],
  ["pmi", "#c62828"],
];
const KS = new Uint32Array([1, 2, 3, 5, 8, 12, 20, 30, 50, 75, 100]);

let demo = null;

function setStatus(text) {
  $("status").textContent = text;
}

function train() {
  if (demo) {
    demo.free();
    demo = null;
  }
  setStatus("training…");
  $("curve").disabled = $("select").disabled = true;
  // Let the status repaint before the synchronous training call.
  setTimeout(() => {
    const t0 = performance.now();
    try {
      demo = new Demo(num("pairs"), num("vocab"), BigInt(num("seed")));
    } catch (e) {
      setStatus(`error: ${e.message ?? e}`);
      return;
    }
    const secs = ((performance.now() - t0) / 1000).toFixed(1);
    setStatus(`${demo.train_pairs()} training and ${demo.test_pairs()} held-out pairs, ` +
      `${demo.tgt_vocab_size()} target types, trained in ${secs} s`);
    $("sent").max = demo.test_pairs() - 1;
    $("curve").disabled = $("select").disabled = false;
    plotCurves();
    showSelection();
  }, 20);
}

function plotCurves() {
  if (!demo) return;
  const series = [];
  for (const [name, color] of STRATEGIES) {
    let flat;
    try {
      flat = demo.coverage_curve(name, KS, num("common"), num("batch"));
    } catch (e) {
      setStatus(`error: ${e.message ?? e}`);
      return;
    }
    const pts = [];
    for (let i = 0; i < flat.length; i += 2) pts.push([flat[i], flat[i + 1], KS[i / 2]]);
    series.push({ name, color, pts });
  }
  drawCurves(series);
}

function drawCurves(series) {
  const cv = $("curve-canvas");
  const ctx = cv.getContext("2d");
  const W = cv.width, H = cv.height, L = 60, R = 20, T = 15, B = 45;
  ctx.clearRect(0, 0, W, H);
  const xmax = Math.max(...series.flatMap((s) => s.pts.map((p) => p[0])), 1);
  const x = (v) => L + (Math.log(v) / Math.log(xmax * 1.1)) * (W - L - R);
  const y = (v) => H - B - v * (H - T - B);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#444";
  ctx.font = "12px system-ui";
  ctx.beginPath();
  ctx.moveTo(L, T);
  ctx.lineTo(L, H - B);
  ctx.lineTo(W - R, H - B);
  ctx.stroke();
  ctx.textAlign = "right";
  for (let c = 0; c <= 1.0001; c += 0.2) {
    ctx.fillText(c.toFixed(1), L - 6, y(c) + 4);
    ctx.strokeStyle = "#eee";
    ctx.beginPath();
    ctx.moveTo(L + 1, y(c));
    ctx.lineTo(W - R, y(c));
    ctx.stroke();
  }
  ctx.textAlign = "center";
  for (let v = 1; v <= xmax * 1.1; v *= 10) {
    for (const m of [1, 2, 5]) {
      const t = v * m;
      if (t > xmax * 1.1) break;
      ctx.fillText(String(t), x(t), H - B + 16);
    }
  }
  ctx.fillText("average vocabulary size (log scale)", (L + W - R) / 2, H - 8);
  ctx.save();
  ctx.translate(16, (T + H - B) / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText("coverage", 0, 0);
  ctx.restore();

  for (const s of series) {
    ctx.strokeStyle = ctx.fillStyle = s.color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    s.pts.forEach(([a, c], i) => (i ? ctx.lineTo(x(a), y(c)) : ctx.moveTo(x(a), y(c))));
    ctx.stroke();
    for (const [a, c] of s.pts) {
      ctx.beginPath();
      ctx.arc(x(a), y(c), 3, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
  ctx.lineWidth = 1;
  $("legend").innerHTML = series
    .map((s) => {
      const last = s.pts[s.pts.length - 1];
      return `<span style="color:${s.color}">■ ${s.name}</span>` +
        `<span>k=${last[2]}: ${last[0].toFixed(0)} words, ${(100 * last[1]).toFixed(1)}%</span>`;
    })
    .join("");
}

function showSelection() {
  if (!demo) return;
  const i = Math.min(Math.max(num("sent"), 0), demo.test_pairs() - 1);
  const src = demo.test_sentence(i);
  const ref = demo.test_reference(i);
  $("src").textContent = src;
  $("ref").textContent = ref;
  let out;
  try {
    out = demo.select($("strategy").value, num("k"), num("sel-common"), src, ref);
  } catch (e) {
    $("sel-summary").textContent = `error: ${e.message ?? e}`;
    return;
  }
  const words = out ? out.split(" ") : [];
  const hits = new Set(words.filter((w) => w.startsWith("+")).map((w) => w.slice(1)));
  const refToks = ref.split(" ");
  const covered = refToks.filter((t) => hits.has(t)).length;
  $("sel-summary").textContent = `${words.length} selected words cover ${covered} of ${refToks.length} reference tokens`;
  const box = $("words");
  box.replaceChildren();
  for (const w of words) {
    const el = document.createElement("span");
    const hit = w.startsWith("+");
    el.textContent = hit ? w.slice(1) : w;
    if (hit) el.className = "hit";
    box.appendChild(el);
  }
}

function drawPrior() {
  const m = Math.max(1, num("m")), n = Math.max(1, num("n"));
  const lambda = num("lambda"), p0 = num("p0");
  $("lambda-v").textContent = lambda;
  $("p0-v").textContent = p0.toFixed(2);
  const p = prior_matrix(m, n, lambda, p0);
  const cv = $("prior-canvas");
  const ctx = cv.getContext("2d");
  ctx.clearRect(0, 0, cv.width, cv.height);
  const L = 40, T = 10;
  const cell = Math.floor(Math.min((cv.width - L - 10) / (n + 1), (cv.height - T - 30) / m));
  const max = Math.max(...p);
  for (let i = 0; i < m; i++) {
    for (let j = 0; j <= n; j++) {
      const v = p[i * (n + 1) + j] / max;
      const shade = Math.round(255 * (1 - v));
      ctx.fillStyle = j === 0 ? `rgb(255,${shade},${shade})` : `rgb(${shade},${shade},255)`;
      ctx.fillRect(L + j * cell, T + i * cell, cell - 1, cell - 1);
    }
  }
  ctx.fillStyle = "#444";
  ctx.font = "11px system-ui";
  ctx.textAlign = "right";
  for (let i = 0; i < m; i++) ctx.fillText(String(i), L - 4, T + i * cell + cell / 2 + 4);
  ctx.textAlign = "center";
  ctx.fillText("∅", L + cell / 2, T + m * cell + 14);
  for (let j = 0; j < n; j++) ctx.fillText(String(j), L + (j + 1.5) * cell, T + m * cell + 14);
}

await init();
setStatus("ready");
$("train").onclick = train;
$("curve").onclick = plotCurves;
$("select").onclick = showSelection;
for (const id of ["sent", "strategy", "k", "sel-common"]) $(id).onchange = showSelection;
for (const id of ["m", "n", "lambda", "p0"]) $(id).oninput = drawPrior;
drawPrior();
train();
