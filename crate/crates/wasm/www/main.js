import init, { explain, verify, bias, knn, vocabulary } from "./pkg/ore_wasm.js";

const $ = (id) => document.getElementById(id);
let fixed = new Set();

function call(f, ...args) {
  try {
    return JSON.parse(f(...args));
  } catch (e) {
    return { error: e.message ?? String(e) };
  }
}

function showError(el, res) {
  el.className = "error";
  el.textContent = res.error;
}

function tokens(list, onClick) {
  const div = document.createElement("div");
  div.className = "tokens";
  list.forEach((t, i) => {
    const span = document.createElement("span");
    span.textContent = t.word;
    if (t.marked) span.className = "marked";
    if (onClick) span.onclick = () => onClick(i);
    div.append(span);
  });
  return div;
}

function drawVerifyTokens() {
  const words = $("text").value.trim().split(/\s+/).filter(Boolean);
  const list = words.map((word, i) => ({ word, marked: fixed.has(i) }));
  $("verify-tokens").replaceChildren(tokens(list, (i) => {
    fixed.has(i) ? fixed.delete(i) : fixed.add(i);
    drawVerifyTokens();
  }));
}

function onExplain() {
  const out = $("explain-out");
  const res = call(explain, $("text").value, Number($("eps").value), $("solver").value);
  if (res.error) return showError(out, res);
  out.className = "";
  const e = res.explanation;
  out.replaceChildren(
    tokens(e.tokens),
    document.createTextNode(`Prediction ${res.prediction}; cost ${e.cost}; ${e.queries} robustness queries.`),
  );
  fixed = new Set(e.indices);
  drawVerifyTokens();
}

function onVerify() {
  const out = $("verify-out");
  const res = call(verify, $("text").value, Number($("eps").value), Uint32Array.from(fixed));
  if (res.error) return showError(out, res);
  out.className = "";
  out.textContent = res.verdict === "counterexample"
    ? `Not robust: moving words ${res.moved.join(", ")} flips ${res.prediction} to ${res.flipped_to}.`
    : `Verdict: ${res.verdict} (prediction ${res.prediction}).`;
}

function onBias() {
  const out = $("verify-out");
  const res = call(bias, $("text").value, Number($("eps").value), Uint32Array.from(fixed));
  if (res.error) return showError(out, res);
  out.className = "";
  if (!res.biased) {
    out.textContent = "Not biased: some robust explanation avoids the selected words.";
  } else if (res.witness) {
    out.replaceChildren(document.createTextNode("Biased: every explanation needs a selected word, e.g. "), tokens(res.witness.tokens));
  } else {
    out.textContent = `Biased: perturbing only the selected words flips the prediction (moved ${res.moved.join(", ")}).`;
  }
}

function onKnn() {
  const res = call(knn, $("word").value.trim(), Number($("k").value), $("metric").value);
  $("knn-out").textContent = res.error ?? `neighbours: ${res.neighbours.join(", ")}\nbox lo: [${res.lo}]\nbox hi: [${res.hi}]`;
}

await init();
const vocab = call(vocabulary);
$("vocab").textContent = `${vocab.words.join(" ")} (up to ${vocab.max_words} words)`;
$("text").addEventListener("input", () => { fixed.clear(); drawVerifyTokens(); });
$("explain").onclick = onExplain;
$("verify").onclick = onVerify;
$("bias").onclick = onBias;
$("knn").onclick = onKnn;
drawVerifyTokens();
