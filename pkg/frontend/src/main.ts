/** Browser wiring: render loop, keyboard listener, mouse fallbacks. */

import { HttpReviewApi, REMOVAL_REASONS, type RemovalReason } from "./api.js";
import { decodeKey } from "./keyboard.js";
import { ReviewSession, makeNonce } from "./session.js";

const params = new URLSearchParams(location.search);
const apiBase = params.get("api") ?? "http://127.0.0.1:8765";
const reviewer = params.get("reviewer") ?? `reviewer-${makeNonce().slice(0, 8)}`;

const api = new HttpReviewApi(apiBase);
const session = new ReviewSession(api, reviewer, { onChange: render });

const root = document.getElementById("app")!;
let finalizeResult = "";

function esc(s: string): string {
  return s.replace(/[&<>"]/g, (c) =>
    c === "&" ? "&amp;" : c === "<" ? "&lt;" : c === ">" ? "&gt;" : "&quot;",
  );
}

function badge(imageId: string): string {
  const d = session.decisionFor(imageId);
  if (!d) return "·";
  if (!d.synced) return "~";
  return d.status === "kept" ? "✓" : "✗";
}

function statsBlock(): string {
  const s = session.stats;
  if (!s) return "<p>no stats yet</p>";
  const reasons = Object.entries(s.by_reason)
    .map(([r, n]) => `<li>${esc(r)}: ${n}</li>`)
    .join("");
  return `
    <table class="stats">
      <tr><td>total</td><td>${s.total}</td></tr>
      <tr><td>kept</td><td>${s.kept}</td></tr>
      <tr><td>removed</td><td>${s.removed}</td></tr>
      <tr><td>pending</td><td>${s.pending}</td></tr>
      <tr><td>leased</td><td>${s.leased}</td></tr>
    </table>
    <ul class="reasons">${reasons}</ul>`;
}

function render(): void {
  const offlineBar = session.offline
    ? `<div class="offline">offline · ${session.pendingSync} verdict(s) waiting
         <button id="retry">retry now</button></div>`
    : "";
  const rejectedBar = session.rejected.length
    ? `<div class="rejected">${session.rejected.length} verdict(s) rejected by the
         server; see console</div>`
    : "";

  if (session.phase === "done") {
    root.innerHTML = `
      ${offlineBar}${rejectedBar}
      <div class="done">
        <h2>queue finished</h2>
        ${statsBlock()}
        <button id="finalize">finalize</button>
        <pre class="finalize-out">${esc(finalizeResult)}</pre>
      </div>`;
    wireCommon();
    document.getElementById("finalize")?.addEventListener("click", async () => {
      try {
        const report = await api.finalize(false);
        finalizeResult = JSON.stringify(report.counts, null, 2);
      } catch (err) {
        finalizeResult = err instanceof Error ? err.message : String(err);
      }
      render();
    });
    return;
  }

  const item = session.current;
  const strip = session.batch
    .map((it, i) => {
      const cls = i === session.cursor ? "cell current" : "cell";
      return `<button class="${cls}" data-jump="${i}"
        title="${esc(it.image_id)}">${badge(it.image_id)}</button>`;
    })
    .join("");

  const reasonButtons =
    session.phase === "awaiting-reason"
      ? `<div class="reason-row">${REMOVAL_REASONS.map(
          (r) => `<button data-reason="${r}">${esc(r)}</button>`,
        ).join("")}<button id="cancel-remove">cancel</button></div>`
      : "";

  root.innerHTML = `
    ${offlineBar}${rejectedBar}
    <header>
      <span class="who">${esc(session.reviewer)}</span>
      <span class="pos">${session.batch.length ? session.cursor + 1 : 0}/${session.batch.length}</span>
      <span class="decided">${session.decidedCount} decided this session</span>
      <span class="sync">${session.pendingSync ? `${session.pendingSync} unsynced` : "synced"}</span>
    </header>
    <div class="viewport ${session.zoomToFit ? "fit" : "native"}">
      ${
        item
          ? `<img src="${esc(api.imageUrl(item))}" alt="${esc(item.image_id)}">`
          : "<p>nothing loaded</p>"
      }
    </div>
    <div class="controls">
      <button id="keep">keep (K)</button>
      <button id="remove">remove (R)</button>
      <button id="zoom">zoom (Z)</button>
    </div>
    ${reasonButtons}
    <div class="hint">${esc(session.hint)}</div>
    <div class="strip">${strip}</div>`;

  wireCommon();
  document.getElementById("keep")?.addEventListener("click", () => void session.keep());
  document.getElementById("remove")?.addEventListener("click", () => session.beginRemove());
  document.getElementById("zoom")?.addEventListener("click", () => void session.handleKey("z"));
  document.getElementById("cancel-remove")?.addEventListener("click", () => session.cancelRemove());
  for (const el of root.querySelectorAll<HTMLButtonElement>("[data-reason]")) {
    el.addEventListener("click", () =>
      void session.removeWith(el.dataset.reason as RemovalReason),
    );
  }
  for (const el of root.querySelectorAll<HTMLButtonElement>("[data-jump]")) {
    el.addEventListener("click", () =>
      session.move(Number(el.dataset.jump) - session.cursor),
    );
  }
}

function wireCommon(): void {
  document.getElementById("retry")?.addEventListener("click", () => void session.reconnect());
}

document.addEventListener("keydown", (e) => {
  if (e.ctrlKey || e.metaKey || e.altKey) return;
  // decode synchronously: preventDefault is a no-op once the task yields
  const action = decodeKey(e.key, session.phase === "awaiting-reason");
  if (action.kind !== "none") e.preventDefault();
  void session.handleKey(e.key);
});

window.addEventListener("online", () => void session.reconnect());

render();
void session.start();
