/** DOM wiring: hash-routed views over the pure screen modules. */

import { ApiClient, ApiError } from "./api.js";
import { buildDashboard, failureRateSeries } from "./dashboard.js";
import { decide, decisionEnabled } from "./proposal.js";
import {
  allReviewed,
  canSubmitTag,
  clearFocused,
  focusedItem,
  handleKey,
  initialState,
  loadBatch,
  submitTag,
  type ReviewState,
} from "./review.js";
import type { Proposal, Scoreboard } from "./types.js";

const app = document.getElementById("app") as HTMLElement;

function getApi(): ApiClient {
  const token = localStorage.getItem("engine_token") ?? "";
  const base = localStorage.getItem("engine_base") ?? "";
  return new ApiClient(base, token);
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function showError(error: unknown): void {
  const detail =
    error instanceof ApiError ? error.message : error instanceof Error ? error.message : String(error);
  const banner = document.createElement("div");
  banner.className = "error-banner";
  banner.textContent = detail;
  app.prepend(banner);
}

// -- dashboard ----------------------------------------------------------------

async function renderDashboard(): Promise<void> {
  const api = getApi();
  const rounds = await api.rounds();
  const boards = new Map<number, Scoreboard>();
  for (const round of rounds) {
    boards.set(round, await api.scoreboard(round));
  }
  const model = buildDashboard(boards);
  if (model.empty) {
    app.innerHTML = `<p class="empty">${escapeHtml(model.message ?? "")}</p>`;
    return;
  }
  const sessions = await api.sessions();
  const rates = failureRateSeries(sessions);
  const header = model.rounds.map((r) => `<th>round ${r}</th>`).join("");
  const rows = model.rows
    .map((row) => {
      const cells = row.scores
        .map(
          (s) =>
            `<td><div class="bar" style="width:${(s * 100).toFixed(1)}%"></div>` +
            `${s.toFixed(3)}</td>`,
        )
        .join("");
      return `<tr><td>${escapeHtml(row.dimension)}</td>${cells}<td>${row.deltaLabel}</td></tr>`;
    })
    .join("");
  const rateList = rates
    .map((p) => `<li>v${p.version}: ${(p.failureRate * 100).toFixed(1)}%</li>`)
    .join("");
  app.innerHTML = `
    <h2>Ability by round</h2>
    <table class="scores"><tr><th>dimension</th>${header}<th>&Delta;</th></tr>${rows}</table>
    <h2>Failure rate by prompt version</h2>
    <ul class="rates">${rateList || "<li>no review steps yet</li>"}</ul>`;
}

// -- batch review -------------------------------------------------------------

let review: ReviewState | null = null;

function renderReview(): void {
  if (review === null) return;
  const item = focusedItem(review);
  const list = review.items
    .map((it, i) => {
      const mark = i === review!.cursor ? ">" : "&nbsp;";
      return `<li class="status-${it.status}">${mark} [${it.status}] ${escapeHtml(it.question)}</li>`;
    })
    .join("");
  const stepReady = allReviewed(review.items);
  app.innerHTML = `
    <h2>Session ${escapeHtml(review.sessionId)}</h2>
    <p class="hint">j/k move &middot; 1-5 pick failure type &middot; c clear &middot; Enter submit tag</p>
    <ol class="batch">${list}</ol>
    <div class="detail">
      ${item ? `<p>${escapeHtml(item.question)}</p><p>${item.choices.map(escapeHtml).join(" / ")}</p>` : ""}
      ${item?.image_id ? `<img src="${getApi().imageUrl(item.image_id)}" alt="review image">` : ""}
      <p>pending tag: ${review.pendingTag ?? "none"}</p>
      <input id="explanation" placeholder="why is this a failure? (required)"
             value="${escapeHtml(review.explanation)}">
      <button id="submit-tag" ${canSubmitTag(review) ? "" : "disabled"}>tag failure</button>
      <button id="step" ${stepReady ? "" : "disabled"}>compute rate / step</button>
    </div>
    ${review.error ? `<div class="error-banner">${escapeHtml(review.error)}</div>` : ""}`;

  const input = document.getElementById("explanation") as HTMLInputElement | null;
  input?.addEventListener("input", () => {
    if (review) review = { ...review, explanation: input.value };
    const button = document.getElementById("submit-tag") as HTMLButtonElement | null;
    if (button && review) button.disabled = !canSubmitTag(review);
  });
  document.getElementById("submit-tag")?.addEventListener("click", () => {
    if (review) submitTag(getApi(), review).then((s) => ((review = s), renderReview()), showError);
  });
  document.getElementById("step")?.addEventListener("click", () => {
    if (review) {
      getApi()
        .step(review.sessionId)
        .then((result) => {
          app.innerHTML = `<p>state: ${result.state}, failure rate ${(result.failure_rate * 100).toFixed(1)}%</p>`;
        }, showError);
    }
  });
}

async function openReview(sessionId: string): Promise<void> {
  const tagger = localStorage.getItem("engine_tagger") ?? "console-user";
  review = await loadBatch(getApi(), initialState(sessionId, tagger));
  renderReview();
}

document.addEventListener("keydown", (event) => {
  if (review === null || (event.target as HTMLElement)?.tagName === "INPUT") return;
  const action = handleKey(review, event.key);
  if (action.kind === "move") {
    review = { ...review, cursor: action.cursor };
    renderReview();
  } else if (action.kind === "pick_tag") {
    review = { ...review, pendingTag: action.failureType };
    renderReview();
  } else if (action.kind === "clear") {
    clearFocused(getApi(), review).then((s) => ((review = s), renderReview()), showError);
  }
});

// -- proposals ----------------------------------------------------------------

async function renderProposals(): Promise<void> {
  const api = getApi();
  const proposals = await api.proposals();
  const blocks = await Promise.all(
    proposals.map(async (proposal: Proposal) => {
      const enabled = decisionEnabled(proposal);
      return `
        <div class="proposal" data-id="${proposal.proposal_id}">
          <h3>${proposal.proposal_id} (${proposal.kind}, base v${proposal.base_version}) — ${proposal.status}</h3>
          <pre class="rationale">${escapeHtml(proposal.llm_rationale)}</pre>
          <button class="approve" ${enabled ? "" : "disabled"}>approve</button>
          <button class="reject" ${enabled ? "" : "disabled"}>reject</button>
          <pre class="diff"></pre>
        </div>`;
    }),
  );
  app.innerHTML = `<h2>Proposals</h2>${blocks.join("")}`;
  for (const element of Array.from(app.querySelectorAll<HTMLElement>(".proposal"))) {
    const id = element.dataset.id as string;
    const proposal = proposals.find((p) => p.proposal_id === id) as Proposal;
    const decider = localStorage.getItem("engine_tagger") ?? "console-user";
    const act = (approve: boolean) =>
      decide(api, proposal, approve, decider, "generation").then((result) => {
        const diffBox = element.querySelector(".diff") as HTMLElement;
        diffBox.textContent = result.diff.join("\n") || "(no diff)";
        renderProposals().catch(showError);
      }, showError);
    element.querySelector(".approve")?.addEventListener("click", () => act(true));
    element.querySelector(".reject")?.addEventListener("click", () => act(false));
  }
}

// -- routing ------------------------------------------------------------------

function route(): void {
  review = null;
  const hash = location.hash || "#/dashboard";
  if (hash.startsWith("#/session/")) {
    openReview(hash.slice("#/session/".length)).catch(showError);
  } else if (hash === "#/proposals") {
    renderProposals().catch(showError);
  } else {
    renderDashboard().catch(showError);
  }
}

window.addEventListener("hashchange", route);
route();
