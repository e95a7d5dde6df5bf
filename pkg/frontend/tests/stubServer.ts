/** In-memory fetch-compatible stub of the engine API, implementing the same
 * semantics the real service has: explanation required server-side, ledger
 * increments on tag, proposal approval registers a child version. */

import type { FetchLike } from "../src/api.js";
import type {
  PromptVersion,
  Proposal,
  ReviewItem,
  Scoreboard,
  Session,
} from "../src/types.js";

export interface StubState {
  token: string;
  rounds: Map<number, Scoreboard>;
  sessions: Map<string, Session>;
  proposals: Map<string, Proposal>;
  versions: PromptVersion[];
  ledger: Map<string, number>;
  requests: { method: string; path: string; body?: unknown }[];
}

export function makeItem(id: string, status: ReviewItem["status"] = "needs_human"): ReviewItem {
  return {
    item_id: id,
    status,
    question: `Which detail does ${id} show?`,
    choices: ["alpha", "beta", "gamma", "delta"],
    answer: "A",
    rationale: "The captions support alpha.",
    image_id: "7",
    checks: { bbox: "skip", removability: "pass", structure: "pass", type: "skip" },
  };
}

export function makeStub(): StubState {
  const scoreboard = (round: number, base: number): Scoreboard => ({
    round,
    entries: {
      "image scene": { correct: Math.round(base * 100), total: 100, score: base },
      "image style": { correct: Math.round((base + 0.1) * 100), total: 100, score: base + 0.1 },
    },
  });
  const session: Session = {
    session_id: "s1",
    template_id: "generation",
    current_version: 2,
    starting_version: 2,
    state: "BatchReview",
    batch_size: 4,
    threshold: 0.1,
    history: [],
    batch: [makeItem("s1-item-0000"), makeItem("s1-item-0001"), makeItem("s1-item-0002")],
    pending_proposal_id: "prop-1",
  };
  const proposal: Proposal = {
    proposal_id: "prop-1",
    kind: "conflict",
    base_version: 2,
    suggested_body: "base body\nextra rule",
    llm_rationale: "Problem: ambiguous rule.",
    status: "pending",
    decider: null,
    session_id: "s1",
  };
  return {
    token: "stub-token",
    rounds: new Map([
      [1, scoreboard(1, 0.5)],
      [2, scoreboard(2, 0.56)],
    ]),
    sessions: new Map([[session.session_id, session]]),
    proposals: new Map([[proposal.proposal_id, proposal]]),
    versions: [
      {
        template_id: "generation", version: 2, body: "base body", status: "active",
        parent_version: 1, changelog: null, proposal_id: null,
      },
    ],
    ledger: new Map(),
    requests: [],
  };
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export function stubFetch(state: StubState): FetchLike {
  return async (url, init) => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    state.requests.push({ method, path, body });

    const auth = (init?.headers as Record<string, string> | undefined)?.authorization;
    if (auth !== `Bearer ${state.token}`) {
      return json(401, { detail: "missing or invalid bearer token" });
    }

    let match: RegExpMatchArray | null;

    if (path === "/api/rounds") {
      return json(200, [...state.rounds.keys()].sort((a, b) => a - b));
    }
    if ((match = path.match(/^\/api\/scoreboard\/(\d+)$/))) {
      const board = state.rounds.get(Number(match[1]));
      return board ? json(200, board) : json(404, { detail: "no scoreboard" });
    }
    if (path === "/api/ipo/sessions" && method === "GET") {
      return json(200, [...state.sessions.values()]);
    }
    if ((match = path.match(/^\/api\/ipo\/sessions\/([^/]+)\/batch$/))) {
      const session = state.sessions.get(match[1] as string);
      return session ? json(200, session.batch) : json(404, { detail: "unknown session" });
    }
    if ((match = path.match(/^\/api\/ipo\/sessions\/([^/]+)\/failures$/))) {
      const session = state.sessions.get(match[1] as string);
      if (!session) return json(404, { detail: "unknown session" });
      if (!body.explanation || !body.explanation.trim()) {
        return json(400, { detail: "a human failure tag needs a non-empty explanation" });
      }
      const item = session.batch.find((i) => i.item_id === body.qa_ref);
      if (!item) return json(400, { detail: `unknown item ${body.qa_ref}` });
      if (item.status !== "needs_human" && item.status !== "reviewed_ok") {
        return json(409, { detail: `item ${body.qa_ref} is ${item.status}` });
      }
      item.status = "tagged";
      state.ledger.set(body.failure_type, (state.ledger.get(body.failure_type) ?? 0) + 1);
      return json(200, { qa_ref: body.qa_ref, failure_type: body.failure_type });
    }
    if ((match = path.match(/^\/api\/ipo\/sessions\/([^/]+)\/clear$/))) {
      const session = state.sessions.get(match[1] as string);
      if (!session) return json(404, { detail: "unknown session" });
      const item = session.batch.find((i) => i.item_id === body.qa_ref);
      if (!item) return json(400, { detail: `unknown item ${body.qa_ref}` });
      if (item.status === "auto_rejected") {
        return json(409, { detail: "auto-rejected items cannot be cleared" });
      }
      item.status = "reviewed_ok";
      return json(200, { ok: true });
    }
    if ((match = path.match(/^\/api\/ipo\/sessions\/([^/]+)\/step$/))) {
      const session = state.sessions.get(match[1] as string);
      if (!session) return json(404, { detail: "unknown session" });
      if (session.batch.some((i) => i.status === "needs_human")) {
        return json(409, { detail: "items still await review" });
      }
      const failures = session.batch.filter(
        (i) => i.status === "tagged" || i.status === "auto_rejected",
      ).length;
      const rate = failures / session.batch.length;
      session.state = rate <= session.threshold ? "Converged" : "Correction";
      session.history.push({
        version: session.current_version, batch_size: session.batch.length, failure_rate: rate,
      });
      return json(200, { state: session.state, failure_rate: rate, proposal: null });
    }
    if (path === "/api/proposals" && method === "GET") {
      return json(200, [...state.proposals.values()]);
    }
    if ((match = path.match(/^\/api\/proposals\/([^/]+)\/decision$/))) {
      const proposal = state.proposals.get(match[1] as string);
      if (!proposal) return json(400, { detail: "unknown proposal" });
      if (proposal.status !== "pending") {
        return json(409, { detail: `proposal already ${proposal.status}` });
      }
      proposal.status = body.approve ? "approved" : "rejected";
      proposal.decider = body.decider;
      if (body.approve && proposal.suggested_body !== null) {
        const version = Math.max(...state.versions.map((v) => v.version)) + 1;
        state.versions.push({
          template_id: "generation", version, body: proposal.suggested_body,
          status: "draft", parent_version: proposal.base_version,
          changelog: `proposal ${proposal.proposal_id}`, proposal_id: proposal.proposal_id,
        });
      }
      return json(200, proposal);
    }
    if ((match = path.match(/^\/api\/prompts\/([^/]+)\/versions$/))) {
      return json(200, state.versions);
    }
    if ((match = path.match(/^\/api\/prompts\/([^/]+)\/diff\?from=(\d+)&to=(\d+)$/))) {
      const from = state.versions.find((v) => v.version === Number(match![2]));
      const to = state.versions.find((v) => v.version === Number(match![3]));
      if (!from || !to) return json(404, { detail: "unknown version" });
      const diff =
        from.body === to.body
          ? []
          : [`--- v${from.version}`, `+++ v${to.version}`,
             ...to.body.split("\n").filter((l) => !from.body.includes(l)).map((l) => `+${l}`)];
      return json(200, { diff });
    }
    if (path === "/api/ledger/stats") {
      return json(200, Object.fromEntries(state.ledger));
    }
    return json(404, { detail: `no stub route for ${method} ${path}` });
  };
}
