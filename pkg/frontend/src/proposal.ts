/** Proposal review: server-side diff plus approve/reject. Diffs are never
 * recomputed client-side — the diff endpoint is the single source of truth. */

import { ApiClient } from "./api.js";
import type { PromptVersion, Proposal } from "./types.js";

/** Decision controls lock as soon as the proposal leaves "pending". */
export function decisionEnabled(proposal: Proposal): boolean {
  return proposal.status === "pending";
}

export interface ProposalView {
  proposal: Proposal;
  /** server diff of base version vs suggested body's registered child, or
   * null while the proposal is undecided (no child version exists yet) */
  diff: string[] | null;
  newVersion: PromptVersion | null;
}

export interface DecisionResult {
  proposal: Proposal;
  newVersion: PromptVersion | null;
  diff: string[];
}

/** Approve or reject; on approval, fetch the resulting version and its server
 * diff against the base so the UI can show exactly what changed. */
export async function decide(
  api: ApiClient,
  proposal: Proposal,
  approve: boolean,
  decider: string,
  templateId: string,
): Promise<DecisionResult> {
  if (!decisionEnabled(proposal)) {
    throw new Error(`proposal ${proposal.proposal_id} is already ${proposal.status}`);
  }
  const decided = await api.decide(proposal.proposal_id, approve, decider);
  if (!approve) {
    return { proposal: decided, newVersion: null, diff: [] };
  }
  const versions = await api.versions(templateId);
  const child = versions.find((v) => v.proposal_id === proposal.proposal_id) ?? null;
  const diff = child
    ? await api.diff(templateId, proposal.base_version, child.version)
    : [];
  return { proposal: decided, newVersion: child, diff };
}
