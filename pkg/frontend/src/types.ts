/** Wire types mirroring the engine's HTTP API. The console never invents
 * state: everything here is exactly what the server sends. */

export type FailureType =
  | "incorrect_bounding_box"
  | "illusion"
  | "incorrect_3d_perception"
  | "wrong_question_type"
  | "illogical_question";

export const FAILURE_TYPES: FailureType[] = [
  "incorrect_bounding_box",
  "illusion",
  "incorrect_3d_perception",
  "wrong_question_type",
  "illogical_question",
];

export type ReviewStatus = "needs_human" | "auto_rejected" | "tagged" | "reviewed_ok";

export interface ReviewItem {
  item_id: string;
  status: ReviewStatus;
  question: string;
  choices: string[];
  answer: string;
  rationale: string | null;
  image_id: string | null;
  checks: Record<string, string>;
  parse_failure?: string | null;
}

export interface Session {
  session_id: string;
  template_id: string;
  current_version: number;
  starting_version: number;
  state: "ConflictCheck" | "BatchReview" | "Correction" | "Converged";
  batch_size: number;
  threshold: number;
  history: { version: number; batch_size: number; failure_rate: number }[];
  batch: ReviewItem[];
  pending_proposal_id: string | null;
}

export interface Proposal {
  proposal_id: string;
  kind: "conflict" | "correction";
  base_version: number;
  suggested_body: string | null;
  llm_rationale: string;
  status: "pending" | "approved" | "rejected" | "unparseable";
  decider: string | null;
  session_id: string;
}

export interface PromptVersion {
  template_id: string;
  version: number;
  body: string;
  status: "draft" | "active" | "retired";
  parent_version: number | null;
  changelog: string | null;
  proposal_id: string | null;
}

export interface DimensionScore {
  correct: number;
  total: number;
  score: number;
}

export interface Scoreboard {
  round: number;
  entries: Record<string, DimensionScore>;
}

export interface RoundManifest {
  round: number;
  scoreboard_before: Scoreboard;
  scoreboard_after: Scoreboard;
  seeds_built: number;
  generated: number;
  parse_failures: number;
  accepted: number;
  rejected_by_type: Record<string, number>;
  dataset_path: string;
  merged_dataset_path: string;
  active_prompt_version: number;
  cost: number;
}

export interface Annotation {
  image_id: string;
  width: number;
  height: number;
  captions: string[];
  objects: { category: string; bbox: number[] }[];
  rendered: string;
}

export type LedgerStats = Record<string, number>;
