/** Batch-review screen logic: keyboard-first triage over one session's review
 * batch. All verdicts come from the server; the console only reflects acks. */

import { ApiClient, ApiError } from "./api.js";
import type { FailureType, ReviewItem } from "./types.js";

/** One-keystroke tagging across the five failure types, plus clear. */
export const FAILURE_KEYS: Record<string, FailureType> = {
  "1": "incorrect_bounding_box",
  "2": "illusion",
  "3": "incorrect_3d_perception",
  "4": "wrong_question_type",
  "5": "illogical_question",
};

export interface ReviewState {
  sessionId: string;
  tagger: string;
  items: ReviewItem[];
  cursor: number;
  /** failure type picked for the focused item; explanation still required */
  pendingTag: FailureType | null;
  explanation: string;
  error: string | null;
}

export function initialState(sessionId: string, tagger: string): ReviewState {
  return {
    sessionId,
    tagger,
    items: [],
    cursor: 0,
    pendingTag: null,
    explanation: "",
    error: null,
  };
}

export function focusedItem(state: ReviewState): ReviewItem | null {
  return state.items[state.cursor] ?? null;
}

/** A tag may only be submitted with a non-empty explanation. */
export function canSubmitTag(state: ReviewState): boolean {
  return state.pendingTag !== null && state.explanation.trim().length > 0;
}

/** The rate/step control unlocks only once nothing awaits review. */
export function allReviewed(items: ReviewItem[]): boolean {
  return items.length > 0 && items.every((item) => item.status !== "needs_human");
}

export type KeyAction =
  | { kind: "move"; cursor: number }
  | { kind: "pick_tag"; failureType: FailureType }
  | { kind: "clear" }
  | { kind: "none" };

/** Pure keyboard dispatch; the caller performs the resulting action. */
export function handleKey(state: ReviewState, key: string): KeyAction {
  if (key === "j" || key === "ArrowDown") {
    return { kind: "move", cursor: Math.min(state.cursor + 1, state.items.length - 1) };
  }
  if (key === "k" || key === "ArrowUp") {
    return { kind: "move", cursor: Math.max(state.cursor - 1, 0) };
  }
  const failureType = FAILURE_KEYS[key];
  if (failureType) {
    return { kind: "pick_tag", failureType };
  }
  if (key === "c") {
    return { kind: "clear" };
  }
  return { kind: "none" };
}

export async function loadBatch(api: ApiClient, state: ReviewState): Promise<ReviewState> {
  const items = await api.batch(state.sessionId);
  return {
    ...state,
    items,
    cursor: Math.min(state.cursor, Math.max(items.length - 1, 0)),
    error: null,
  };
}

/** Submit the pending tag; the item only shows as tagged after the server
 * acknowledges. A 409 means our snapshot is stale: refetch and report. */
export async function submitTag(api: ApiClient, state: ReviewState): Promise<ReviewState> {
  const item = focusedItem(state);
  if (item === null) {
    return { ...state, error: "no item focused" };
  }
  if (!canSubmitTag(state)) {
    return { ...state, error: "an explanation is required to tag a failure" };
  }
  try {
    await api.tagFailure(
      state.sessionId,
      item.item_id,
      state.pendingTag as FailureType,
      state.explanation.trim(),
      state.tagger,
    );
  } catch (error) {
    if (error instanceof ApiError && error.isStale) {
      const refreshed = await loadBatch(api, state);
      return { ...refreshed, error: `stale state, batch refreshed: ${error.detail}` };
    }
    throw error;
  }
  const refreshed = await loadBatch(api, state);
  return { ...refreshed, pendingTag: null, explanation: "" };
}

export async function clearFocused(api: ApiClient, state: ReviewState): Promise<ReviewState> {
  const item = focusedItem(state);
  if (item === null) {
    return { ...state, error: "no item focused" };
  }
  try {
    await api.clearItem(state.sessionId, item.item_id, state.tagger);
  } catch (error) {
    if (error instanceof ApiError && error.isStale) {
      const refreshed = await loadBatch(api, state);
      return { ...refreshed, error: `stale state, batch refreshed: ${error.detail}` };
    }
    throw error;
  }
  return loadBatch(api, state);
}
