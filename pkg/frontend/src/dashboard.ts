/** Dashboard render model: per-dimension score bars per round and the
 * failure-rate trend per prompt version. Pure data shaping, read-only. */

import type { Scoreboard, Session } from "./types.js";

export interface DimensionRow {
  dimension: string;
  /** score per round, in round order */
  scores: number[];
  /** last minus first round, formatted with an explicit sign */
  delta: number;
  deltaLabel: string;
}

export interface DashboardModel {
  empty: boolean;
  message: string | null;
  rounds: number[];
  rows: DimensionRow[];
}

export function formatDelta(delta: number): string {
  const sign = delta >= 0 ? "+" : "-";
  return `${sign}${Math.abs(delta).toFixed(3)}`;
}

export function buildDashboard(scoreboards: Map<number, Scoreboard>): DashboardModel {
  const rounds = [...scoreboards.keys()].sort((a, b) => a - b);
  if (rounds.length === 0) {
    return { empty: true, message: "No rounds yet — run the engine first.", rounds: [], rows: [] };
  }
  const dimensions = new Set<string>();
  for (const round of rounds) {
    const board = scoreboards.get(round);
    if (board) Object.keys(board.entries).forEach((d) => dimensions.add(d));
  }
  const rows: DimensionRow[] = [...dimensions].sort().map((dimension) => {
    const scores = rounds.map(
      (round) => scoreboards.get(round)?.entries[dimension]?.score ?? 0,
    );
    const first = scores[0] ?? 0;
    const last = scores[scores.length - 1] ?? 0;
    const delta = last - first;
    return { dimension, scores, delta, deltaLabel: formatDelta(delta) };
  });
  return { empty: false, message: null, rounds, rows };
}

export interface RatePoint {
  version: number;
  failureRate: number;
}

/** Failure-rate line per prompt version, drawn from session step history. */
export function failureRateSeries(sessions: Session[]): RatePoint[] {
  const points: RatePoint[] = [];
  for (const session of sessions) {
    for (const entry of session.history) {
      points.push({ version: entry.version, failureRate: entry.failure_rate });
    }
  }
  return points.sort((a, b) => a.version - b.version);
}
