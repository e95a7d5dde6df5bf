import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { makeStub, stubFetch } from "./stubServer.js";

function client(state = makeStub()) {
  return { state, api: new ApiClient("http://engine", state.token, stubFetch(state)) };
}

describe("ApiClient", () => {
  it("sends the bearer token on every request", async () => {
    const { state, api } = client();
    await api.rounds();
    expect(state.requests).toHaveLength(1);
    const bad = new ApiClient("http://engine", "wrong", stubFetch(state));
    await expect(bad.rounds()).rejects.toMatchObject({ status: 401 });
  });

  it("surfaces server error details, never swallows them", async () => {
    const { api } = client();
    const error = await api.scoreboard(99).catch((e) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect(error.status).toBe(404);
    expect(error.message).toContain("no scoreboard");
  });

  it("marks 409 responses as stale-state conflicts", async () => {
    const { state, api } = client();
    const session = state.sessions.get("s1")!;
    session.batch[0]!.status = "auto_rejected";
    const error = await api
      .clearItem("s1", "s1-item-0000", "alice")
      .catch((e) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect(error.isStale).toBe(true);
  });

  it("unwraps the diff payload", async () => {
    const { state, api } = client();
    state.versions.push({
      template_id: "generation", version: 3, body: "base body\nnew rule",
      status: "draft", parent_version: 2, changelog: null, proposal_id: "prop-1",
    });
    const diff = await api.diff("generation", 2, 3);
    expect(diff.some((line) => line.includes("new rule"))).toBe(true);
  });

  it("fetches rounds and scoreboards", async () => {
    const { api } = client();
    expect(await api.rounds()).toEqual([1, 2]);
    const board = await api.scoreboard(1);
    expect(board.entries["image scene"]!.score).toBeCloseTo(0.5);
  });
});
