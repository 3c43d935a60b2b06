import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, ask, createSession, listCollections, sessionHistory } from "../src/api.js";

function jsonResponse(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ask", () => {
  it("posts the refinement to the same session id as the first ask", async () => {
    const calls: Array<{ url: string; body: string }> = [];
    vi.stubGlobal("fetch", async (url: string, init?: RequestInit) => {
      calls.push({ url: String(url), body: String(init?.body) });
      return jsonResponse({
        answer_text: "a",
        citations: [],
        probes_used: [],
        model_id: "m",
        offline: true,
      });
    });

    await ask("sess-1", "first question");
    await ask("sess-1", "refined question");

    expect(calls.map((c) => c.url)).toEqual([
      "/v1/sessions/sess-1/ask",
      "/v1/sessions/sess-1/ask",
    ]);
    expect(JSON.parse(calls[1]!.body)).toEqual({ query: "refined question" });
  });

  it("raises ApiError with the server's message on failure", async () => {
    vi.stubGlobal("fetch", async () => jsonResponse({ error: "query is empty" }, 400));
    await expect(ask("sess-1", " ")).rejects.toThrowError(ApiError);
    await expect(ask("sess-1", " ")).rejects.toThrow("query is empty");
  });
});

describe("createSession", () => {
  it("posts the collection id and returns the session id", async () => {
    let captured: string | undefined;
    vi.stubGlobal("fetch", async (_url: string, init?: RequestInit) => {
      captured = String(init?.body);
      return jsonResponse({ session_id: "sess-9", collection_id: "mda-mini" }, 201);
    });
    const sessionId = await createSession("mda-mini");
    expect(sessionId).toBe("sess-9");
    expect(JSON.parse(captured!)).toEqual({ collection_id: "mda-mini" });
  });
});

describe("listCollections", () => {
  it("unwraps the collections array", async () => {
    vi.stubGlobal("fetch", async () =>
      jsonResponse({
        collections: [
          { collection_id: "a", title: "Alpha", documents: 2, indexed: true },
        ],
      }),
    );
    const collections = await listCollections();
    expect(collections).toHaveLength(1);
    expect(collections[0]!.collection_id).toBe("a");
  });
});

describe("sessionHistory", () => {
  it("fetches the replayable turn list", async () => {
    vi.stubGlobal("fetch", async (url: string) => {
      expect(String(url)).toBe("/v1/sessions/sess-2");
      return jsonResponse({ session_id: "sess-2", collection_id: "c", turns: [] });
    });
    const history = await sessionHistory("sess-2");
    expect(history.turns).toEqual([]);
  });
});
