/** Thin typed client for the /v1 HTTP JSON API; the only network surface. */

import type {
  AskResponse,
  CollectionInfo,
  HealthResponse,
  SessionHistory,
} from "./types.js";

const API_BASE = "/v1";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(`${API_BASE}${path}`, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!response.ok) {
    const body = await response.json().catch(() => ({}));
    const detail = (body as { error?: string }).error ?? response.statusText;
    throw new ApiError(response.status, detail);
  }
  return response.json() as Promise<T>;
}

export async function listCollections(): Promise<CollectionInfo[]> {
  const payload = await request<{ collections: CollectionInfo[] }>("/collections");
  return payload.collections;
}

export async function createSession(collectionId: string): Promise<string> {
  const payload = await request<{ session_id: string }>("/sessions", {
    method: "POST",
    body: JSON.stringify({ collection_id: collectionId }),
  });
  return payload.session_id;
}

/** Every ask for one conversation posts to the same session id; the
 * refinement flow is the same call with a new query. */
export async function ask(sessionId: string, query: string): Promise<AskResponse> {
  return request<AskResponse>(`/sessions/${encodeURIComponent(sessionId)}/ask`, {
    method: "POST",
    body: JSON.stringify({ query }),
  });
}

export async function sessionHistory(sessionId: string): Promise<SessionHistory> {
  return request<SessionHistory>(`/sessions/${encodeURIComponent(sessionId)}`);
}

export async function health(): Promise<HealthResponse> {
  return request<HealthResponse>("/healthz");
}
