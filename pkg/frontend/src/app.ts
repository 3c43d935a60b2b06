/** Browser wiring: collection picker, query box, session view.
 *
 * The only client-side state is the session id kept in the URL hash; a
 * reload replays the whole conversation from GET /sessions/{id}. One ask
 * is in flight per view and the input stays disabled until it settles.
 */

import { ask, createSession, listCollections, sessionHistory } from "./api.js";
import {
  renderAnswer,
  renderCollectionPicker,
  renderError,
  renderTurn,
} from "./render.js";

interface AppState {
  sessionId: string | null;
  collectionId: string | null;
  pending: boolean;
}

const state: AppState = { sessionId: null, collectionId: null, pending: false };

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function sessionFromUrl(): string | null {
  const match = window.location.hash.match(/^#session=(.+)$/);
  return match ? (match[1] ?? null) : null;
}

function putSessionInUrl(sessionId: string): void {
  window.location.hash = `session=${sessionId}`;
}

async function replayHistory(sessionId: string): Promise<void> {
  const history = await sessionHistory(sessionId);
  state.sessionId = history.session_id;
  state.collectionId = history.collection_id;
  el("turns").innerHTML = history.turns.map(renderTurn).join("");
}

async function refreshCollections(): Promise<void> {
  const collections = await listCollections();
  el("picker-slot").innerHTML = renderCollectionPicker(collections, state.collectionId);
  const picker = el<HTMLSelectElement>("collection-picker");
  if (!state.collectionId && collections.length) {
    state.collectionId = picker.value;
  }
  picker.addEventListener("change", () => {
    state.collectionId = picker.value;
    state.sessionId = null; // a new collection starts a new conversation
    el("turns").innerHTML = "";
    window.location.hash = "";
  });
}

async function submitQuery(): Promise<void> {
  const input = el<HTMLInputElement>("query-input");
  const button = el<HTMLButtonElement>("ask-button");
  const query = input.value.trim();
  if (!query || state.pending || !state.collectionId) return;

  state.pending = true;
  input.disabled = true;
  button.disabled = true;
  try {
    if (!state.sessionId) {
      state.sessionId = await createSession(state.collectionId);
      putSessionInUrl(state.sessionId);
    }
    // Refinements post to the same session on purpose: the engine folds
    // earlier turns into the probe set.
    const response = await ask(state.sessionId, query);
    const turn = document.createElement("div");
    turn.className = "turn";
    turn.innerHTML = `<p class="query">${query.replace(/&/g, "&amp;").replace(/</g, "&lt;")}</p>`
      + renderAnswer(response);
    el("turns").appendChild(turn);
    input.value = "";
  } catch (error) {
    el("status").innerHTML = renderError(error instanceof Error ? error.message : String(error));
  } finally {
    state.pending = false;
    input.disabled = false;
    button.disabled = false;
    input.focus();
  }
}

export async function boot(): Promise<void> {
  await refreshCollections();
  const fromUrl = sessionFromUrl();
  if (fromUrl) {
    try {
      await replayHistory(fromUrl);
    } catch {
      window.location.hash = "";
    }
  }
  el<HTMLButtonElement>("ask-button").addEventListener("click", () => void submitQuery());
  el<HTMLInputElement>("query-input").addEventListener("keydown", (event) => {
    if (event.key === "Enter") void submitQuery();
  });
}

if (typeof document !== "undefined" && document.getElementById("ask-button")) {
  void boot();
}
