/** Pure renderers: server payloads in, HTML strings out.
 *
 * No score math and no re-sorting happens here: citations render in the
 * exact order the server delivered them, and every confidence shown is the
 * payload value formatted to two decimals.
 */

import type { AskResponse, Citation, CollectionInfo, TurnView } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function formatConfidence(confidence: number): string {
  return confidence.toFixed(2);
}

export function renderCitationCard(citation: Citation, position: number): string {
  const authors = citation.authors.length
    ? escapeHtml(citation.authors.join(", "))
    : "unknown authors";
  const date = citation.date ? escapeHtml(citation.date) : "n.d.";
  const title = citation.uri
    ? `<a href="${escapeHtml(citation.uri)}" target="_blank" rel="noopener">` +
      `${escapeHtml(citation.title)}</a>`
    : escapeHtml(citation.title);
  const fragments = citation.fragments
    .map(
      (fragment) =>
        `<li><code>${escapeHtml(fragment.fragment_id)}</code>` +
        `<p>${escapeHtml(fragment.preview)}</p></li>`,
    )
    .join("");
  return (
    `<article class="citation-card" data-position="${position}">` +
    `<span class="confidence-badge">${formatConfidence(citation.confidence)}</span>` +
    `<h3>${title}</h3>` +
    `<p class="byline">${authors} (${date})</p>` +
    `<details><summary>${citation.fragments.length} supporting fragment(s)</summary>` +
    `<ul class="fragments">${fragments}</ul></details>` +
    `</article>`
  );
}

export function renderAnswer(response: AskResponse): string {
  const cards = response.citations
    .map((citation, i) => renderCitationCard(citation, i + 1))
    .join("");
  const mode = response.offline ? "offline" : escapeHtml(response.model_id);
  return (
    `<section class="answer">` +
    `<p class="answer-text">${escapeHtml(response.answer_text)}</p>` +
    `<p class="answer-meta">${response.citations.length} source(s) · ${mode}</p>` +
    `<div class="citations">${cards}</div>` +
    `</section>`
  );
}

export function renderTurn(turn: TurnView): string {
  return (
    `<div class="turn">` +
    `<p class="query">${escapeHtml(turn.query)}</p>` +
    renderAnswer(turn) +
    `</div>`
  );
}

export function renderCollectionPicker(
  collections: CollectionInfo[],
  selected: string | null,
): string {
  const options = collections
    .map((collection) => {
      const flag = collection.indexed ? "" : " (not indexed)";
      const chosen = collection.collection_id === selected ? " selected" : "";
      return (
        `<option value="${escapeHtml(collection.collection_id)}"${chosen}>` +
        `${escapeHtml(collection.title)}${flag}</option>`
      );
    })
    .join("");
  return `<select id="collection-picker">${options}</select>`;
}

export function renderError(message: string): string {
  return `<p class="error">${escapeHtml(message)}</p>`;
}
