/**
 * Conversation details page: the full turn-by-turn transcript plus metadata.
 * Every metadata value is clickable and pivots to a filtered view; a toggle
 * controls whether that pivot lands on the search page or the embedding map
 * (it starts on the page the user came from and persists across navigation).
 */

import { ApiError } from "./api.js";
import type { AppContext } from "./app.js";
import { ViewState, FilterKey, emptyFilters, routeToUrl, withFilter } from "./state.js";
import type { ConversationDetail } from "./types.js";

export async function renderDetailsPage(ctx: AppContext, state: ViewState): Promise<void> {
  const root = ctx.root;
  root.textContent = "";

  if (state.origin === "embedding" || state.origin === "search") {
    ctx.pivotTarget.value = state.origin;
  }

  let detail: ConversationDetail;
  let lang: string | null = state.originLang ?? null;
  try {
    const envelope = await ctx.api.conversation(
      state.dataset ?? "", state.conversationId ?? "", state.origin, state.originLang);
    detail = envelope.conversation;
    lang = envelope.lang ?? lang;
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      const missing = document.createElement("div");
      missing.className = "empty-state";
      missing.id = "conversation-not-found";
      missing.textContent = "This conversation does not exist.";
      root.appendChild(missing);
      return;
    }
    throw err;
  }

  const header = document.createElement("div");
  header.className = "details-header";
  const title = document.createElement("h2");
  title.textContent = `${detail.dataset}/${detail.conversation_id}`;
  header.appendChild(title);

  // pivot toggle: where metadata clicks take you
  const toggleWrap = document.createElement("label");
  toggleWrap.className = "pivot-toggle";
  const toggle = document.createElement("input");
  toggle.type = "checkbox";
  toggle.id = "pivot-toggle";
  toggle.checked = ctx.pivotTarget.value === "embedding";
  const toggleText = document.createElement("span");
  const describe = () => {
    toggleText.textContent = `metadata clicks filter the ${ctx.pivotTarget.value} page`;
  };
  describe();
  toggle.addEventListener("change", () => {
    ctx.pivotTarget.value = toggle.checked ? "embedding" : "search";
    describe();
  });
  toggleWrap.append(toggle, toggleText);
  header.appendChild(toggleWrap);
  root.appendChild(header);

  const pivot = (key: FilterKey, value: string) => {
    const filters = withFilter(emptyFilters(), key, value);
    if (ctx.pivotTarget.value === "embedding") {
      const mapLanguage = (lang ?? detail.language).toLowerCase();
      ctx.navigate(routeToUrl({ page: "embedding", mapLanguage, filters }));
    } else {
      ctx.navigate(routeToUrl({ page: "search", filters }));
    }
  };

  const metaList = document.createElement("dl");
  metaList.className = "meta-list";
  const addMeta = (label: string, key: FilterKey | null, value: string) => {
    if (!value) return;
    const dt = document.createElement("dt");
    dt.textContent = label;
    const dd = document.createElement("dd");
    if (key) {
      const link = document.createElement("a");
      link.href = "#";
      link.className = "meta-link";
      link.dataset.filterKey = key;
      link.dataset.filterValue = value;
      link.textContent = value;
      link.addEventListener("click", (e) => {
        e.preventDefault();
        pivot(key, value);
      });
      dd.appendChild(link);
    } else {
      dd.textContent = value;
    }
    metaList.append(dt, dd);
  };

  addMeta("Timestamp", null, detail.timestamp);
  addMeta("Country", "country", detail.country);
  addMeta("State", "state", detail.state);
  addMeta("Language", "language", detail.language);
  addMeta("Hashed IP", "hashed_ip", detail.hashed_ip);
  addMeta("Model", "model", detail.model);
  addMeta("Toxic", "toxic", String(detail.toxic));
  addMeta("Redacted", "redacted", String(detail.redacted));
  addMeta("Turns", null, String(detail.turn_count));
  root.appendChild(metaList);

  const transcript = document.createElement("div");
  transcript.className = "transcript";
  for (const turn of detail.turns) {
    const block = document.createElement("div");
    block.className = `turn turn-${turn.role}`;
    const role = document.createElement("div");
    role.className = "turn-role";
    role.textContent = turn.role;
    const text = document.createElement("div");
    text.className = "turn-text";
    text.textContent = turn.text;
    block.append(role, text);
    transcript.appendChild(block);
  }
  root.appendChild(transcript);
}
