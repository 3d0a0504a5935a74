/**
 * Filter-based search page: paginated results table with removable filter
 * chips; every metadata cell is clickable and adds the corresponding exact
 * filter (e.g. clicking a hashed IP lists all conversations from that user).
 */

import { ApiError } from "./api.js";
import { renderChips } from "./chips.js";
import type { AppContext } from "./app.js";
import {
  FilterKey,
  ViewState,
  routeToUrl,
  withFilter,
  withoutFilter,
} from "./state.js";
import type { SearchHit, SearchResponse } from "./types.js";

const PAGE_SIZE = 30;

export async function renderSearchPage(ctx: AppContext, state: ViewState): Promise<void> {
  const root = ctx.root;
  root.textContent = "";

  const toolbar = document.createElement("form");
  toolbar.className = "toolbar";
  const input = document.createElement("input");
  input.type = "search";
  input.name = "contains";
  input.placeholder = "phrase to search for";
  input.value = state.filters.contains ?? "";
  const submit = document.createElement("button");
  submit.type = "submit";
  submit.textContent = "Search";
  toolbar.append(input, submit);
  toolbar.addEventListener("submit", (e) => {
    e.preventDefault();
    const next = input.value
      ? withFilter(state.filters, "contains", input.value)
      : withoutFilter(state.filters, "contains");
    ctx.navigate(routeToUrl({ page: "search", filters: next }));
  });
  root.appendChild(toolbar);

  const chips = document.createElement("div");
  root.appendChild(chips);
  renderChips(chips, state.filters, (key: FilterKey) => {
    ctx.navigate(routeToUrl({ page: "search", filters: withoutFilter(state.filters, key) }));
  });

  const status = document.createElement("div");
  status.className = "status";
  root.appendChild(status);

  let result: SearchResponse;
  try {
    result = await ctx.api.search(state.filters);
  } catch (err) {
    if (err instanceof ApiError) {
      status.textContent = `Search failed (${err.status}): ${JSON.stringify(err.body)}`;
      status.classList.add("error");
      return;
    }
    throw err;
  }

  const lastPage = Math.max(1, Math.ceil(result.total_matched / PAGE_SIZE));
  status.textContent =
    `${result.total_matched}${result.cap_applied ? "+ (capped)" : ""} conversations` +
    ` · page ${result.page} of ${lastPage}`;

  if (result.hits.length === 0) {
    const empty = document.createElement("div");
    empty.className = "empty-state";
    empty.textContent = "No conversations match the active filters.";
    root.appendChild(empty);
    return;
  }

  root.appendChild(buildTable(ctx, state, result.hits));
  root.appendChild(buildPagination(ctx, state, result.page, lastPage));
}

function buildTable(ctx: AppContext, state: ViewState, hits: SearchHit[]): HTMLTableElement {
  const table = document.createElement("table");
  table.className = "results";
  const thead = table.createTHead();
  const headRow = thead.insertRow();
  for (const label of ["Conversation", "Timestamp", "Location", "Hashed IP", "Model", "Snippet"]) {
    const th = document.createElement("th");
    th.textContent = label;
    headRow.appendChild(th);
  }

  const addFilterCell = (
    row: HTMLTableRowElement,
    key: FilterKey,
    value: string,
    display?: string,
  ) => {
    const cell = row.insertCell();
    if (!value) {
      cell.textContent = display ?? "";
      return;
    }
    const link = document.createElement("a");
    link.href = "#";
    link.className = "meta-link";
    link.dataset.filterKey = key;
    link.dataset.filterValue = value;
    link.textContent = display ?? value;
    link.addEventListener("click", (e) => {
      e.preventDefault();
      ctx.navigate(routeToUrl({
        page: "search",
        filters: withFilter(state.filters, key, value),
      }));
    });
    cell.appendChild(link);
  };

  const tbody = table.createTBody();
  for (const hit of hits) {
    const row = tbody.insertRow();
    row.className = "hit";

    const idCell = row.insertCell();
    const idLink = document.createElement("a");
    idLink.className = "conversation-link";
    idLink.href = routeToUrl({
      page: "details",
      filters: { page: 1 },
      dataset: hit.dataset,
      conversationId: hit.conversation_id,
      origin: "search",
    });
    idLink.textContent = `${hit.dataset}/${hit.conversation_id}`;
    idLink.addEventListener("click", (e) => {
      e.preventDefault();
      ctx.navigate(idLink.getAttribute("href")!);
    });
    idCell.appendChild(idLink);

    row.insertCell().textContent = hit.timestamp;
    addFilterCell(row, hit.state ? "state" : "country",
      hit.state || hit.country,
      hit.state ? `${hit.state}, ${hit.country}` : hit.country);
    addFilterCell(row, "hashed_ip", hit.hashed_ip, shortIp(hit.hashed_ip));
    addFilterCell(row, "model", hit.model);
    const snippet = row.insertCell();
    snippet.className = "snippet";
    snippet.textContent = hit.snippet;
  }
  return table;
}

function buildPagination(
  ctx: AppContext,
  state: ViewState,
  page: number,
  lastPage: number,
): HTMLElement {
  const nav = document.createElement("div");
  nav.className = "pagination";
  const go = (target: number) => {
    ctx.navigate(routeToUrl({
      page: "search",
      filters: { ...state.filters, page: target },
    }));
  };
  const prev = document.createElement("button");
  prev.textContent = "← previous";
  prev.disabled = page <= 1;
  prev.addEventListener("click", () => go(page - 1));
  const next = document.createElement("button");
  next.textContent = "next →";
  next.disabled = page >= lastPage;
  next.addEventListener("click", () => go(page + 1));
  nav.append(prev, next);
  return nav;
}

function shortIp(hashedIp: string): string {
  return hashedIp ? `${hashedIp.slice(0, 10)}…` : "";
}
