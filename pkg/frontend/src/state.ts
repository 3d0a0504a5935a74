/**
 * URL <-> view-state mapping. The URL is the single source of truth: every
 * filter, page number and view is encoded in the path + query string, and
 * parsing that URL back reproduces the view exactly.
 *
 * Routes:
 *   /                                  search page
 *   /embeddings/<language>             embedding map page
 *   /conversation/<dataset>/<id>       details page (?from=&lang= preserved)
 */

export const STRING_FILTER_KEYS = [
  "contains",
  "hashed_ip",
  "country",
  "state",
  "language",
  "model",
  "dataset",
] as const;

export const BOOL_FILTER_KEYS = ["toxic", "redacted"] as const;

export type StringFilterKey = (typeof STRING_FILTER_KEYS)[number];
export type BoolFilterKey = (typeof BOOL_FILTER_KEYS)[number];
export type FilterKey = StringFilterKey | BoolFilterKey | "min_turns";

export interface FilterState {
  contains?: string;
  hashed_ip?: string;
  country?: string;
  state?: string;
  language?: string;
  model?: string;
  dataset?: string;
  toxic?: boolean;
  redacted?: boolean;
  min_turns?: number;
  page: number;
  threshold?: number;
}

export type PageName = "search" | "embedding" | "details";

export interface ViewState {
  page: PageName;
  filters: FilterState;
  /** embedding page: which language map is shown (lowercased path segment) */
  mapLanguage?: string;
  /** details page */
  dataset?: string;
  conversationId?: string;
  origin?: string | null;
  originLang?: string | null;
}

export function emptyFilters(): FilterState {
  return { page: 1 };
}

export function activeFilterEntries(f: FilterState): [FilterKey, string][] {
  const out: [FilterKey, string][] = [];
  for (const key of STRING_FILTER_KEYS) {
    const value = f[key];
    if (value !== undefined && value !== "") out.push([key, value]);
  }
  for (const key of BOOL_FILTER_KEYS) {
    const value = f[key];
    if (value !== undefined) out.push([key, String(value)]);
  }
  if (f.min_turns !== undefined) out.push(["min_turns", String(f.min_turns)]);
  return out;
}

export function filtersFromParams(params: URLSearchParams): FilterState {
  const f = emptyFilters();
  for (const key of STRING_FILTER_KEYS) {
    const raw = params.get(key);
    if (raw !== null && raw !== "") f[key] = raw;
  }
  for (const key of BOOL_FILTER_KEYS) {
    const raw = params.get(key);
    if (raw === "true") f[key] = true;
    else if (raw === "false") f[key] = false;
  }
  const minTurns = params.get("min_turns");
  if (minTurns !== null && /^\d+$/.test(minTurns)) f.min_turns = parseInt(minTurns, 10);
  const page = params.get("page");
  if (page !== null && /^\d+$/.test(page)) f.page = Math.max(1, parseInt(page, 10));
  const threshold = params.get("threshold");
  if (threshold !== null && /^\d+$/.test(threshold)) f.threshold = parseInt(threshold, 10);
  return f;
}

export function paramsFromFilters(f: FilterState): URLSearchParams {
  const params = new URLSearchParams();
  for (const [key, value] of activeFilterEntries(f)) params.set(key, value);
  if (f.page > 1) params.set("page", String(f.page));
  if (f.threshold !== undefined) params.set("threshold", String(f.threshold));
  return params;
}

/** Remove one filter (used by chip "x" buttons); returns a new state on page 1. */
export function withoutFilter(f: FilterState, key: FilterKey): FilterState {
  const next: FilterState = { ...f, page: 1 };
  delete next[key];
  return next;
}

export function withFilter(f: FilterState, key: FilterKey, value: string): FilterState {
  const next: FilterState = { ...f, page: 1 };
  if (key === "toxic" || key === "redacted") next[key] = value === "true";
  else if (key === "min_turns") next[key] = parseInt(value, 10);
  else next[key] = value;
  return next;
}

export function parseRoute(pathname: string, search: string): ViewState {
  const params = new URLSearchParams(search);
  const filters = filtersFromParams(params);
  const parts = pathname.replace(/\/+$/, "").split("/").filter((p) => p.length > 0);

  if (parts[0] === "embeddings") {
    return {
      page: "embedding",
      filters,
      mapLanguage: (parts[1] ?? "english").toLowerCase(),
    };
  }
  if (parts[0] === "conversation" && parts.length >= 3) {
    return {
      page: "details",
      filters,
      dataset: decodeURIComponent(parts[1]),
      conversationId: decodeURIComponent(parts[2]),
      origin: params.get("from"),
      originLang: params.get("lang"),
    };
  }
  return { page: "search", filters };
}

export function routeToUrl(state: ViewState): string {
  if (state.page === "embedding") {
    const params = paramsFromFilters(state.filters);
    const qs = params.toString();
    return `/embeddings/${state.mapLanguage ?? "english"}${qs ? "?" + qs : ""}`;
  }
  if (state.page === "details") {
    const params = new URLSearchParams();
    if (state.origin) params.set("from", state.origin);
    if (state.originLang) params.set("lang", state.originLang);
    const qs = params.toString();
    const ds = encodeURIComponent(state.dataset ?? "");
    const id = encodeURIComponent(state.conversationId ?? "");
    return `/conversation/${ds}/${id}${qs ? "?" + qs : ""}`;
  }
  const qs = paramsFromFilters(state.filters).toString();
  return `/${qs ? "?" + qs : ""}`;
}
