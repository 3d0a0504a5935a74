/**
 * Typed client for the read-only HTTP API. Only the documented endpoints are
 * used, so the whole UI runs unchanged against a mock server implementing
 * the same JSON/bundle contracts.
 */

import { FilterState, paramsFromFilters } from "./state.js";
import type {
  ConversationEnvelope,
  HighlightResponse,
  MetaResponse,
  SearchResponse,
} from "./types.js";

export interface BundleFetch {
  buffer: ArrayBuffer;
  etag: string | null;
}

export class ApiError extends Error {
  constructor(public status: number, public body: unknown) {
    super(`API error ${status}`);
  }
}

export class ApiClient {
  private highlightAbort: AbortController | null = null;

  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async getJson<T>(path: string, signal?: AbortSignal): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, { signal });
    const body = await response.json();
    if (!response.ok) throw new ApiError(response.status, body);
    return body as T;
  }

  search(filters: FilterState): Promise<SearchResponse> {
    const params = paramsFromFilters(filters);
    if (filters.page > 1) params.set("page", String(filters.page));
    const qs = params.toString();
    return this.getJson<SearchResponse>(`/api/search${qs ? "?" + qs : ""}`);
  }

  async bundle(language: string): Promise<BundleFetch> {
    const response = await this.fetchFn(
      `${this.baseUrl}/api/embeddings/bundle?language=${encodeURIComponent(language)}`,
    );
    if (!response.ok) throw new ApiError(response.status, await response.text());
    return { buffer: await response.arrayBuffer(), etag: response.headers.get("etag") };
  }

  /**
   * Subset-first highlight. A newer call aborts the one in flight, so stale
   * results can never overwrite fresher ones.
   */
  highlight(filters: FilterState, language: string): Promise<HighlightResponse> {
    if (this.highlightAbort) this.highlightAbort.abort();
    const controller = new AbortController();
    this.highlightAbort = controller;
    const params = paramsFromFilters(filters);
    params.set("language", language);
    return this.getJson<HighlightResponse>(
      `/api/embeddings/highlight?${params.toString()}`,
      controller.signal,
    );
  }

  conversation(
    dataset: string,
    conversationId: string,
    origin?: string | null,
    lang?: string | null,
  ): Promise<ConversationEnvelope> {
    const params = new URLSearchParams();
    if (origin) params.set("from", origin);
    if (lang) params.set("lang", lang);
    const qs = params.toString();
    const path = `/api/conversation/${encodeURIComponent(dataset)}/${encodeURIComponent(conversationId)}`;
    return this.getJson<ConversationEnvelope>(`${path}${qs ? "?" + qs : ""}`);
  }

  meta(): Promise<MetaResponse> {
    return this.getJson<MetaResponse>("/api/meta");
  }
}
