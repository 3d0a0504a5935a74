/**
 * Single-page application shell: parses the current URL into a ViewState,
 * renders the matching page, and intercepts navigation so that every state
 * change is a history entry whose URL reproduces the view when loaded cold.
 */

import { ApiClient } from "./api.js";
import { renderDetailsPage } from "./detailsPage.js";
import { renderEmbeddingPage } from "./embeddingPage.js";
import { renderSearchPage } from "./searchPage.js";
import type { ScatterPlot } from "./scatter.js";
import { ViewState, parseRoute } from "./state.js";

export type PivotTarget = "search" | "embedding";

export interface AppOptions {
  /** override coarse-pointer detection (tap previews); default sniffs the environment */
  isCoarsePointer?: () => boolean;
}

export interface AppContext {
  root: HTMLElement;
  api: ApiClient;
  navigate: (url: string) => void;
  pivotTarget: { value: PivotTarget };
  isCoarsePointer: () => boolean;
  /** the embedding page parks its plot here for inspection/interaction */
  plot?: ScatterPlot;
  lastBundleEtag?: string | null;
}

function defaultCoarsePointer(): boolean {
  if (typeof window === "undefined") return false;
  if (window.matchMedia && window.matchMedia("(pointer: coarse)").matches) return true;
  return window.innerWidth > 0 && window.innerWidth < 700;
}

export class App {
  readonly ctx: AppContext;
  state: ViewState;
  private rendering: Promise<void> = Promise.resolve();

  constructor(root: HTMLElement, api: ApiClient, options: AppOptions = {}) {
    this.ctx = {
      root,
      api,
      navigate: (url) => this.navigate(url),
      pivotTarget: { value: "search" },
      isCoarsePointer: options.isCoarsePointer ?? defaultCoarsePointer,
    };
    this.state = parseRoute(window.location.pathname, window.location.search);
    window.addEventListener("popstate", () => {
      this.state = parseRoute(window.location.pathname, window.location.search);
      this.render();
    });
    this.render();
  }

  navigate(url: string): void {
    window.history.pushState(null, "", url);
    this.state = parseRoute(window.location.pathname, window.location.search);
    this.render();
  }

  render(): void {
    const state = this.state;
    this.rendering = this.rendering
      .catch(() => undefined)
      .then(() => {
        if (state.page === "embedding") return renderEmbeddingPage(this.ctx, state);
        if (state.page === "details") return renderDetailsPage(this.ctx, state);
        return renderSearchPage(this.ctx, state);
      });
  }

  /** Resolves when the most recent render (and its fetches) finished. */
  whenReady(): Promise<void> {
    return this.rendering;
  }
}

export function initApp(root: HTMLElement, api: ApiClient, options: AppOptions = {}): App {
  return new App(root, api, options);
}
