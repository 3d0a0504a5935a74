/**
 * Embedding map page: the language's coordinate bundle as a scatterplot with
 * pan/zoom, hover previews (tap previews on coarse-pointer devices), a
 * language switcher, and red highlighting of conversations matching the
 * active filters via the subset-first highlight endpoint.
 */

import { ApiError } from "./api.js";
import type { AppContext } from "./app.js";
import { parseBundle } from "./bundle.js";
import { renderChips } from "./chips.js";
import { ScatterPlot, ScatterPoint, pointKey } from "./scatter.js";
import {
  FilterKey,
  ViewState,
  activeFilterEntries,
  routeToUrl,
  withoutFilter,
  withFilter,
} from "./state.js";

export async function renderEmbeddingPage(ctx: AppContext, state: ViewState): Promise<void> {
  const root = ctx.root;
  root.textContent = "";
  const language = state.mapLanguage ?? "english";

  const toolbar = document.createElement("div");
  toolbar.className = "toolbar";

  const switcher = document.createElement("select");
  switcher.id = "language-switcher";
  switcher.setAttribute("aria-label", "map language");
  toolbar.appendChild(switcher);

  const form = document.createElement("form");
  const input = document.createElement("input");
  input.type = "search";
  input.placeholder = "highlight matching conversations";
  input.value = state.filters.contains ?? "";
  const button = document.createElement("button");
  button.type = "submit";
  button.textContent = "Highlight";
  form.append(input, button);
  form.addEventListener("submit", (e) => {
    e.preventDefault();
    const filters = input.value
      ? withFilter(state.filters, "contains", input.value)
      : withoutFilter(state.filters, "contains");
    ctx.navigate(routeToUrl({ page: "embedding", mapLanguage: language, filters }));
  });
  toolbar.appendChild(form);
  root.appendChild(toolbar);

  const chips = document.createElement("div");
  root.appendChild(chips);
  renderChips(chips, state.filters, (key: FilterKey) => {
    ctx.navigate(routeToUrl({
      page: "embedding",
      mapLanguage: language,
      filters: withoutFilter(state.filters, key),
    }));
  });

  const status = document.createElement("div");
  status.className = "status";
  root.appendChild(status);

  const wrap = document.createElement("div");
  wrap.className = "map-wrap";
  const canvas = document.createElement("canvas");
  canvas.width = 800;
  canvas.height = 600;
  canvas.id = "embedding-canvas";
  wrap.appendChild(canvas);

  const tooltip = document.createElement("div");
  tooltip.className = "tooltip";
  tooltip.hidden = true;
  wrap.appendChild(tooltip);

  const previewCard = document.createElement("div");
  previewCard.className = "preview-card";
  previewCard.hidden = true;
  wrap.appendChild(previewCard);
  root.appendChild(wrap);

  const coarse = ctx.isCoarsePointer();
  const plot = new ScatterPlot(canvas, {
    onHover: (point, sx, sy) => {
      if (!point) {
        tooltip.hidden = true;
        return;
      }
      tooltip.hidden = false;
      tooltip.textContent = point.preview;
      tooltip.style.left = `${sx + 12}px`;
      tooltip.style.top = `${sy + 12}px`;
    },
    onSelect: (point) => {
      ctx.navigate(routeToUrl({
        page: "details",
        filters: { page: 1 },
        dataset: point.dataset,
        conversationId: point.conversationId,
        origin: "embedding",
        originLang: language,
      }));
    },
    onTap: (point, sx, sy) => {
      showPreviewCard(ctx, previewCard, point, sx, sy, language);
    },
  }, coarse);
  ctx.plot = plot;

  // language switcher options come from the server's metadata
  try {
    const meta = await ctx.api.meta();
    for (const lang of meta.languages) {
      const option = document.createElement("option");
      option.value = lang.toLowerCase();
      option.textContent = lang;
      if (lang.toLowerCase() === language) option.selected = true;
      switcher.appendChild(option);
    }
  } catch {
    // metadata is a convenience; the bundle fetch below reports real errors
  }
  switcher.addEventListener("change", () => {
    ctx.navigate(routeToUrl({
      page: "embedding",
      mapLanguage: switcher.value,
      filters: state.filters,
    }));
  });

  let bundleBuffer: ArrayBuffer;
  try {
    const fetched = await ctx.api.bundle(language);
    bundleBuffer = fetched.buffer;
    ctx.lastBundleEtag = fetched.etag;
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      const notice = document.createElement("div");
      notice.className = "empty-state";
      notice.id = "map-unavailable";
      notice.textContent = `No embedding map is available for "${language}".`;
      root.appendChild(notice);
      return;
    }
    throw err;
  }

  const bundle = parseBundle(bundleBuffer);
  const points: ScatterPoint[] = [];
  for (const dataset of bundle.datasets) {
    for (const p of dataset.points) {
      points.push({
        dataset: dataset.name,
        conversationId: p.conversationId,
        x: p.x,
        y: p.y,
        preview: p.preview,
      });
    }
  }
  plot.setPoints(points);
  status.textContent = `${points.length} conversations on the map`;

  if (activeFilterEntries(state.filters).length > 0) {
    try {
      const result = await ctx.api.highlight(state.filters, language);
      const keys = result.matched_in_subset.map((m) => pointKey(m.dataset, m.conversation_id));
      const extras: ScatterPoint[] = result.fallback_points.map((p) => ({
        dataset: p.dataset,
        conversationId: p.conversation_id,
        x: p.x,
        y: p.y,
        preview: p.preview,
      }));
      plot.setHighlight(keys, extras);
      status.textContent =
        `${points.length} conversations on the map · ` +
        `${keys.length + extras.length} highlighted` +
        (result.fallback_used ? " (extended beyond the displayed subset)" : "");
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") return; // superseded
      if (err instanceof ApiError) {
        status.textContent = `Highlight failed (${err.status})`;
        status.classList.add("error");
        return;
      }
      throw err;
    }
  }
}

function showPreviewCard(
  ctx: AppContext,
  card: HTMLElement,
  point: ScatterPoint,
  screenX: number,
  screenY: number,
  language: string,
): void {
  card.textContent = "";
  card.hidden = false;
  card.style.left = `${screenX}px`;
  card.style.top = `${screenY}px`;

  const text = document.createElement("p");
  text.className = "preview-text";
  text.textContent = point.preview;
  card.appendChild(text);

  const view = document.createElement("button");
  view.className = "preview-view";
  view.textContent = "view full conversation";
  view.addEventListener("click", () => {
    ctx.navigate(routeToUrl({
      page: "details",
      filters: { page: 1 },
      dataset: point.dataset,
      conversationId: point.conversationId,
      origin: "embedding",
      originLang: language,
    }));
  });
  card.appendChild(view);

  const close = document.createElement("button");
  close.className = "preview-close";
  close.textContent = "close";
  close.addEventListener("click", () => {
    card.hidden = true;
  });
  card.appendChild(close);
}
