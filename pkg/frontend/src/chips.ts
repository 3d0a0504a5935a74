/**
 * Active-filter chips shown above results: one removable chip per filter,
 * with an "x" button that drops just that predicate and re-queries.
 */

import { FilterKey, FilterState, activeFilterEntries } from "./state.js";

export function renderChips(
  container: HTMLElement,
  filters: FilterState,
  onRemove: (key: FilterKey) => void,
): void {
  container.textContent = "";
  container.classList.add("chip-row");
  for (const [key, value] of activeFilterEntries(filters)) {
    const chip = document.createElement("span");
    chip.className = "chip";
    chip.dataset.key = key;

    const label = document.createElement("span");
    label.className = "chip-label";
    label.textContent = `${key}: ${value}`;
    chip.appendChild(label);

    const remove = document.createElement("button");
    remove.className = "chip-remove";
    remove.type = "button";
    remove.textContent = "×";
    remove.setAttribute("aria-label", `remove ${key} filter`);
    remove.addEventListener("click", () => onRemove(key));
    chip.appendChild(remove);

    container.appendChild(chip);
  }
}
