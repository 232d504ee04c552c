/** Review queue list: pending findings only, selectable, with a calm empty
 * state that issues no further network traffic. */

import { Finding } from "./api.js";
import { ReviewSession } from "./session.js";

export function renderQueue(
  session: ReviewSession,
  list: HTMLElement,
  counter: HTMLElement,
  currentId: string | undefined,
  onSelect: (finding: Finding) => void,
): void {
  list.replaceChildren();
  const pending = session.pending();
  counter.textContent = `${pending.length} pending`;

  if (pending.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "Queue clear — no findings awaiting review.";
    list.appendChild(empty);
    return;
  }
  for (const f of pending) {
    const item = document.createElement("button");
    item.className = "queue-item" + (f.id === currentId ? " selected" : "");
    item.textContent = `${f.id} · ${f.cls} · ${(f.confidence * 100).toFixed(0)}%`;
    item.addEventListener("click", () => onSelect(f));
    list.appendChild(item);
  }
}
