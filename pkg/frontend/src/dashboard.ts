/** Summary dashboard: per-volume counts by class and review state, session
 * throughput, and the total pending queue. */

import { ReviewSession } from "./session.js";
import { Summary, summarize } from "./summary.js";

function cell(text: string, tag: "td" | "th" = "td"): HTMLElement {
  const node = document.createElement(tag);
  node.textContent = text;
  return node;
}

export function renderDashboard(
  session: ReviewSession,
  container: HTMLElement,
): Summary {
  const summary = summarize(session.all());
  container.replaceChildren();

  const headline = document.createElement("p");
  headline.className = "dashboard-headline";
  headline.textContent =
    `${summary.pending} pending of ${summary.total} findings · ` +
    `${session.throughputPerMinute().toFixed(1)} verdicts/min this session`;
  container.appendChild(headline);

  const table = document.createElement("table");
  table.className = "dashboard-table";
  const head = document.createElement("tr");
  for (const label of [
    "volume", "manhole", "void", "loose", "unspecified",
    "pending", "confirmed", "reclassified", "rejected",
  ]) {
    head.appendChild(cell(label, "th"));
  }
  table.appendChild(head);

  for (const vol of summary.perVolume) {
    const row = document.createElement("tr");
    row.appendChild(cell(vol.volumeId));
    for (const cls of ["manhole", "void", "loose", "distress_unspecified"]) {
      row.appendChild(cell(String(vol.byClass[cls] ?? 0)));
    }
    for (const state of ["pending", "confirmed", "reclassified", "rejected"]) {
      row.appendChild(cell(String(vol.byReview[state] ?? 0)));
    }
    table.appendChild(row);
  }
  container.appendChild(table);
  return summary;
}
