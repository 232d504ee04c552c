/** Application shell: review queue on the left, triple-pane viewer on the
 * right, dashboard below. Keyboard-first verdict entry. */

import { ApiClient, Finding, Verdict } from "./api.js";
import { renderDashboard } from "./dashboard.js";
import { renderQueue } from "./queue.js";
import { ReviewSession } from "./session.js";
import { renderViewer } from "./viewer.js";

const api = new ApiClient("");
const session = new ReviewSession(api);

let currentId: string | undefined;

function node(id: string): HTMLElement {
  const found = document.getElementById(id);
  if (found === null) throw new Error(`missing #${id}`);
  return found;
}

function refreshQueue(): void {
  renderQueue(session, node("queue"), node("queue-count"), currentId, (f) => void select(f));
}

async function select(finding: Finding): Promise<void> {
  currentId = finding.id;
  refreshQueue();
  await renderViewer(api, finding, node("viewer"));
}

function flash(message: string): void {
  const bar = node("statusbar");
  bar.textContent = message;
  bar.classList.add("visible");
  setTimeout(() => bar.classList.remove("visible"), 2500);
}

async function verdict(v: Verdict, correctedClass?: string): Promise<void> {
  if (currentId === undefined) return;
  const id = currentId;
  const outcome = await session.submit(id, v, correctedClass);
  if (!outcome.ok) {
    flash(`gateway refused: ${outcome.error ?? "unknown error"}`);
  } else if (outcome.queued) {
    flash("network down — verdict queued for retry");
  }
  const next = session.nextPending(id);
  refreshQueue();
  renderDashboard(session, node("dashboard"));
  if (next !== undefined) {
    await select(next);
  } else {
    currentId = undefined;
    node("viewer").replaceChildren();
    refreshQueue();
  }
}

function advance(): void {
  const next = session.nextPending(currentId);
  if (next !== undefined) void select(next);
}

function bindKeys(): void {
  document.addEventListener("keydown", (ev) => {
    if (ev.target instanceof HTMLInputElement) return;
    switch (ev.key) {
      case "c": void verdict("confirm"); break;
      case "x": void verdict("reject"); break;
      case "m": void verdict("reclassify", "manhole"); break;
      case "v": void verdict("reclassify", "void"); break;
      case "l": void verdict("reclassify", "loose"); break;
      case "n": advance(); break;
      default: return;
    }
    ev.preventDefault();
  });
  node("btn-confirm").addEventListener("click", () => void verdict("confirm"));
  node("btn-reject").addEventListener("click", () => void verdict("reject"));
  for (const cls of ["manhole", "void", "loose"]) {
    node(`btn-${cls}`).addEventListener("click", () => void verdict("reclassify", cls));
  }
}

async function applyFilters(): Promise<void> {
  const volume = (node("filter-volume") as HTMLSelectElement).value || undefined;
  const cls = (node("filter-class") as HTMLSelectElement).value || undefined;
  await session.load({ volumeId: volume, cls });
  currentId = undefined;
  refreshQueue();
  renderDashboard(session, node("dashboard"));
  advance();
}

async function boot(): Promise<void> {
  const volumes = await api.listVolumes();
  const picker = node("filter-volume") as HTMLSelectElement;
  for (const vid of volumes) {
    const opt = document.createElement("option");
    opt.value = vid;
    opt.textContent = vid;
    picker.appendChild(opt);
  }
  picker.addEventListener("change", () => void applyFilters());
  node("filter-class").addEventListener("change", () => void applyFilters());

  bindKeys();
  setInterval(() => void session.flushRetries(), 5000);
  await applyFilters();
}

void boot();
