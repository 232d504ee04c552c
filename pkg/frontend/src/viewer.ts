/** Triple-pane finding viewer: C-scan on top, B- and D-scans below, with box
 * overlays and a linked crosshair at the finding's crossing location. All
 * overlay coordinates come from the gateway's X-Box headers. */

import { ApiClient, Finding, SliceRender, View } from "./api.js";

const PANE_ORDER: View[] = ["C", "B", "D"];

const PANE_TITLES: Record<View, string> = {
  C: "C-scan (plan view)",
  B: "B-scan (longitudinal)",
  D: "D-scan (transverse)",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className !== undefined) node.className = className;
  return node;
}

function renderPane(slice: SliceRender): HTMLElement {
  const pane = el("figure", `pane pane-${slice.view.toLowerCase()}`);
  const caption = el("figcaption");
  caption.textContent = `${PANE_TITLES[slice.view]} @ ${slice.sliceIndex}`;
  pane.appendChild(caption);

  const frame = el("div", "pane-frame");
  const img = el("img");
  img.src = slice.imageUrl;
  img.alt = `${slice.view}-scan slice ${slice.sliceIndex}`;
  frame.appendChild(img);

  // overlay once the image dimensions are known, scaling server pixel
  // coordinates into the displayed frame
  img.addEventListener("load", () => {
    const [r0, c0, r1, c1] = slice.box;
    const sx = 100 / img.naturalWidth;
    const sy = 100 / img.naturalHeight;

    const box = el("div", "overlay-box");
    box.style.left = `${c0 * sx}%`;
    box.style.top = `${r0 * sy}%`;
    box.style.width = `${(c1 - c0) * sx}%`;
    box.style.height = `${(r1 - r0) * sy}%`;
    frame.appendChild(box);

    const crossV = el("div", "crosshair crosshair-v");
    crossV.style.left = `${((c0 + c1) / 2) * sx}%`;
    const crossH = el("div", "crosshair crosshair-h");
    crossH.style.top = `${((r0 + r1) / 2) * sy}%`;
    frame.appendChild(crossV);
    frame.appendChild(crossH);
  });

  pane.appendChild(frame);
  return pane;
}

export async function renderViewer(
  api: ApiClient,
  finding: Finding,
  container: HTMLElement,
): Promise<void> {
  container.replaceChildren();

  const header = el("div", "viewer-header");
  const title = el("h2");
  title.textContent = `${finding.id} — ${finding.cls} (${(finding.confidence * 100).toFixed(0)}%)`;
  const state = el("span", `badge badge-${finding.review}`);
  state.textContent =
    finding.review + (finding.corrected_class ? ` → ${finding.corrected_class}` : "");
  header.appendChild(title);
  header.appendChild(state);
  container.appendChild(header);

  const grid = el("div", "viewer-grid");
  container.appendChild(grid);

  const slices = await Promise.all(
    PANE_ORDER.map((view) => api.getSlice(finding.id, view)),
  );
  for (const slice of slices) grid.appendChild(renderPane(slice));

  const help = el("p", "viewer-help");
  help.textContent =
    "c confirm · x reject · m/v/l reclassify as manhole/void/loose · n skip";
  container.appendChild(help);
}
