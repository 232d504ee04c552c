/** Dashboard aggregation: client-side counts that must always agree with the
 * gateway's report endpoint. Pure functions — cross-checked in tests. */

import { Finding, Report } from "./api.js";

export interface VolumeSummary {
  volumeId: string;
  byClass: Record<string, number>;
  byReview: Record<string, number>;
  total: number;
}

export interface Summary {
  total: number;
  pending: number;
  byClass: Record<string, number>;
  byReview: Record<string, number>;
  perVolume: VolumeSummary[];
}

const CLASSES = ["manhole", "void", "loose", "distress_unspecified"];
const REVIEW_STATES = ["pending", "confirmed", "reclassified", "rejected"];

function zeros(keys: string[]): Record<string, number> {
  return Object.fromEntries(keys.map((k) => [k, 0]));
}

export function summarize(findings: Finding[]): Summary {
  const byClass = zeros(CLASSES);
  const byReview = zeros(REVIEW_STATES);
  const volumes = new Map<string, VolumeSummary>();
  for (const f of findings) {
    byClass[f.cls] = (byClass[f.cls] ?? 0) + 1;
    byReview[f.review] = (byReview[f.review] ?? 0) + 1;
    let vol = volumes.get(f.volume_id);
    if (vol === undefined) {
      vol = {
        volumeId: f.volume_id,
        byClass: zeros(CLASSES),
        byReview: zeros(REVIEW_STATES),
        total: 0,
      };
      volumes.set(f.volume_id, vol);
    }
    vol.byClass[f.cls] = (vol.byClass[f.cls] ?? 0) + 1;
    vol.byReview[f.review] = (vol.byReview[f.review] ?? 0) + 1;
    vol.total += 1;
  }
  return {
    total: findings.length,
    pending: byReview["pending"],
    byClass,
    byReview,
    perVolume: [...volumes.values()].sort((a, b) =>
      a.volumeId.localeCompare(b.volumeId),
    ),
  };
}

/** True when the client-side summary matches the gateway's own report. */
export function matchesReport(summary: Summary, report: Report): boolean {
  if (summary.total !== report.total_findings) return false;
  for (const cls of CLASSES) {
    if ((report.by_class[cls] ?? 0) !== summary.byClass[cls]) return false;
  }
  for (const state of REVIEW_STATES) {
    if ((report.by_review[state] ?? 0) !== summary.byReview[state]) return false;
  }
  return true;
}
