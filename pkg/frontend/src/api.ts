/** Typed client for the gateway's /api/v1 endpoints — the UI's only backend. */

export type View = "B" | "C" | "D";
export type ReviewState = "pending" | "confirmed" | "reclassified" | "rejected";
export type Verdict = "confirm" | "reclassify" | "reject";
export type FindingClass = "manhole" | "void" | "loose" | "distress_unspecified";

export const RECLASSIFY_CLASSES = ["manhole", "void", "loose"] as const;

export interface Finding {
  id: string;
  cls: FindingClass;
  confidence: number;
  voxel_box: [number, number, number, number, number, number];
  stage_provenance: string;
  review: ReviewState;
  corrected_class: string | null;
  job_id: string;
  volume_id: string;
}

export interface Report {
  total_findings: number;
  by_class: Record<string, number>;
  by_review: Record<string, number>;
  timing: Record<string, number>;
}

/** Box in slice-image pixel coordinates: [row0, col0, row1, col1), half-open. */
export type SliceBox = [number, number, number, number];

export interface SliceRender {
  view: View;
  sliceIndex: number;
  box: SliceBox;
  /** object URL of the PNG body, ready for an <img> src */
  imageUrl: string;
}

export interface FindingFilter {
  volumeId?: string;
  cls?: string;
  review?: ReviewState;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (u, i) => fetch(u, i),
    private readonly reviewer: string = "inspector",
  ) {}

  private url(path: string, params?: Record<string, string | undefined>): string {
    const q = new URLSearchParams();
    for (const [k, v] of Object.entries(params ?? {})) {
      if (v !== undefined) q.set(k, v);
    }
    const qs = q.toString();
    return `${this.baseUrl}/api/v1${path}${qs ? `?${qs}` : ""}`;
  }

  private async json<T>(url: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(url, init);
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = (await res.json()) as { error?: string };
        if (body.error) detail = body.error;
      } catch {
        /* non-JSON error body: keep the status text */
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  async listVolumes(): Promise<string[]> {
    const doc = await this.json<{ volumes: string[] }>(this.url("/volumes"));
    return doc.volumes;
  }

  async listFindings(filter: FindingFilter = {}): Promise<Finding[]> {
    const doc = await this.json<{ findings: Finding[] }>(
      this.url("/findings", {
        volume_id: filter.volumeId,
        cls: filter.cls,
        review: filter.review,
      }),
    );
    return doc.findings;
  }

  async postReview(
    findingId: string,
    verdict: Verdict,
    correctedClass?: string,
  ): Promise<Finding> {
    return this.json<Finding>(
      this.url(`/findings/${encodeURIComponent(findingId)}/review`),
      {
        method: "POST",
        headers: {
          "Content-Type": "application/json",
          "X-Reviewer": this.reviewer,
        },
        body: JSON.stringify({
          verdict,
          ...(correctedClass !== undefined ? { corrected_class: correctedClass } : {}),
        }),
      },
    );
  }

  async getReport(volumeId?: string): Promise<Report> {
    return this.json<Report>(this.url("/report", { volume_id: volumeId }));
  }

  /**
   * Fetch a slice rendering. The 2D box always comes from the X-Box response
   * header — the client never invents overlay coordinates.
   */
  async getSlice(findingId: string, view: View): Promise<SliceRender> {
    const res = await this.fetchFn(
      this.url(`/findings/${encodeURIComponent(findingId)}/slice`, { view }),
    );
    if (!res.ok) throw new ApiError(res.status, res.statusText);
    const boxHeader = res.headers.get("X-Box") ?? "";
    const parts = boxHeader.split(",").map((s) => Number.parseInt(s, 10));
    if (parts.length !== 4 || parts.some((n) => Number.isNaN(n))) {
      throw new ApiError(502, `bad X-Box header: ${boxHeader}`);
    }
    const blob = await res.blob();
    return {
      view,
      sliceIndex: Number.parseInt(res.headers.get("X-Slice-Index") ?? "0", 10),
      box: parts as SliceBox,
      imageUrl: URL.createObjectURL(blob),
    };
  }
}
