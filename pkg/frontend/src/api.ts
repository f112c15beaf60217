/**
 * Typed client for the annotation service. Every geometric quantity the UI
 * displays originates from these responses; the client never derives its
 * own planes, depths, or errors.
 */

export type ReviewStatus = "pending" | "accepted" | "rejected";

export interface SampleSummary {
  sample_id: string;
  review_status: ReviewStatus;
  instance_count: number;
  annotated_count: number;
}

export interface PlaneParams {
  normal: [number, number, number];
  offset: number;
}

export interface InstanceRecord {
  points: [number, number][];
  matched_mask_id: number | null;
  plane: PlaneParams | null;
  rms: number | null;
}

export interface SampleDetail {
  sample_id: string;
  width: number;
  height: number;
  intrinsics: { fx: number; fy: number; cx: number; cy: number };
  review_status: ReviewStatus;
  mask_instance_ids: number[];
  instances: InstanceRecord[];
}

export interface FitResponse {
  plane: PlaneParams;
  rms: number;
  matched_mask_id: number;
  overlap_ratio: number;
  instance_pixels: number;
  mean_instance_depth: number | null;
  preview: { depth_url: string; error_url: string };
}

export interface PointProblem {
  index: number;
  reason: string;
}

export interface FitErrorDetail {
  reason: string;
  points?: PointProblem[];
  message?: string;
  needed?: number;
  got?: number;
}

/** Service-side rejection (422 and friends) with the machine-readable detail. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: FitErrorDetail | string,
  ) {
    super(typeof detail === "string" ? detail : detail.reason);
    this.name = "ApiError";
  }
}

async function parseError(response: Response): Promise<never> {
  let detail: FitErrorDetail | string = response.statusText;
  try {
    const body = (await response.json()) as { detail?: FitErrorDetail | string };
    if (body.detail !== undefined) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async listSamples(): Promise<SampleSummary[]> {
    const r = await fetch(this.url("/api/samples"));
    if (!r.ok) await parseError(r);
    return (await r.json()) as SampleSummary[];
  }

  async sampleDetail(sampleId: string): Promise<SampleDetail> {
    const r = await fetch(this.url(`/api/samples/${encodeURIComponent(sampleId)}`));
    if (!r.ok) await parseError(r);
    return (await r.json()) as SampleDetail;
  }

  async fit(sampleId: string, points: [number, number][]): Promise<FitResponse> {
    const r = await fetch(this.url(`/api/samples/${encodeURIComponent(sampleId)}/fit`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ points }),
    });
    if (!r.ok) await parseError(r);
    return (await r.json()) as FitResponse;
  }

  async review(sampleId: string, status: "accepted" | "rejected"): Promise<void> {
    const r = await fetch(this.url(`/api/samples/${encodeURIComponent(sampleId)}/review`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ status }),
    });
    if (!r.ok) await parseError(r);
  }

  async fetchCloud(sampleId: string): Promise<ArrayBuffer> {
    const r = await fetch(this.url(`/api/samples/${encodeURIComponent(sampleId)}/cloud.ply`));
    if (!r.ok) await parseError(r);
    return await r.arrayBuffer();
  }

  async health(): Promise<boolean> {
    try {
      const r = await fetch(this.url("/api/health"));
      return r.ok;
    } catch {
      return false;
    }
  }

  rgbUrl(sampleId: string): string {
    return this.url(`/api/samples/${encodeURIComponent(sampleId)}/rgb.png`);
  }

  overlayUrl(sampleId: string): string {
    return this.url(`/api/samples/${encodeURIComponent(sampleId)}/overlay.png`);
  }

  depthUrl(sampleId: string): string {
    return this.url(`/api/samples/${encodeURIComponent(sampleId)}/depth.png`);
  }
}
