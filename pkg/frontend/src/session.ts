/**
 * Session controller: the annotation workflow without any DOM.
 *
 * Load a sample, collect clicks, ask the service for a plane fit, accept or
 * reject, advance the queue. The browser shell renders this state; the
 * scripted tests drive it headlessly over real HTTP.
 */

import { ApiClient, ApiError } from "./api.js";
import type { FitErrorDetail, FitResponse, SampleDetail } from "./api.js";
import { ClickBuffer, OverlayToggles, ReviewQueue } from "./state.js";

export class SessionController {
  readonly queue = new ReviewQueue();
  readonly active = new ClickBuffer();
  readonly toggles: OverlayToggles = { mask: true, errorMap: true };

  detail: SampleDetail | null = null;
  lastFit: FitResponse | null = null;
  lastError: FitErrorDetail | string | null = null;

  constructor(readonly api: ApiClient) {}

  async start(): Promise<void> {
    this.queue.load(await this.api.listSamples());
  }

  async refresh(): Promise<void> {
    const current = this.queue.current;
    await this.start();
    if (current !== undefined) this.queue.goTo(current);
    if (current !== undefined) await this.open(current);
  }

  async open(sampleId: string): Promise<SampleDetail> {
    if (!this.queue.goTo(sampleId)) throw new Error(`sample ${sampleId} is not in the queue`);
    this.detail = await this.api.sampleDetail(sampleId);
    this.lastFit = null;
    this.lastError = null;
    // The buffer mirrors the last server-acknowledged clicks; anything the
    // user adds on top stays visually distinct until the next fit.
    const committed = this.detail.instances.flatMap((i) => i.points);
    this.active.loadSynced(committed);
    return this.detail;
  }

  get currentSampleId(): string {
    const id = this.queue.current;
    if (id === undefined || this.detail === null) throw new Error("no sample open");
    return id;
  }

  addClick(u: number, v: number): void {
    if (this.detail === null) throw new Error("no sample open");
    if (u < 0 || v < 0 || u >= this.detail.width || v >= this.detail.height) {
      throw new Error(`click (${u}, ${v}) is outside the ${this.detail.width}x${this.detail.height} image`);
    }
    this.active.add(u, v);
  }

  async fit(): Promise<FitResponse> {
    const sampleId = this.currentSampleId;
    this.lastError = null;
    try {
      const fit = await this.api.fit(sampleId, this.active.coordinates);
      this.active.markSynced();
      this.lastFit = fit;
      return fit;
    } catch (err) {
      if (err instanceof ApiError) {
        this.lastError = err.detail;
        if (typeof err.detail !== "string" && err.detail.points) {
          this.active.markProblems(err.detail.points);
        }
      }
      throw err;
    }
  }

  private async review(status: "accepted" | "rejected"): Promise<string | undefined> {
    const sampleId = this.currentSampleId;
    await this.api.review(sampleId, status);
    this.queue.setStatus(sampleId, status);
    const next = this.queue.nextPending() ?? this.queue.next();
    if (next !== undefined && next !== sampleId) await this.open(next);
    return next;
  }

  accept(): Promise<string | undefined> {
    return this.review("accepted");
  }

  reject(): Promise<string | undefined> {
    return this.review("rejected");
  }
}
