/**
 * Pure view state: the click buffer, overlay toggles, and the review queue.
 * No DOM and no network here, so the scripted session tests drive exactly
 * the same logic the browser uses.
 */

import type { PointProblem, ReviewStatus, SampleSummary } from "./api.js";

export interface ClickPoint {
  u: number;
  v: number;
  /** true once the service has acknowledged this point in a fit */
  synced: boolean;
  /** service-side rejection reason for this point, if any */
  error?: string;
}

export class ClickBuffer {
  points: ClickPoint[] = [];

  add(u: number, v: number): void {
    this.points.push({ u, v, synced: false });
  }

  /** Index of the nearest point within the pick radius, or -1. */
  hitTest(u: number, v: number, radius: number): number {
    let best = -1;
    let bestDist = radius * radius;
    this.points.forEach((p, i) => {
      const d = (p.u - u) ** 2 + (p.v - v) ** 2;
      if (d <= bestDist) {
        best = i;
        bestDist = d;
      }
    });
    return best;
  }

  move(index: number, u: number, v: number): void {
    const p = this.points[index];
    if (!p) return;
    p.u = u;
    p.v = v;
    p.synced = false;
    delete p.error;
  }

  remove(index: number): void {
    this.points.splice(index, 1);
  }

  markSynced(): void {
    for (const p of this.points) {
      p.synced = true;
      delete p.error;
    }
  }

  markProblems(problems: PointProblem[]): void {
    for (const pr of problems) {
      const p = this.points[pr.index];
      if (p) p.error = pr.reason;
    }
  }

  get coordinates(): [number, number][] {
    return this.points.map((p) => [p.u, p.v]);
  }

  loadSynced(points: [number, number][]): void {
    this.points = points.map(([u, v]) => ({ u, v, synced: true }));
  }

  clear(): void {
    this.points = [];
  }
}

export interface OverlayToggles {
  mask: boolean;
  errorMap: boolean;
}

/** Ordered review queue with status badges and a cursor. */
export class ReviewQueue {
  position = 0;
  private ids: string[] = [];
  private statuses = new Map<string, ReviewStatus>();

  load(samples: SampleSummary[]): void {
    this.ids = samples.map((s) => s.sample_id);
    this.statuses = new Map(samples.map((s) => [s.sample_id, s.review_status]));
    this.position = Math.min(this.position, Math.max(0, this.ids.length - 1));
  }

  get length(): number {
    return this.ids.length;
  }

  get current(): string | undefined {
    return this.ids[this.position];
  }

  get all(): { sampleId: string; status: ReviewStatus }[] {
    return this.ids.map((id) => ({ sampleId: id, status: this.statuses.get(id) ?? "pending" }));
  }

  statusOf(sampleId: string): ReviewStatus {
    return this.statuses.get(sampleId) ?? "pending";
  }

  setStatus(sampleId: string, status: ReviewStatus): void {
    if (this.statuses.has(sampleId)) this.statuses.set(sampleId, status);
  }

  goTo(sampleId: string): boolean {
    const i = this.ids.indexOf(sampleId);
    if (i < 0) return false;
    this.position = i;
    return true;
  }

  next(): string | undefined {
    if (this.position < this.ids.length - 1) this.position += 1;
    return this.current;
  }

  prev(): string | undefined {
    if (this.position > 0) this.position -= 1;
    return this.current;
  }

  /** First not-yet-reviewed sample at or after the cursor, if any. */
  nextPending(): string | undefined {
    for (let i = this.position; i < this.ids.length; i++) {
      if (this.statusOf(this.ids[i]) === "pending") {
        this.position = i;
        return this.ids[i];
      }
    }
    return undefined;
  }
}
