/**
 * The annotation canvas: RGB image with optional mask overlay, click to add
 * a point, drag to adjust, right-click (or Delete) to remove. Synced points
 * draw green, unsaved ones amber, rejected ones red with their reason.
 */

import type { ClickBuffer } from "./state.js";

const PICK_RADIUS_PX = 8;

export class AnnotationCanvas {
  onChange: (() => void) | null = null;

  private rgb: HTMLImageElement | null = null;
  private overlay: HTMLImageElement | null = null;
  private showOverlay = true;
  private dragIndex = -1;
  private selected = -1;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly buffer: ClickBuffer,
  ) {
    canvas.addEventListener("pointerdown", (e) => this.onPointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.onPointerMove(e));
    canvas.addEventListener("pointerup", () => (this.dragIndex = -1));
    canvas.addEventListener("contextmenu", (e) => {
      e.preventDefault();
      const [u, v] = this.toImage(e);
      const hit = this.buffer.hitTest(u, v, this.pickRadius());
      if (hit >= 0) {
        this.buffer.remove(hit);
        this.selected = -1;
        this.changed();
      }
    });
    window.addEventListener("keydown", (e) => {
      if (e.key === "Delete" && this.selected >= 0) {
        this.buffer.remove(this.selected);
        this.selected = -1;
        this.changed();
      }
    });
  }

  async setImages(rgbUrl: string, overlayUrl: string, width: number, height: number): Promise<void> {
    this.canvas.width = width;
    this.canvas.height = height;
    [this.rgb, this.overlay] = await Promise.all([loadImage(rgbUrl), loadImage(overlayUrl)]);
    this.render();
  }

  setOverlayVisible(visible: boolean): void {
    this.showOverlay = visible;
    this.render();
  }

  private pickRadius(): number {
    const scale = this.canvas.width / this.canvas.getBoundingClientRect().width;
    return PICK_RADIUS_PX * scale;
  }

  private toImage(e: MouseEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    const u = ((e.clientX - rect.left) / rect.width) * this.canvas.width;
    const v = ((e.clientY - rect.top) / rect.height) * this.canvas.height;
    return [u, v];
  }

  private onPointerDown(e: PointerEvent): void {
    if (e.button !== 0) return;
    const [u, v] = this.toImage(e);
    const hit = this.buffer.hitTest(u, v, this.pickRadius());
    if (hit >= 0) {
      this.dragIndex = hit;
      this.selected = hit;
    } else {
      this.buffer.add(Math.round(u * 2) / 2, Math.round(v * 2) / 2);
      this.selected = this.buffer.points.length - 1;
      this.changed();
    }
    this.canvas.setPointerCapture(e.pointerId);
  }

  private onPointerMove(e: PointerEvent): void {
    if (this.dragIndex < 0) return;
    const [u, v] = this.toImage(e);
    this.buffer.move(
      this.dragIndex,
      Math.min(Math.max(u, 0), this.canvas.width - 1),
      Math.min(Math.max(v, 0), this.canvas.height - 1),
    );
    this.changed();
  }

  private changed(): void {
    this.render();
    this.onChange?.();
  }

  render(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.rgb) ctx.drawImage(this.rgb, 0, 0);
    if (this.overlay && this.showOverlay) {
      ctx.globalAlpha = 0.45;
      ctx.drawImage(this.overlay, 0, 0);
      ctx.globalAlpha = 1.0;
    }
    this.buffer.points.forEach((p, i) => {
      ctx.beginPath();
      ctx.arc(p.u, p.v, i === this.selected ? 6 : 4.5, 0, 2 * Math.PI);
      ctx.fillStyle = p.error ? "#e4453a" : p.synced ? "#45c06f" : "#f3b73b";
      ctx.fill();
      ctx.strokeStyle = "#101418";
      ctx.lineWidth = 1.5;
      ctx.stroke();
      if (p.error) {
        ctx.fillStyle = "#ffb4ae";
        ctx.font = "11px sans-serif";
        ctx.fillText(p.error, p.u + 8, p.v - 8);
      }
    });
  }
}

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`failed to load ${url}`));
    img.src = url;
  });
}
