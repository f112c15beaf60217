/**
 * Orbit/zoom point-cloud viewer on a plain 2D canvas: rotate the cloud into
 * view space, perspective-project, splat depth-sorted pixels. Also draws
 * the fitted plane (from service parameters) as a translucent grid so the
 * annotator can judge whether the glass fill is geometrically consistent.
 */

import type { PlaneParams } from "./api.js";
import type { Cloud } from "./ply.js";

export class CloudViewer {
  yaw = -0.4;
  pitch = -0.25;
  zoom = 1.0;

  private cloud: Cloud | null = null;
  private plane: PlaneParams | null = null;
  private center = [0, 0, 0];
  private radius = 1;
  private dragging = false;
  private lastX = 0;
  private lastY = 0;

  constructor(private readonly canvas: HTMLCanvasElement) {
    canvas.addEventListener("pointerdown", (e) => {
      this.dragging = true;
      this.lastX = e.clientX;
      this.lastY = e.clientY;
      canvas.setPointerCapture(e.pointerId);
    });
    canvas.addEventListener("pointermove", (e) => {
      if (!this.dragging) return;
      this.yaw += (e.clientX - this.lastX) * 0.008;
      this.pitch += (e.clientY - this.lastY) * 0.008;
      this.pitch = Math.max(-1.5, Math.min(1.5, this.pitch));
      this.lastX = e.clientX;
      this.lastY = e.clientY;
      this.render();
    });
    canvas.addEventListener("pointerup", () => (this.dragging = false));
    canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.zoom *= Math.exp(-e.deltaY * 0.001);
      this.zoom = Math.max(0.1, Math.min(20, this.zoom));
      this.render();
    });
  }

  setCloud(cloud: Cloud): void {
    this.cloud = cloud;
    if (cloud.count > 0) {
      const c = [0, 0, 0];
      for (let i = 0; i < cloud.count; i++) {
        c[0] += cloud.points[3 * i];
        c[1] += cloud.points[3 * i + 1];
        c[2] += cloud.points[3 * i + 2];
      }
      this.center = c.map((v) => v / cloud.count);
      let r2 = 0;
      for (let i = 0; i < cloud.count; i++) {
        const dx = cloud.points[3 * i] - this.center[0];
        const dy = cloud.points[3 * i + 1] - this.center[1];
        const dz = cloud.points[3 * i + 2] - this.center[2];
        r2 = Math.max(r2, dx * dx + dy * dy + dz * dz);
      }
      this.radius = Math.sqrt(r2) || 1;
    }
    this.render();
  }

  setPlane(plane: PlaneParams | null): void {
    this.plane = plane;
    this.render();
  }

  private viewTransform(): (p: [number, number, number]) => [number, number, number] {
    const cy = Math.cos(this.yaw);
    const sy = Math.sin(this.yaw);
    const cp = Math.cos(this.pitch);
    const sp = Math.sin(this.pitch);
    const dist = (this.radius * 2.5) / this.zoom;
    const [ox, oy, oz] = this.center;
    return ([x, y, z]) => {
      let dx = x - ox;
      let dy = y - oy;
      let dz = z - oz;
      // yaw about the vertical image axis, then pitch.
      const x1 = cy * dx + sy * dz;
      const z1 = -sy * dx + cy * dz;
      const y2 = cp * dy - sp * z1;
      const z2 = sp * dy + cp * z1;
      return [x1, y2, z2 + dist];
    };
  }

  render(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width: w, height: h } = this.canvas;
    ctx.fillStyle = "#14171c";
    ctx.fillRect(0, 0, w, h);
    if (!this.cloud || this.cloud.count === 0) {
      ctx.fillStyle = "#8899aa";
      ctx.fillText("no preview cloud", 12, 20);
      return;
    }
    const view = this.viewTransform();
    const f = 1.1 * Math.min(w, h);

    const order = new Array<number>(this.cloud.count);
    const depths = new Float64Array(this.cloud.count);
    const xs = new Float64Array(this.cloud.count);
    const ys = new Float64Array(this.cloud.count);
    for (let i = 0; i < this.cloud.count; i++) {
      const [vx, vy, vz] = view([
        this.cloud.points[3 * i],
        this.cloud.points[3 * i + 1],
        this.cloud.points[3 * i + 2],
      ]);
      depths[i] = vz;
      xs[i] = w / 2 + (f * vx) / vz;
      ys[i] = h / 2 + (f * vy) / vz;
      order[i] = i;
    }
    order.sort((a, b) => depths[b] - depths[a]);

    for (const i of order) {
      if (depths[i] <= 0.05) continue;
      const x = xs[i];
      const y = ys[i];
      if (x < -2 || y < -2 || x > w + 2 || y > h + 2) continue;
      if (this.cloud.colors) {
        ctx.fillStyle = `rgb(${this.cloud.colors[3 * i]},${this.cloud.colors[3 * i + 1]},${this.cloud.colors[3 * i + 2]})`;
      } else {
        ctx.fillStyle = "#7fd1ff";
      }
      const size = Math.max(1, Math.min(4, (2.5 * this.radius) / depths[i]));
      ctx.fillRect(x, y, size, size);
    }

    if (this.plane) this.drawPlane(ctx, view, f, w, h);
  }

  private drawPlane(
    ctx: CanvasRenderingContext2D,
    view: (p: [number, number, number]) => [number, number, number],
    f: number,
    w: number,
    h: number,
  ): void {
    const n = this.plane!.normal;
    const d = this.plane!.offset;
    // Anchor the grid at the cloud center projected onto the plane.
    const c = this.center;
    const dist = n[0] * c[0] + n[1] * c[1] + n[2] * c[2] + d;
    const p0: [number, number, number] = [c[0] - dist * n[0], c[1] - dist * n[1], c[2] - dist * n[2]];
    const seed: [number, number, number] = Math.abs(n[2]) < 0.9 ? [0, 0, 1] : [1, 0, 0];
    const e1 = normalize(cross(seed, n));
    const e2 = cross(n, e1);

    ctx.strokeStyle = "rgba(120, 220, 140, 0.55)";
    ctx.lineWidth = 1;
    const half = this.radius * 0.9;
    const steps = 8;
    for (let i = -steps; i <= steps; i++) {
      const t = (i / steps) * half;
      this.line(ctx, view, f, w, h, add(p0, add(scale(e1, t), scale(e2, -half))), add(p0, add(scale(e1, t), scale(e2, half))));
      this.line(ctx, view, f, w, h, add(p0, add(scale(e2, t), scale(e1, -half))), add(p0, add(scale(e2, t), scale(e1, half))));
    }
  }

  private line(
    ctx: CanvasRenderingContext2D,
    view: (p: [number, number, number]) => [number, number, number],
    f: number,
    w: number,
    h: number,
    a: [number, number, number],
    b: [number, number, number],
  ): void {
    const [ax, ay, az] = view(a);
    const [bx, by, bz] = view(b);
    if (az <= 0.05 || bz <= 0.05) return;
    ctx.beginPath();
    ctx.moveTo(w / 2 + (f * ax) / az, h / 2 + (f * ay) / az);
    ctx.lineTo(w / 2 + (f * bx) / bz, h / 2 + (f * by) / bz);
    ctx.stroke();
  }
}

function cross(a: [number, number, number], b: [number, number, number]): [number, number, number] {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

function normalize(v: [number, number, number]): [number, number, number] {
  const n = Math.hypot(v[0], v[1], v[2]) || 1;
  return [v[0] / n, v[1] / n, v[2] / n];
}

function add(a: [number, number, number], b: [number, number, number]): [number, number, number] {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

function scale(v: [number, number, number], s: number): [number, number, number] {
  return [v[0] * s, v[1] * s, v[2] * s];
}
