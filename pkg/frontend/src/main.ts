/** Browser shell: wires the session controller to the DOM. */

import { ApiClient, ApiError } from "./api.js";
import { AnnotationCanvas } from "./canvasTool.js";
import { parsePly } from "./ply.js";
import { SessionController } from "./session.js";
import { CloudViewer } from "./viewer3d.js";

const api = new ApiClient("");
const session = new SessionController(api);

const el = {
  list: document.getElementById("sample-list") as HTMLUListElement,
  canvas: document.getElementById("annotation-canvas") as HTMLCanvasElement,
  cloud: document.getElementById("cloud-canvas") as HTMLCanvasElement,
  fitInfo: document.getElementById("fit-info") as HTMLDivElement,
  errorBox: document.getElementById("error-box") as HTMLDivElement,
  previewError: document.getElementById("preview-error") as HTMLImageElement,
  previewDepth: document.getElementById("preview-depth") as HTMLImageElement,
  fitBtn: document.getElementById("fit-btn") as HTMLButtonElement,
  acceptBtn: document.getElementById("accept-btn") as HTMLButtonElement,
  rejectBtn: document.getElementById("reject-btn") as HTMLButtonElement,
  clearBtn: document.getElementById("clear-btn") as HTMLButtonElement,
  maskToggle: document.getElementById("mask-toggle") as HTMLInputElement,
  errToggle: document.getElementById("error-toggle") as HTMLInputElement,
  status: document.getElementById("status-line") as HTMLDivElement,
};

const annotationCanvas = new AnnotationCanvas(el.canvas, session.active);
const cloudViewer = new CloudViewer(el.cloud);

function setStatus(text: string): void {
  el.status.textContent = text;
}

function renderList(): void {
  el.list.innerHTML = "";
  for (const { sampleId, status } of session.queue.all) {
    const li = document.createElement("li");
    li.className = `sample ${status}${sampleId === session.queue.current ? " current" : ""}`;
    li.innerHTML = `<span class="badge ${status}">${status[0].toUpperCase()}</span> ${sampleId}`;
    li.onclick = () => void openSample(sampleId);
    el.list.appendChild(li);
  }
}

async function openSample(sampleId: string): Promise<void> {
  const detail = await session.open(sampleId);
  await annotationCanvas.setImages(api.rgbUrl(sampleId), api.overlayUrl(sampleId), detail.width, detail.height);
  el.previewError.removeAttribute("src");
  el.previewDepth.removeAttribute("src");
  el.fitInfo.textContent =
    detail.instances.length > 0
      ? `${detail.instances.length} fitted instance(s) on record`
      : "no fit yet: click 3+ coplanar points near the glass";
  el.errorBox.textContent = "";
  cloudViewer.setPlane(null);
  renderList();
  setStatus(`${sampleId}: ${detail.review_status}, ${detail.mask_instance_ids.length} glass instance(s)`);
  void refreshCloud();
}

async function refreshCloud(): Promise<void> {
  try {
    const buffer = await api.fetchCloud(session.currentSampleId);
    cloudViewer.setCloud(parsePly(buffer));
  } catch {
    // Preview cloud is best-effort; the 2D workflow stays usable.
  }
}

async function doFit(): Promise<void> {
  el.errorBox.textContent = "";
  try {
    const fit = await session.fit();
    annotationCanvas.render();
    const [a, b, c] = fit.plane.normal;
    el.fitInfo.textContent =
      `instance ${fit.matched_mask_id} (overlap ${(fit.overlap_ratio * 100).toFixed(0)}%)  ` +
      `normal (${a.toFixed(4)}, ${b.toFixed(4)}, ${c.toFixed(4)})  offset ${fit.plane.offset.toFixed(4)} m  ` +
      `residual RMS ${(fit.rms * 1000).toFixed(2)} mm  ${fit.instance_pixels} px`;
    el.previewError.src = `${fit.preview.error_url}?t=${Date.now()}`;
    el.previewDepth.src = `${fit.preview.depth_url}?t=${Date.now()}`;
    cloudViewer.setPlane(fit.plane);
    void refreshCloud();
  } catch (err) {
    annotationCanvas.render();
    if (err instanceof ApiError) {
      const d = err.detail;
      el.errorBox.textContent = typeof d === "string" ? d : `${d.reason}${d.message ? `: ${d.message}` : ""}`;
    } else {
      el.errorBox.textContent = String(err);
    }
  }
}

async function doReview(kind: "accept" | "reject"): Promise<void> {
  const id = session.currentSampleId;
  if (!window.confirm(`${kind} sample ${id}?`)) return;
  const next = kind === "accept" ? await session.accept() : await session.reject();
  renderList();
  if (next !== undefined && next !== id) {
    await openSample(next);
  } else {
    setStatus(`${id}: ${session.queue.statusOf(id)} (queue done)`);
  }
}

el.fitBtn.onclick = () => void doFit();
el.acceptBtn.onclick = () => void doReview("accept");
el.rejectBtn.onclick = () => void doReview("reject");
el.clearBtn.onclick = () => {
  session.active.clear();
  annotationCanvas.render();
};
el.maskToggle.onchange = () => annotationCanvas.setOverlayVisible(el.maskToggle.checked);
el.errToggle.onchange = () => {
  el.previewError.style.display = el.errToggle.checked ? "block" : "none";
};
annotationCanvas.onChange = () => {
  el.fitInfo.textContent = `${session.active.points.length} click(s); fit to update the plane`;
};

window.addEventListener("keydown", (e) => {
  if (e.target instanceof HTMLInputElement) return;
  if (e.key === "ArrowRight") {
    const next = session.queue.next();
    if (next) void openSample(next);
  } else if (e.key === "ArrowLeft") {
    const prev = session.queue.prev();
    if (prev) void openSample(prev);
  } else if (e.key === "f") {
    void doFit();
  }
});

async function boot(): Promise<void> {
  setStatus("connecting...");
  if (!(await api.health())) {
    setStatus("service unreachable: start it with `glassdepth serve --root <dataset>`");
    return;
  }
  await session.start();
  renderList();
  const first = session.queue.nextPending() ?? session.queue.current;
  if (first) await openSample(first);
  else setStatus("no samples in the dataset");
}

void boot();
