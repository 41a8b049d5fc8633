// Browser entry point: wires the DOM panes, sliders, playback and log onto
// the store. Everything rendered in the ensemble pane comes from the
// service; no fusion logic lives client-side.

import { ApiClient } from "./api.js";
import { renderEnsemblePane, renderGroundTruth, renderModelPane, DrawContext } from "./overlay.js";
import { PARAM_METAS } from "./params.js";
import { PlaybackController } from "./playback.js";
import { TunerStore } from "./state.js";
import type { Box, DetectionOut, GroundTruthOut, ImageEntry } from "./types.js";

const SERVICE_URL =
  new URLSearchParams(window.location.search).get("service") ??
  "http://127.0.0.1:8437";

const client = new ApiClient(SERVICE_URL);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function canvasCtx(id: string): { canvas: HTMLCanvasElement; ctx: CanvasRenderingContext2D } {
  const canvas = el<HTMLCanvasElement>(id);
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error(`no 2d context for #${id}`);
  return { canvas, ctx };
}

async function drawPixels(canvas: HTMLCanvasElement, ctx: CanvasRenderingContext2D, url: string): Promise<boolean> {
  return new Promise((resolve) => {
    const image = new Image();
    image.onload = () => {
      ctx.drawImage(image, 0, 0, canvas.width, canvas.height);
      resolve(true);
    };
    image.onerror = () => resolve(false);
    image.src = url;
  });
}

async function bootstrap(): Promise<void> {
  const defaults = await client.defaults();
  const imagesPage = await client.images();
  const images: ImageEntry[] = imagesPage.items;
  const store = new TunerStore(client, defaults);

  const paneA = canvasCtx("pane-a");
  const paneB = canvasCtx("pane-b");
  const paneE = canvasCtx("pane-e");
  const frameLabel = el<HTMLSpanElement>("frame-label");
  const logList = el<HTMLUListElement>("decision-log");
  const metricsBox = el<HTMLDivElement>("metrics");
  const explainToggle = el<HTMLInputElement>("explain-mode");
  const statusLine = el<HTMLDivElement>("status-line");

  let detsA: DetectionOut[] = [];
  let detsB: DetectionOut[] = [];
  let gts: GroundTruthOut[] = [];

  function inputBoxes(): Map<string, Box> {
    const map = new Map<string, Box>();
    detsA.forEach((d, i) => map.set(`MODEL_A:${i}`, d.box));
    detsB.forEach((d, i) => map.set(`MODEL_B:${i}`, d.box));
    return map;
  }

  async function loadImagePanes(imageId: string): Promise<void> {
    const entry = images.find((item) => item.image_id === imageId);
    if (!entry) return;
    for (const pane of [paneA, paneB, paneE]) {
      pane.canvas.width = entry.width;
      pane.canvas.height = entry.height;
    }
    detsA = (await client.detections(imageId, "MODEL_A")) as DetectionOut[];
    detsB = (await client.detections(imageId, "MODEL_B")) as DetectionOut[];
    gts = (await client.detections(imageId, "GT")) as GroundTruthOut[];
    if (entry.has_pixels) {
      const url = client.pixelsUrl(imageId);
      const drawn = await Promise.all([
        drawPixels(paneA.canvas, paneA.ctx, url),
        drawPixels(paneB.canvas, paneB.ctx, url),
        drawPixels(paneE.canvas, paneE.ctx, url),
      ]);
      if (drawn.some((ok) => !ok)) {
        statusLine.textContent = "pixels failed to load; boxes only";
      }
    }
    renderModelPane(paneA.ctx as DrawContext, entry.width, entry.height, detsA);
    renderGroundTruth(paneA.ctx as DrawContext, gts);
    renderModelPane(paneB.ctx as DrawContext, entry.width, entry.height, detsB);
    renderGroundTruth(paneB.ctx as DrawContext, gts);
  }

  store.subscribe((state) => {
    if (state.fuse && state.imageId) {
      const entry = images.find((item) => item.image_id === state.imageId);
      if (entry) {
        renderEnsemblePane(
          paneE.ctx as DrawContext,
          entry.width,
          entry.height,
          state.fuse.kept,
          {
            explain: explainToggle.checked,
            inputBoxes: inputBoxes(),
            nmsDropped: state.fuse.dropped,
          },
        );
      }
      logList.innerHTML = "";
      for (const logEntry of store.log.newestFirst().slice(0, 40)) {
        const item = document.createElement("li");
        const head = document.createElement("span");
        head.textContent = `${logEntry.imageId}  ${logEntry.summary}`;
        item.appendChild(head);
        const details = document.createElement("ul");
        details.className = "log-details hidden";
        for (const line of logEntry.details) {
          const detail = document.createElement("li");
          detail.textContent = line;
          details.appendChild(detail);
        }
        head.addEventListener("click", () => details.classList.toggle("hidden"));
        item.appendChild(details);
        logList.appendChild(item);
      }
    }
    if (state.metrics) {
      metricsBox.textContent =
        `mAP@0.5 ${state.metrics.map50.toFixed(3)}  ` +
        `mAP@0.5:0.95 ${state.metrics.map50_95.toFixed(3)}  ` +
        `P ${state.metrics.micro_precision.toFixed(3)}  ` +
        `R ${state.metrics.micro_recall.toFixed(3)}  ` +
        `F1 ${state.metrics.micro_f1.toFixed(3)}`;
    }
    const errors = Object.entries(state.fieldErrors);
    for (const meta of PARAM_METAS) {
      const errorNode = document.getElementById(`error-${meta.field}`);
      if (errorNode) {
        errorNode.textContent = state.fieldErrors[meta.field] ?? "";
      }
    }
    statusLine.textContent = state.pendingRequests > 0 ? "…" : errors.length ? "fix inputs" : "";
  });

  // Parameter sliders + numeric entry.
  const controls = el<HTMLDivElement>("param-controls");
  for (const meta of PARAM_METAS) {
    const row = document.createElement("div");
    row.className = "param-row";
    const label = document.createElement("label");
    label.textContent = meta.label;
    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = String(meta.minExclusive ? meta.min + meta.step : meta.min);
    slider.max = String(meta.max);
    slider.step = String(meta.step);
    slider.value = String(defaults[meta.field]);
    const numeric = document.createElement("input");
    numeric.type = "number";
    numeric.step = String(meta.step);
    numeric.value = String(defaults[meta.field]);
    const error = document.createElement("span");
    error.className = "param-error";
    error.id = `error-${meta.field}`;
    slider.addEventListener("input", () => {
      numeric.value = slider.value;
      store.setParam(meta.field, Number(slider.value));
    });
    numeric.addEventListener("change", () => {
      store.setParam(meta.field, Number(numeric.value));
    });
    row.append(label, slider, numeric, error);
    controls.appendChild(row);
  }
  const fuseCoords = el<HTMLInputElement>("fuse-coords");
  fuseCoords.checked = defaults.fuse_coords;
  fuseCoords.addEventListener("change", () => store.setBoolParam("fuse_coords", fuseCoords.checked));
  const ruleI = el<HTMLInputElement>("rule-i");
  ruleI.checked = defaults.rule_i_enabled;
  ruleI.addEventListener("change", () => store.setBoolParam("rule_i_enabled", ruleI.checked));

  // Playback over the frame sequence.
  const playback = new PlaybackController(images.length, (index) => {
    const imageId = images[index].image_id;
    frameLabel.textContent = `${imageId} (${index + 1}/${images.length})`;
    void loadImagePanes(imageId).then(() => store.setImage(imageId));
  });
  let timer: number | null = null;
  el<HTMLButtonElement>("btn-play").addEventListener("click", () => {
    playback.play();
    if (timer === null) {
      timer = window.setInterval(() => {
        if (!playback.tick() && playback.currentStatus === "stopped" && timer !== null) {
          window.clearInterval(timer);
          timer = null;
        }
      }, 700);
    }
  });
  el<HTMLButtonElement>("btn-pause").addEventListener("click", () => playback.pause());
  el<HTMLButtonElement>("btn-stop").addEventListener("click", () => {
    playback.stop();
    if (timer !== null) {
      window.clearInterval(timer);
      timer = null;
    }
  });
  el<HTMLInputElement>("stride").addEventListener("change", (event) => {
    playback.setStride(Number((event.target as HTMLInputElement).value));
  });
  explainToggle.addEventListener("change", () => void store.refresh());

  if (images.length > 0) {
    const first = images[0].image_id;
    frameLabel.textContent = `${first} (1/${images.length})`;
    await loadImagePanes(first);
    await store.setImage(first);
  } else {
    statusLine.textContent = "dataset has no images";
  }
}

void bootstrap().catch((error) => {
  const status = document.getElementById("status-line");
  if (status) status.textContent = `failed to reach service: ${error}`;
});
