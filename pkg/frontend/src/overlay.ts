// Canvas overlay rendering. Works against a structural subset of
// CanvasRenderingContext2D so the drawing logic is testable with a
// recording fake.

import type { Box, DetectionOut, FusedDetectionOut, GroundTruthOut } from "./types.js";

export interface DrawContext {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
}

const SOURCE_COLORS: Record<string, string> = {
  MODEL_A: "#ff9b3d",
  MODEL_B: "#4da3ff",
  ENSEMBLE: "#ffe63d",
  GT: "#7dff7d",
};

const KIND_LABEL: Record<string, string> = {
  AGREEMENT_FUSED: "fused",
  SOLO_STRONG: "solo-I",
  SOLO_ADVANTAGE: "solo-II",
  SOLO_NEAR_TIE: "solo-III",
  DROPPED_NMS: "nms-dropped",
};

export function colorFor(source: string): string {
  return SOURCE_COLORS[source] ?? "#cccccc";
}

function drawBox(ctx: DrawContext, box: Box, color: string, width: number, label: string): void {
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.strokeRect(box.x1, box.y1, box.x2 - box.x1, box.y2 - box.y1);
  if (label) {
    ctx.font = "12px sans-serif";
    ctx.fillStyle = color;
    ctx.fillText(label, box.x1 + 2, Math.max(10, box.y1 - 4));
  }
}

function strikeThrough(ctx: DrawContext, box: Box, color: string): void {
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.moveTo(box.x1, box.y1);
  ctx.lineTo(box.x2, box.y2);
  ctx.stroke();
}

export function renderModelPane(
  ctx: DrawContext,
  width: number,
  height: number,
  detections: DetectionOut[],
): void {
  ctx.clearRect(0, 0, width, height);
  for (const det of detections) {
    drawBox(
      ctx,
      det.box,
      colorFor(det.source),
      2,
      `${det.class_name} ${det.confidence.toFixed(2)}`,
    );
  }
}

export function renderGroundTruth(ctx: DrawContext, gts: GroundTruthOut[]): void {
  for (const gt of gts) {
    drawBox(ctx, gt.box, colorFor("GT"), 1, gt.class_name);
  }
}

/**
 * Ensemble pane: kept boxes drawn solid and labelled with their rule; in
 * explain mode, candidates suppressed by the final NMS are drawn
 * struck-through at the positions of their contributing inputs.
 */
export function renderEnsemblePane(
  ctx: DrawContext,
  width: number,
  height: number,
  kept: FusedDetectionOut[],
  options: {
    explain?: boolean;
    inputBoxes?: Map<string, Box>; // "MODEL:index" -> original input box
    nmsDropped?: { kind: string; sources: { model_id: string; index: number }[] }[];
  } = {},
): void {
  ctx.clearRect(0, 0, width, height);
  for (const fused of kept) {
    const kindLabel = KIND_LABEL[fused.trace.kind] ?? fused.trace.kind;
    drawBox(
      ctx,
      fused.detection.box,
      colorFor("ENSEMBLE"),
      3,
      `${fused.detection.class_name} ${fused.detection.confidence.toFixed(2)} [${kindLabel}]`,
    );
  }
  if (options.explain && options.nmsDropped && options.inputBoxes) {
    for (const trace of options.nmsDropped) {
      if (trace.kind !== "DROPPED_NMS") continue;
      for (const source of trace.sources) {
        const box = options.inputBoxes.get(`${source.model_id}:${source.index}`);
        if (box) {
          drawBox(ctx, box, "#888888", 1, KIND_LABEL.DROPPED_NMS);
          strikeThrough(ctx, box, "#888888");
        }
      }
    }
  }
}
