// Wire types mirroring the tuning service JSON schemas.

export type Box = { x1: number; y1: number; x2: number; y2: number };

export type DetectionOut = {
  box: Box;
  class_id: number;
  class_name: string;
  confidence: number;
  source: string;
};

export type GroundTruthOut = {
  box: Box;
  class_id: number;
  class_name: string;
};

export type TraceSource = { model_id: string; index: number };

export type TraceOut = {
  kind: string;
  sources: TraceSource[];
  scores: Record<string, number> | null;
};

export type FusedDetectionOut = {
  detection: DetectionOut;
  trace: TraceOut;
};

export type Params = {
  t_iou: number;
  gamma: number;
  f1_margin: number;
  conf_thresh: number;
  solo_strong: number;
  near_tie_conf: number;
  model_conf_floor: Record<string, number>;
  fuse_coords: boolean;
  nms_iou: number;
  rule_i_enabled: boolean;
};

export type ParamsOverride = Partial<Params>;

export type FuseRequest = {
  image_id: string;
  condition?: string;
  params?: ParamsOverride;
};

export type FuseResponse = {
  image_id: string;
  condition: string;
  params: Params;
  kept: FusedDetectionOut[];
  dropped: TraceOut[];
  counts: Record<string, number>;
};

export type EvaluateRequest = {
  condition?: string;
  source?: string;
  params?: ParamsOverride;
};

export type ClassEvalOut = {
  class_id: number;
  class_name: string;
  ap50: number | null;
  ap50_95: number | null;
  precision: number;
  recall: number;
  f1: number;
  tp: number;
  fp: number;
  fn: number;
  n_gt: number;
};

export type EvaluateResponse = {
  condition: string;
  source: string;
  params: Params;
  per_class: ClassEvalOut[];
  map50: number;
  map50_95: number;
  micro_precision: number;
  micro_recall: number;
  micro_f1: number;
  macro_f1: number;
  tp: number;
  fp: number;
  fn: number;
  confusion: number[][];
  class_order: number[];
};

export type ImageEntry = {
  image_id: string;
  width: number;
  height: number;
  conditions: string[];
  has_pixels: boolean;
};

export type ImagesPage = {
  items: ImageEntry[];
  page: number;
  page_size: number;
  total: number;
  pages: number;
};

export const TRACE_KINDS = [
  "AGREEMENT_FUSED",
  "SOLO_STRONG",
  "SOLO_ADVANTAGE",
  "SOLO_NEAR_TIE",
  "DROPPED_UNMATCHED",
  "DROPPED_PREFILTER",
  "DROPPED_NMS",
] as const;
