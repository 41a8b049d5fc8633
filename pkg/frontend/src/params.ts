// Client-side validation and slider metadata for the tunable parameters.
// Ranges mirror the service's request validation, so anything accepted here
// cannot 422 on range grounds.

export type NumericParamField =
  | "t_iou"
  | "gamma"
  | "f1_margin"
  | "conf_thresh"
  | "solo_strong"
  | "near_tie_conf"
  | "nms_iou";

export type ParamMeta = {
  field: NumericParamField;
  label: string;
  min: number;
  max: number;
  step: number;
  minExclusive?: boolean;
};

export const PARAM_METAS: ParamMeta[] = [
  { field: "t_iou", label: "pairing IoU", min: 0, max: 1, step: 0.05, minExclusive: true },
  { field: "gamma", label: "confidence exponent", min: 0, max: 5, step: 0.1 },
  { field: "f1_margin", label: "near-tie F1 margin", min: 0, max: 1, step: 0.01 },
  { field: "conf_thresh", label: "advantage confidence floor", min: 0, max: 1, step: 0.01 },
  { field: "solo_strong", label: "strong override threshold", min: 0, max: 1, step: 0.01 },
  { field: "near_tie_conf", label: "near-tie confidence floor", min: 0, max: 1, step: 0.01 },
  { field: "nms_iou", label: "final NMS IoU", min: 0, max: 1, step: 0.05, minExclusive: true },
];

const BY_FIELD = new Map(PARAM_METAS.map((m) => [m.field, m]));

/** Returns an error message, or null when the value is acceptable. */
export function validateParam(field: NumericParamField, value: number): string | null {
  const meta = BY_FIELD.get(field);
  if (!meta) return `unknown parameter ${field}`;
  if (!Number.isFinite(value)) return `${meta.label} must be a number`;
  if (meta.minExclusive ? value <= meta.min : value < meta.min) {
    return `${meta.label} must be ${meta.minExclusive ? ">" : ">="} ${meta.min}`;
  }
  if (value > meta.max) return `${meta.label} must be <= ${meta.max}`;
  return null;
}
