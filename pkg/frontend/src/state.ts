// Central view state: current image, live parameters, latest fuse/evaluate
// responses, and the decision log. Slider moves debounce into one service
// round-trip; responses for superseded requests are discarded by sequence
// number, so the panes never mix stale boxes with fresh parameters.

import type { Transport } from "./api.js";
import { DecisionLog } from "./log.js";
import type { NumericParamField } from "./params.js";
import { validateParam } from "./params.js";
import type {
  EvaluateResponse,
  FuseResponse,
  Params,
  ParamsOverride,
} from "./types.js";

export type CancelFn = () => void;
export type Scheduler = (fn: () => void, delayMs: number) => CancelFn;

const realScheduler: Scheduler = (fn, delayMs) => {
  const handle = setTimeout(fn, delayMs);
  return () => clearTimeout(handle);
};

export type TunerState = {
  imageId: string | null;
  condition: string;
  params: Params;
  fuse: FuseResponse | null;
  metrics: EvaluateResponse | null;
  fieldErrors: Record<string, string>;
  pendingRequests: number;
};

export type Listener = (state: TunerState) => void;

export class TunerStore {
  private state: TunerState;
  private listeners: Listener[] = [];
  private fuseSeq = 0;
  private appliedFuseSeq = 0;
  private evalSeq = 0;
  private appliedEvalSeq = 0;
  private cancelDebounce: CancelFn | null = null;
  readonly log = new DecisionLog();

  constructor(
    private transport: Transport,
    defaults: Params,
    private options: {
      debounceMs?: number;
      scheduler?: Scheduler;
      evaluateOnChange?: boolean;
    } = {},
  ) {
    this.state = {
      imageId: null,
      condition: "N",
      params: structuredClone(defaults),
      fuse: null,
      metrics: null,
      fieldErrors: {},
      pendingRequests: 0,
    };
  }

  getState(): TunerState {
    return this.state;
  }

  subscribe(listener: Listener): CancelFn {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(partial: Partial<TunerState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.state);
  }

  /** Switch the displayed image; refreshes immediately (no debounce). */
  setImage(imageId: string): Promise<void> {
    this.emit({ imageId });
    return this.refresh();
  }

  setCondition(condition: string): Promise<void> {
    this.emit({ condition });
    return this.refresh();
  }

  /**
   * Validate and stage one parameter change. Valid values trigger a
   * debounced refresh; invalid values surface an inline error and send
   * nothing.
   */
  setParam(field: NumericParamField, value: number): void {
    const error = validateParam(field, value);
    if (error !== null) {
      this.emit({ fieldErrors: { ...this.state.fieldErrors, [field]: error } });
      return;
    }
    const fieldErrors = { ...this.state.fieldErrors };
    delete fieldErrors[field];
    this.emit({
      params: { ...this.state.params, [field]: value },
      fieldErrors,
    });
    this.scheduleRefresh();
  }

  setBoolParam(field: "fuse_coords" | "rule_i_enabled", value: boolean): void {
    this.emit({ params: { ...this.state.params, [field]: value } });
    this.scheduleRefresh();
  }

  private scheduleRefresh(): void {
    const delay = this.options.debounceMs ?? 150;
    const scheduler = this.options.scheduler ?? realScheduler;
    if (this.cancelDebounce) this.cancelDebounce();
    this.cancelDebounce = scheduler(() => {
      this.cancelDebounce = null;
      void this.refresh();
    }, delay);
  }

  /** Fire the fuse (and metrics) round-trip for the current state. */
  async refresh(): Promise<void> {
    const { imageId, condition, params } = this.state;
    if (imageId === null) return;
    const overrides = this.paramsOverride(params);
    const fuseSeq = ++this.fuseSeq;
    this.emit({ pendingRequests: this.state.pendingRequests + 1 });
    const fusePromise = this.transport
      .fuse({ image_id: imageId, condition, params: overrides })
      .then((response) => {
        if (fuseSeq > this.appliedFuseSeq) {
          this.appliedFuseSeq = fuseSeq;
          this.log.record(response);
          this.emit({ fuse: response });
        }
      })
      .finally(() => {
        this.emit({ pendingRequests: this.state.pendingRequests - 1 });
      });
    let evalPromise: Promise<void> = Promise.resolve();
    if (this.options.evaluateOnChange ?? true) {
      const evalSeq = ++this.evalSeq;
      evalPromise = this.transport
        .evaluate({ condition, params: overrides })
        .then((response) => {
          if (evalSeq > this.appliedEvalSeq) {
            this.appliedEvalSeq = evalSeq;
            this.emit({ metrics: response });
          }
        })
        .catch(() => {
          // Metrics are advisory; fuse results stay authoritative.
        });
    }
    await Promise.all([fusePromise.catch(() => undefined), evalPromise]);
  }

  private paramsOverride(params: Params): ParamsOverride {
    // Send the full parameter set: the service treats it as overrides onto
    // its own defaults, and explicit values keep request/response audit
    // trails self-describing.
    return { ...params };
  }
}
