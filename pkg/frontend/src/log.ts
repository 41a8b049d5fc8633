// Newest-first ring buffer of ensemble decisions, one entry per completed
// fuse round-trip, with per-kind count deltas against the previous entry for
// the same image.

import type { FuseResponse, TraceOut } from "./types.js";
import { TRACE_KINDS } from "./types.js";

export type LogEntry = {
  seq: number;
  imageId: string;
  summary: string;
  counts: Record<string, number>;
  deltas: Record<string, number>;
  details: string[];
};

function describeTrace(trace: TraceOut, kept: boolean): string {
  const who = trace.sources.map((s) => `${s.model_id}#${s.index}`).join("+");
  const scores = trace.scores
    ? " (" +
      Object.entries(trace.scores)
        .map(([m, s]) => `${m}=${s.toFixed(3)}`)
        .join(", ") +
      ")"
    : "";
  return `${kept ? "kept" : "drop"} ${trace.kind} ${who}${scores}`;
}

export class DecisionLog {
  private entries: LogEntry[] = [];
  private lastCounts = new Map<string, Record<string, number>>();
  private seq = 0;

  constructor(private capacity = 200) {}

  record(response: FuseResponse): LogEntry {
    const previous = this.lastCounts.get(response.image_id);
    const deltas: Record<string, number> = {};
    for (const kind of TRACE_KINDS) {
      const now = response.counts[kind] ?? 0;
      const before = previous ? previous[kind] ?? 0 : now;
      if (now !== before) deltas[kind] = now - before;
    }
    const summaryParts = Object.entries(response.counts)
      .filter(([, n]) => n > 0)
      .map(([kind, n]) => `${kind}:${n}`);
    const deltaParts = Object.entries(deltas).map(
      ([kind, d]) => `${kind} ${d > 0 ? "+" : ""}${d}`,
    );
    const entry: LogEntry = {
      seq: ++this.seq,
      imageId: response.image_id,
      summary:
        summaryParts.join(" ") +
        (deltaParts.length ? `  [${deltaParts.join(", ")}]` : ""),
      counts: { ...response.counts },
      deltas,
      details: [
        ...response.kept.map((f) => describeTrace(f.trace, true)),
        ...response.dropped.map((t) => describeTrace(t, false)),
      ],
    };
    this.lastCounts.set(response.image_id, { ...response.counts });
    this.entries.unshift(entry);
    if (this.entries.length > this.capacity) this.entries.pop();
    return entry;
  }

  newestFirst(): readonly LogEntry[] {
    return this.entries;
  }

  clear(): void {
    this.entries = [];
    this.lastCounts.clear();
  }
}
