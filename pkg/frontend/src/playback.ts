// Frame-sequence playback: advance the cursor by `stride` on each tick,
// pause freezes it (parameters stay adjustable), stop resets to the first
// frame.

export type PlaybackStatus = "stopped" | "playing" | "paused";

export class PlaybackController {
  private cursor = 0;
  private stride = 1;
  private status: PlaybackStatus = "stopped";

  constructor(
    private numFrames: number,
    private onFrame: (index: number) => void,
  ) {
    if (numFrames < 0) throw new Error("numFrames must be >= 0");
  }

  get currentStatus(): PlaybackStatus {
    return this.status;
  }

  get currentCursor(): number {
    return this.cursor;
  }

  get currentStride(): number {
    return this.stride;
  }

  setStride(stride: number): void {
    if (!Number.isInteger(stride) || stride < 1) {
      throw new Error(`stride must be a positive integer, got ${stride}`);
    }
    this.stride = stride;
  }

  setFrameCount(numFrames: number): void {
    this.numFrames = numFrames;
    if (this.cursor >= numFrames) this.cursor = 0;
  }

  play(): void {
    if (this.numFrames === 0) return;
    if (this.status !== "paused") {
      this.onFrame(this.cursor);
    }
    this.status = "playing";
  }

  pause(): void {
    if (this.status === "playing") this.status = "paused";
  }

  stop(): void {
    this.status = "stopped";
    this.cursor = 0;
  }

  /** One playback step; returns false once the sequence is exhausted. */
  tick(): boolean {
    if (this.status !== "playing") return false;
    const next = this.cursor + this.stride;
    if (next >= this.numFrames) {
      this.status = "stopped";
      this.cursor = 0;
      return false;
    }
    this.cursor = next;
    this.onFrame(this.cursor);
    return true;
  }

  /** Number of frames rendered by a full run at the current stride. */
  cyclesForFullRun(): number {
    if (this.numFrames === 0) return 0;
    return Math.ceil(this.numFrames / this.stride);
  }
}
