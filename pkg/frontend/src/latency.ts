/** Client-side scene latency: how long the operator waits between
 * answering one survey question and seeing the next scene painted.
 *
 * The server logs its own processing time per answer; this log covers
 * the full round trip as experienced in the browser. Percentiles use
 * the nearest-rank method, matching the server's metrics endpoint.
 */

export interface LatencySample {
  caseId: string;
  fromIndex: number;
  ms: number;
}

export interface LatencySummary {
  count: number;
  p50Ms: number | null;
  p95Ms: number | null;
  maxMs: number | null;
}

export class SceneLatencyLog {
  private readonly samples: LatencySample[] = [];
  private pending: { caseId: string; fromIndex: number; startedAt: number } | null =
    null;

  constructor(private readonly now: () => number = () => performance.now()) {}

  /** Call when the operator submits an answer for the scene shown. */
  answerSent(caseId: string, fromIndex: number): void {
    this.pending = { caseId, fromIndex, startedAt: this.now() };
  }

  /** Call when the next scene (or the completion view) is on screen. */
  sceneShown(caseId: string): LatencySample | null {
    if (this.pending === null || this.pending.caseId !== caseId) return null;
    const sample: LatencySample = {
      caseId,
      fromIndex: this.pending.fromIndex,
      ms: this.now() - this.pending.startedAt,
    };
    this.pending = null;
    this.samples.push(sample);
    return sample;
  }

  /** Drop an in-flight measurement (e.g. the answer was rejected). */
  cancel(): void {
    this.pending = null;
  }

  all(): readonly LatencySample[] {
    return this.samples;
  }

  summary(): LatencySummary {
    if (this.samples.length === 0) {
      return { count: 0, p50Ms: null, p95Ms: null, maxMs: null };
    }
    const ordered = this.samples.map((s) => s.ms).sort((a, b) => a - b);
    return {
      count: ordered.length,
      p50Ms: nearestRank(ordered, 0.5),
      p95Ms: nearestRank(ordered, 0.95),
      maxMs: ordered[ordered.length - 1] ?? null,
    };
  }
}

export function nearestRank(ordered: readonly number[], quantile: number): number {
  if (ordered.length === 0) throw new Error("no samples");
  const index = Math.ceil(quantile * ordered.length) - 1;
  const clamped = Math.min(Math.max(index, 0), ordered.length - 1);
  return ordered[clamped] as number;
}
