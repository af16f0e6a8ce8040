// What-if diffs: after an edit triggers a new interpretation, show how each
// framework's interval width and flag moved, so the next edit is informed.
// All numbers are the server's; this module only subtracts them.

import type { Framework, FrameworkResult, InterpretResponse, SweepRecord } from "./types.js";

export interface FrameworkDiff {
  framework: Framework;
  widthBefore: number | null;
  widthAfter: number | null;
  widthDelta: number | null;
  flagBefore: boolean | null;
  flagAfter: boolean | null;
  flagChanged: boolean;
}

export function intervalWidth(result: FrameworkResult | undefined | null): number | null {
  if (!result || result.lower === null || result.upper === null) {
    return null;
  }
  return result.upper - result.lower;
}

export function diffResponses(prev: InterpretResponse | null,
                              next: InterpretResponse): FrameworkDiff[] {
  const out: FrameworkDiff[] = [];
  for (const fw of Object.keys(next.frameworks) as Framework[]) {
    const before = prev?.frameworks[fw] ?? null;
    const after = next.frameworks[fw] ?? null;
    const widthBefore = intervalWidth(before);
    const widthAfter = intervalWidth(after);
    out.push({
      framework: fw,
      widthBefore,
      widthAfter,
      widthDelta: widthBefore !== null && widthAfter !== null ? widthAfter - widthBefore : null,
      flagBefore: before?.flag_abnormal ?? null,
      flagAfter: after?.flag_abnormal ?? null,
      flagChanged: (before?.flag_abnormal ?? null) !== (after?.flag_abnormal ?? null),
    });
  }
  return out;
}

export interface SweepDelta {
  value: number | string | null;
  width: number;
  pctWidthChange: number;
  widthDeltaVsBaseline: number;
}

// The server's sweep rows carry the baseline width in the "baseline" row;
// deltas here are plain subtractions of server numbers.
export function sweepDeltas(records: SweepRecord[]): SweepDelta[] {
  const baseline = records.find((r) => r.feature === "baseline");
  if (!baseline) {
    throw new Error("sweep response is missing the baseline row");
  }
  return records
    .filter((r) => r.feature !== "baseline")
    .map((r) => ({
      value: r.value,
      width: r.interval_width,
      pctWidthChange: r.pct_width_change,
      widthDeltaVsBaseline: r.interval_width - baseline.interval_width,
    }));
}
