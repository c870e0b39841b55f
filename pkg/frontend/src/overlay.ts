/** Pure geometry for the per-song overlay: activity curves drawn as SVG
 * paths, boundary tick marks, and colored segment spans.  No DOM access,
 * so every mapping from song time to pixels is unit-testable.
 */

import type { PlotDataResponse } from "./api.js";

export interface BoundaryMark {
  x: number;
  snapped: boolean;
}

export interface SegmentBox {
  x: number;
  width: number;
  index: number;
  predicted: string | null;
}

export function timeToX(t: number, duration: number, width: number): number {
  if (duration <= 0) {
    return 0;
  }
  return (Math.min(Math.max(t, 0), duration) / duration) * width;
}

/** Polyline path ("M x,y L x,y …") for one score curve; scores in [0,1]
 * map to y = height (0) … y = 0 (1). */
export function curvePath(
  times: number[],
  scores: number[],
  duration: number,
  width: number,
  height: number,
): string {
  const n = Math.min(times.length, scores.length);
  if (n === 0) {
    return "";
  }
  const points: string[] = [];
  for (let i = 0; i < n; i++) {
    const x = timeToX(times[i]!, duration, width);
    const score = Math.min(Math.max(scores[i]!, 0), 1);
    const y = height - score * height;
    points.push(`${round2(x)},${round2(y)}`);
  }
  return `M${points.join(" L")}`;
}

export function boundaryMarks(
  boundaries: number[],
  snapped: boolean[],
  duration: number,
  width: number,
): BoundaryMark[] {
  return boundaries.map((t, i) => ({
    x: round2(timeToX(t, duration, width)),
    snapped: snapped[i] ?? false,
  }));
}

export function segmentBoxes(
  plot: Pick<PlotDataResponse, "segments" | "duration">,
  width: number,
): SegmentBox[] {
  return plot.segments.map((seg) => {
    const x = timeToX(seg.start, plot.duration, width);
    return {
      x: round2(x),
      width: round2(timeToX(seg.end, plot.duration, width) - x),
      index: seg.index,
      predicted: seg.predicted,
    };
  });
}

/** Stable color per class id so spans and badges agree across views. */
export function classColor(classId: string | null, classIds: string[]): string {
  if (classId === null) {
    return "#9aa0a6";
  }
  const palette = [
    "#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2",
    "#b279a2", "#eeca3b", "#ff9da6",
  ];
  const at = classIds.indexOf(classId);
  const pick = at >= 0 ? at : hashCode(classId);
  return palette[((pick % palette.length) + palette.length) % palette.length]!;
}

function hashCode(s: string): number {
  let h = 0;
  for (let i = 0; i < s.length; i++) {
    h = (h * 31 + s.charCodeAt(i)) | 0;
  }
  return h;
}

function round2(x: number): number {
  return Math.round(x * 100) / 100;
}
