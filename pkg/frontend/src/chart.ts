// Timeline chart model: history points, one interval band per framework,
// and per-point flags. Band bounds are verbatim server values; a point
// outside the population band is flagged in every present band (the
// override rule, mirrored visually).

import type { Framework, InterpretResponse } from "./types.js";

export interface BandModel {
  framework: Framework;
  lower: number | null;
  upper: number | null;
}

export interface PointModel {
  timestamp: string;
  value: number;
  flaggedIn: Framework[];
}

export interface ChartModel {
  points: PointModel[];
  bands: BandModel[];
  legendNotes: string[];
  unit: string;
}

const FRAMEWORK_ORDER: Framework[] = ["pop", "per", "norma"];

function outside(value: number, lower: number | null, upper: number | null): boolean {
  if (lower !== null && value < lower) {
    return true;
  }
  if (upper !== null && value > upper) {
    return true;
  }
  return false;
}

export function buildChartModel(resp: InterpretResponse | null,
                                requested: Framework[]): ChartModel {
  if (resp === null) {
    return { points: [], bands: [], legendNotes: [], unit: "" };
  }
  const bands: BandModel[] = [];
  const legendNotes: string[] = [];
  for (const fw of FRAMEWORK_ORDER) {
    if (!requested.includes(fw)) {
      continue;
    }
    const result = resp.frameworks[fw];
    if (!result) {
      legendNotes.push(`${fw}: band unavailable`);
      continue;
    }
    bands.push({ framework: fw, lower: result.lower, upper: result.upper });
  }

  const pop = resp.frameworks.pop ?? null;
  const points: PointModel[] = resp.canonical_history.map((p) => {
    const popAbnormal = pop !== null && outside(p.value, pop.lower, pop.upper);
    const flaggedIn: Framework[] = [];
    for (const band of bands) {
      if (popAbnormal || outside(p.value, band.lower, band.upper)) {
        flaggedIn.push(band.framework);
      }
    }
    return { timestamp: p.timestamp, value: p.value, flaggedIn };
  });
  return { points, bands, legendNotes, unit: resp.unit };
}

// ------------------------------------------------------------------ SVG

const BAND_COLORS: Record<Framework, string> = {
  pop: "#8ecae6",
  per: "#f4a261",
  norma: "#90be6d",
};

export function renderTimelineSvg(model: ChartModel, width = 720, height = 280): string {
  if (model.points.length === 0) {
    return `<svg width="${width}" height="${height}" role="img"></svg>`;
  }
  const times = model.points.map((p) => Date.parse(p.timestamp));
  const values = model.points.map((p) => p.value);
  const bounds = model.bands.flatMap((b) =>
    [b.lower, b.upper].filter((v): v is number => v !== null));
  const yAll = values.concat(bounds);
  const [tMin, tMax] = [Math.min(...times), Math.max(...times)];
  const [yMin, yMax] = [Math.min(...yAll), Math.max(...yAll)];
  const pad = 0.08 * (yMax - yMin || 1);
  const x = (t: number) => tMax === tMin ? width / 2 : 40 + (t - tMin) / (tMax - tMin) * (width - 60);
  const y = (v: number) =>
    height - 24 - (v - (yMin - pad)) / ((yMax + pad) - (yMin - pad)) * (height - 48);

  const parts: string[] = [
    `<svg width="${width}" height="${height}" role="img" xmlns="http://www.w3.org/2000/svg">`,
  ];
  for (const band of model.bands) {
    const top = band.upper === null ? yMax + pad : band.upper;
    const bottom = band.lower === null ? yMin - pad : band.lower;
    parts.push(
      `<rect class="band band-${band.framework}" x="40" width="${width - 60}" ` +
      `y="${y(top).toFixed(1)}" height="${Math.max(0, y(bottom) - y(top)).toFixed(1)}" ` +
      `fill="${BAND_COLORS[band.framework]}" fill-opacity="0.25"/>`,
    );
  }
  const path = model.points
    .map((p, i) => `${i === 0 ? "M" : "L"}${x(Date.parse(p.timestamp)).toFixed(1)},${y(p.value).toFixed(1)}`)
    .join(" ");
  parts.push(`<path d="${path}" fill="none" stroke="#333" stroke-width="1.5"/>`);
  for (const p of model.points) {
    const flagged = p.flaggedIn.length > 0;
    parts.push(
      `<circle class="${flagged ? "pt flagged" : "pt"}" ` +
      `cx="${x(Date.parse(p.timestamp)).toFixed(1)}" cy="${y(p.value).toFixed(1)}" ` +
      `r="${flagged ? 5 : 3.5}" fill="${flagged ? "#d62828" : "#1d3557"}"/>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}
