// Session state: the editable inputs, framework toggles, and the last
// server responses. Rows are validated locally (positive value, parseable
// timestamp) before any request is issued; all displayed numbers come back
// from the server verbatim.

import type {
  Framework, HistoryPoint, InterpretRequest, InterpretResponse, Sex,
  SweepRecord,
} from "./types.js";

export interface HistoryRow {
  timestamp: string;
  value: string;   // raw text as typed
  unit: string;
}

export interface SessionState {
  sex: Sex;
  age: number;
  analyte: string;
  horizonDays: number;
  rows: HistoryRow[];
  frameworks: Record<Framework, boolean>;
  lastResponse: InterpretResponse | null;
  previousResponse: InterpretResponse | null;
  sweepCache: Map<string, SweepRecord[]>;
  errors: string[];
}

export function initialState(): SessionState {
  return {
    sex: "M",
    age: 50,
    analyte: "GLU",
    horizonDays: 30,
    rows: [],
    frameworks: { pop: true, per: true, norma: true },
    lastResponse: null,
    previousResponse: null,
    sweepCache: new Map(),
    errors: [],
  };
}

const RFC3339 = /^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}(:\d{2})?(Z|[+-]\d{2}:\d{2})?$/;

export function rowError(row: HistoryRow): string | null {
  const value = Number(row.value);
  if (!Number.isFinite(value) || value <= 0) {
    return "value must be a positive number";
  }
  const ts = row.timestamp.trim();
  if (!RFC3339.test(ts) && Number.isNaN(Date.parse(ts))) {
    return "timestamp must be RFC 3339 (e.g. 2024-01-31T00:00:00Z)";
  }
  if (!row.unit.trim()) {
    return "unit is required";
  }
  return null;
}

export function validateRows(rows: HistoryRow[]): string[] {
  const problems: string[] = [];
  rows.forEach((row, i) => {
    const err = rowError(row);
    if (err) {
      problems.push(`row ${i + 1}: ${err}`);
    }
  });
  return problems;
}

export function enabledFrameworks(state: SessionState): Framework[] {
  return (Object.keys(state.frameworks) as Framework[])
    .filter((f) => state.frameworks[f]);
}

export function toHistory(rows: HistoryRow[]): HistoryPoint[] {
  return rows.map((r) => ({
    timestamp: r.timestamp.trim(),
    value: Number(r.value),
    unit: r.unit.trim(),
  }));
}

export function buildRequest(state: SessionState): InterpretRequest {
  return {
    sex: state.sex,
    age: state.age,
    analyte: state.analyte,
    history: toHistory(state.rows),
    horizon_days: state.horizonDays,
    frameworks: enabledFrameworks(state),
  };
}

export function recordResponse(state: SessionState, resp: InterpretResponse): SessionState {
  return {
    ...state,
    previousResponse: state.lastResponse,
    lastResponse: resp,
    errors: [],
  };
}

export function sweepCacheKey(feature: string, grid: (number | string)[]): string {
  return `${feature}:${grid.join(",")}`;
}
