// Wire types for the /v1 JSON API.

export type Sex = "F" | "M";
export type Framework = "pop" | "per" | "norma";

export interface HistoryPoint {
  timestamp: string;
  value: number;
  unit: string;
}

export interface InterpretRequest {
  sex: Sex;
  age: number;
  analyte: string;
  history: HistoryPoint[];
  horizon_days?: number | null;
  frameworks?: Framework[];
  config_preset?: string | null;
}

export interface CanonicalPoint {
  timestamp: string;
  value: number;
}

export interface FrameworkResult {
  lower: number | null;
  upper: number | null;
  flag_abnormal: boolean | null;
  valid: boolean | null;
  point_forecast: number | null;
}

export interface InterpretResponse {
  analyte: string;
  unit: string;
  canonical_history: CanonicalPoint[];
  latest_value: number | null;
  horizon_days: number;
  frameworks: Partial<Record<Framework, FrameworkResult>>;
  warnings: string[];
}

export type SweepFeature = "age" | "sex" | "history_length" | "horizon" | "variability";

export interface SweepRequest {
  base: InterpretRequest;
  feature: SweepFeature;
  grid: (number | string)[];
}

export interface SweepRecord {
  analyte: string;
  feature: string;
  value: number | string | null;
  median: number;
  interval_width: number;
  pct_width_change: number;
}

export interface AnalyteInfo {
  code: string;
  name: string;
  unit: string;
  ri_female: [number | null, number | null];
  ri_male: [number | null, number | null];
  sex_stratified: boolean;
}

export interface ApiError {
  code: string;
  message: string;
}
