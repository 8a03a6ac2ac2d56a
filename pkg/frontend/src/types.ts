/** Response body of POST /api/v1/predict, mirrored field for field. */
export interface PredictionResponse {
  label: "snow" | "snow_free";
  snow_probability: number;
  per_model: Record<string, number>;
  ensemble_weight_a: number;
  alert: "warn" | "clear";
  model_version: string;
  latency_ms: number;
}

/** What the walker currently sees. Failure paths may only land on "unknown". */
export type AlertState = "idle" | "checking" | "warn" | "clear" | "unknown";

export interface HistoryEntry {
  timestamp: number;
  label: "snow" | "snow_free";
  snow_probability: number;
}

export type CaptureMode = "tap_to_check" | "interval";
