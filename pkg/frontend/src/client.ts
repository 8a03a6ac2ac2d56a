import type { PredictionResponse } from "./types.js";

export const DEFAULT_TIMEOUT_MS = 5000;

export class ServiceError extends Error {
  constructor(
    message: string,
    readonly status: number | null = null,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

export interface ClientOptions {
  timeoutMs?: number;
  // injectable for tests
  fetchImpl?: typeof fetch;
}

/**
 * Upload one frame to POST /api/v1/predict (multipart field "image").
 *
 * Rejects with ServiceError on any non-200 answer and on timeout; the caller
 * must treat every rejection as "unknown", never as clear pavement.
 */
export async function classifyImage(
  serviceUrl: string,
  frame: Blob,
  options: ClientOptions = {},
): Promise<PredictionResponse> {
  const timeoutMs = options.timeoutMs ?? DEFAULT_TIMEOUT_MS;
  const fetchImpl = options.fetchImpl ?? fetch;
  const body = new FormData();
  body.append("image", frame, "frame.jpg");

  const controller = new AbortController();
  const timer = setTimeout(() => controller.abort(), timeoutMs);
  try {
    let response: Response;
    try {
      response = await fetchImpl(
        `${serviceUrl.replace(/\/+$/, "")}/api/v1/predict`,
        { method: "POST", body, signal: controller.signal },
      );
    } catch (err) {
      if (controller.signal.aborted) {
        throw new ServiceError(`no answer within ${timeoutMs} ms`, null);
      }
      throw new ServiceError(`network failure: ${String(err)}`, null);
    }
    if (!response.ok) {
      throw new ServiceError(`service answered ${response.status}`, response.status);
    }
    return (await response.json()) as PredictionResponse;
  } finally {
    clearTimeout(timer);
  }
}
