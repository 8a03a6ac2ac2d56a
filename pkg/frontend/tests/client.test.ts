import { afterEach, describe, expect, it, vi } from "vitest";

import { DEFAULT_TIMEOUT_MS, ServiceError, classifyImage } from "../src/client.js";
import { computeScaledSize, MAX_UPLOAD_EDGE } from "../src/camera.js";

const frame = new Blob(["bytes"], { type: "image/jpeg" });

const okBody = {
  label: "snow",
  snow_probability: 0.8,
  per_model: { vgg19: 0.7, resnet50: 0.9 },
  ensemble_weight_a: 0.5,
  alert: "warn",
  model_version: "digest",
  latency_ms: 20,
};

afterEach(() => {
  vi.useRealTimers();
});

describe("classifyImage", () => {
  it("posts the frame as the multipart field 'image' and parses the body", async () => {
    const fetchImpl = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      expect(String(url)).toBe("http://svc/api/v1/predict");
      expect(init?.method).toBe("POST");
      const body = init?.body as FormData;
      expect(body.get("image")).toBeInstanceOf(Blob);
      return new Response(JSON.stringify(okBody), { status: 200 });
    });
    const result = await classifyImage("http://svc/", frame, { fetchImpl });
    expect(result.label).toBe("snow");
    expect(result.snow_probability).toBe(0.8);
  });

  it("rejects on a non-200 answer with the status attached", async () => {
    const fetchImpl = vi.fn(async () => new Response("{}", { status: 503 }));
    await expect(classifyImage("http://svc", frame, { fetchImpl })).rejects.toThrowError(
      ServiceError,
    );
    await expect(classifyImage("http://svc", frame, { fetchImpl })).rejects.toMatchObject({
      status: 503,
    });
  });

  it("rejects on network failure", async () => {
    const fetchImpl = vi.fn(async () => {
      throw new TypeError("fetch failed");
    });
    await expect(classifyImage("http://svc", frame, { fetchImpl })).rejects.toThrow(
      /network failure/,
    );
  });

  it("aborts a hanging request at the 5-second default timeout", async () => {
    vi.useFakeTimers();
    expect(DEFAULT_TIMEOUT_MS).toBe(5000);
    const fetchImpl = vi.fn(
      (_url: RequestInfo | URL, init?: RequestInit) =>
        new Promise<Response>((_resolve, reject) => {
          init?.signal?.addEventListener("abort", () =>
            reject(new DOMException("aborted", "AbortError")),
          );
        }),
    );
    const pending = classifyImage("http://svc", frame, { fetchImpl });
    const expectation = expect(pending).rejects.toThrow(/no answer within 5000 ms/);
    await vi.advanceTimersByTimeAsync(DEFAULT_TIMEOUT_MS);
    await expectation;
  });
});

describe("upload downscaling", () => {
  it("caps the longest edge at 1024 and keeps aspect", () => {
    expect(computeScaledSize(4032, 3024)).toEqual({ width: 1024, height: 768 });
    expect(computeScaledSize(3024, 4032)).toEqual({ width: 768, height: 1024 });
    expect(computeScaledSize(800, 600)).toEqual({ width: 800, height: 600 });
    expect(computeScaledSize(MAX_UPLOAD_EDGE, MAX_UPLOAD_EDGE)).toEqual({
      width: MAX_UPLOAD_EDGE,
      height: MAX_UPLOAD_EDGE,
    });
  });
});
