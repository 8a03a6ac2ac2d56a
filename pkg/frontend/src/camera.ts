export const MAX_UPLOAD_EDGE = 1024;

export class CameraPermissionError extends Error {
  constructor(cause: unknown) {
    super(`camera permission denied: ${String(cause)}`);
    this.name = "CameraPermissionError";
  }
}

/** Scale (w, h) so the longest edge is at most maxEdge, keeping aspect. */
export function computeScaledSize(
  width: number,
  height: number,
  maxEdge: number = MAX_UPLOAD_EDGE,
): { width: number; height: number } {
  const longest = Math.max(width, height);
  if (longest <= maxEdge) {
    return { width, height };
  }
  const scale = maxEdge / longest;
  return {
    width: Math.max(1, Math.round(width * scale)),
    height: Math.max(1, Math.round(height * scale)),
  };
}

export async function startCamera(video: HTMLVideoElement): Promise<MediaStream> {
  let stream: MediaStream;
  try {
    stream = await navigator.mediaDevices.getUserMedia({
      video: { facingMode: "environment" },
      audio: false,
    });
  } catch (err) {
    throw new CameraPermissionError(err);
  }
  video.srcObject = stream;
  await video.play();
  return stream;
}

/** Grab the current video frame, downscaled for upload, as a JPEG blob. */
export async function grabFrame(video: HTMLVideoElement): Promise<Blob> {
  const { width, height } = computeScaledSize(video.videoWidth, video.videoHeight);
  const canvas = document.createElement("canvas");
  canvas.width = width;
  canvas.height = height;
  const context = canvas.getContext("2d");
  if (!context) {
    throw new Error("canvas 2d context unavailable");
  }
  context.drawImage(video, 0, 0, width, height);
  return new Promise((resolve, reject) => {
    canvas.toBlob(
      (blob) => (blob ? resolve(blob) : reject(new Error("frame encoding failed"))),
      "image/jpeg",
      0.9,
    );
  });
}
