import { CameraPermissionError, grabFrame, startCamera } from "./camera.js";
import { classifyImage } from "./client.js";
import {
  classifyAndUpdate,
  clampIntervalS,
  createSession,
  startIntervalMode,
  type IntervalController,
  type SessionDeps,
} from "./session.js";
import { speak } from "./speech.js";
import {
  loadServiceUrl,
  persistServiceUrl,
  renderAlert,
  renderHistoryList,
  renderPermissionError,
} from "./ui.js";

const video = document.getElementById("preview") as HTMLVideoElement;
const alertPanel = document.getElementById("alert-panel") as HTMLElement;
const historyList = document.getElementById("history") as HTMLElement;
const checkButton = document.getElementById("check") as HTMLButtonElement;
const intervalToggle = document.getElementById("interval-toggle") as HTMLInputElement;
const intervalSeconds = document.getElementById("interval-seconds") as HTMLInputElement;
const urlInput = document.getElementById("service-url") as HTMLInputElement;

const state = createSession(loadServiceUrl("http://localhost:8000"));
urlInput.value = state.serviceUrl;

const deps: SessionDeps = {
  classify: (frame) => classifyImage(state.serviceUrl, frame),
  speak,
  now: () => Date.now(),
};

function repaint(): void {
  renderAlert(state, alertPanel);
  renderHistoryList(state, historyList);
}

urlInput.addEventListener("change", () => {
  state.serviceUrl = urlInput.value.trim();
  persistServiceUrl(state.serviceUrl);
});

checkButton.addEventListener("click", async () => {
  try {
    const frame = await grabFrame(video);
    await classifyAndUpdate(state, frame, deps);
  } catch (err) {
    state.alert = "unknown";
    state.statusText = `Unknown — treat as hazardous (${String(err)})`;
    speak("Status unknown. Treat the pavement as hazardous");
  }
  repaint();
});

let interval: IntervalController | null = null;
intervalToggle.addEventListener("change", () => {
  if (intervalToggle.checked) {
    state.intervalS = clampIntervalS(Number(intervalSeconds.value));
    intervalSeconds.value = String(state.intervalS);
    interval = startIntervalMode(state, () => grabFrame(video), deps, repaint);
  } else {
    interval?.stop();
    interval = null;
  }
});

startCamera(video)
  .then(() => repaint())
  .catch((err) => {
    if (err instanceof CameraPermissionError) {
      renderPermissionError(alertPanel, err.message);
    } else {
      renderPermissionError(alertPanel, String(err));
    }
    checkButton.disabled = true;
    intervalToggle.disabled = true;
  });
