import { renderHistory, type SessionState } from "./session.js";

const ALERT_CLASSES: Record<string, string> = {
  idle: "alert idle",
  checking: "alert checking",
  warn: "alert warn",
  clear: "alert clear",
  unknown: "alert unknown",
};

const ALERT_HEADLINES: Record<string, string> = {
  idle: "Ready",
  checking: "Checking…",
  warn: "⚠ SNOW AHEAD",
  clear: "✓ Clear",
  unknown: "? UNKNOWN — CAUTION",
};

export function renderAlert(state: SessionState, panel: HTMLElement): void {
  panel.className = ALERT_CLASSES[state.alert];
  const headline = panel.querySelector<HTMLElement>(".headline");
  const detail = panel.querySelector<HTMLElement>(".detail");
  if (headline) headline.textContent = ALERT_HEADLINES[state.alert];
  if (detail) detail.textContent = state.statusText;
  // screen readers announce the change without focus movement
  panel.setAttribute("aria-live", "assertive");
  panel.setAttribute("role", "alert");
}

export function renderHistoryList(state: SessionState, list: HTMLElement): void {
  const { rows, emptyPrompt } = renderHistory(state);
  list.replaceChildren();
  if (emptyPrompt) {
    const item = document.createElement("li");
    item.className = "empty";
    item.textContent = emptyPrompt;
    list.appendChild(item);
    return;
  }
  for (const entry of rows) {
    const item = document.createElement("li");
    item.className = entry.label === "snow" ? "snow" : "snow-free";
    const time = new Date(entry.timestamp).toLocaleTimeString();
    const percent = Math.round(entry.snow_probability * 100);
    item.textContent = `${time} — ${entry.label === "snow" ? "snow" : "clear"} (${percent}%)`;
    list.appendChild(item);
  }
}

export function renderPermissionError(panel: HTMLElement, message: string): void {
  panel.className = "alert unknown";
  const headline = panel.querySelector<HTMLElement>(".headline");
  const detail = panel.querySelector<HTMLElement>(".detail");
  if (headline) headline.textContent = "Camera unavailable";
  if (detail) {
    detail.textContent =
      `${message} — allow camera access in the browser settings for this site, ` +
      "then reload the page.";
  }
}

const URL_STORAGE_KEY = "pavesnow.serviceUrl";

export function loadServiceUrl(fallback: string): string {
  try {
    return window.localStorage.getItem(URL_STORAGE_KEY) ?? fallback;
  } catch {
    return fallback;
  }
}

export function persistServiceUrl(url: string): void {
  try {
    window.localStorage.setItem(URL_STORAGE_KEY, url);
  } catch {
    // private mode; the session still works, the URL just is not remembered
  }
}
