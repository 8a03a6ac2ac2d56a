import type {
  AlertState,
  CaptureMode,
  HistoryEntry,
  PredictionResponse,
} from "./types.js";

export const HISTORY_LIMIT = 50;
export const MIN_INTERVAL_S = 2;

export const SPOKEN_MESSAGES: Record<string, string> = {
  warn: "Snow detected ahead",
  clear: "Pavement looks clear",
  unknown: "Status unknown. Treat the pavement as hazardous",
};

export interface SessionState {
  serviceUrl: string;
  captureMode: CaptureMode;
  intervalS: number;
  alert: AlertState;
  statusText: string;
  lastResponse: PredictionResponse | null;
  history: HistoryEntry[];
  inFlight: boolean;
}

export interface SessionDeps {
  classify: (frame: Blob) => Promise<PredictionResponse>;
  speak: (text: string) => void;
  now: () => number;
}

export function createSession(serviceUrl: string): SessionState {
  return {
    serviceUrl,
    captureMode: "tap_to_check",
    intervalS: 5,
    alert: "idle",
    statusText: "Point the camera at the pavement and check",
    lastResponse: null,
    history: [],
    inFlight: false,
  };
}

/** Interval mode never polls faster than the service-protection floor. */
export function clampIntervalS(value: number): number {
  return Number.isFinite(value) ? Math.max(MIN_INTERVAL_S, value) : MIN_INTERVAL_S;
}

function pushHistory(state: SessionState, entry: HistoryEntry): void {
  state.history.push(entry);
  while (state.history.length > HISTORY_LIMIT) {
    state.history.shift(); // evict the oldest
  }
}

/**
 * Classify one captured frame and update the alert.
 *
 * Fail-safe by construction: the only path to "clear" is a fresh successful
 * response labeled snow_free; every rejection (timeout, network, non-200)
 * lands on "unknown" with a spoken hazard warning. At most one request is in
 * flight; a call while busy is skipped.
 */
export async function classifyAndUpdate(
  state: SessionState,
  frame: Blob,
  deps: SessionDeps,
): Promise<SessionState> {
  if (state.inFlight) {
    return state; // skip; the pending answer will update the alert
  }
  state.inFlight = true;
  state.alert = "checking";
  state.statusText = "Checking the pavement…";
  try {
    const response = await deps.classify(frame);
    state.lastResponse = response;
    pushHistory(state, {
      timestamp: deps.now(),
      label: response.label,
      snow_probability: response.snow_probability,
    });
    const percent = Math.round(response.snow_probability * 100);
    if (response.label === "snow") {
      state.alert = "warn";
      state.statusText = `SNOW AHEAD — snow probability ${percent}%`;
      deps.speak(SPOKEN_MESSAGES.warn);
    } else {
      state.alert = "clear";
      state.statusText = `Clear — snow probability ${percent}%`;
      deps.speak(SPOKEN_MESSAGES.clear);
    }
  } catch (err) {
    state.lastResponse = null;
    state.alert = "unknown";
    state.statusText = `Unknown — treat as hazardous (${err instanceof Error ? err.message : String(err)})`;
    deps.speak(SPOKEN_MESSAGES.unknown);
  } finally {
    state.inFlight = false;
  }
  return state;
}

/** History rows for display, newest first, with an empty-state prompt. */
export function renderHistory(state: SessionState): {
  rows: HistoryEntry[];
  emptyPrompt: string | null;
} {
  if (state.history.length === 0) {
    return { rows: [], emptyPrompt: "No checks yet — tap Check pavement to start" };
  }
  return { rows: [...state.history].reverse(), emptyPrompt: null };
}

export interface IntervalController {
  stop: () => void;
}

/**
 * Drive interval mode: one check every intervalS seconds, skipping ticks
 * while a request is pending.
 */
export function startIntervalMode(
  state: SessionState,
  grabFrame: () => Promise<Blob>,
  deps: SessionDeps,
  onUpdate: (state: SessionState) => void,
): IntervalController {
  state.captureMode = "interval";
  state.intervalS = clampIntervalS(state.intervalS);
  const timer = setInterval(async () => {
    if (state.inFlight) {
      return; // previous request still pending
    }
    const frame = await grabFrame();
    await classifyAndUpdate(state, frame, deps);
    onUpdate(state);
  }, state.intervalS * 1000);
  return {
    stop: () => {
      clearInterval(timer);
      state.captureMode = "tap_to_check";
    },
  };
}
