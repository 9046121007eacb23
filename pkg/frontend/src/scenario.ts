/**
 * What-if scenario state and its edits.
 *
 * A scenario is a plain value: the selected patient and model, the
 * intervention epochs, behavior bounds, and planner knobs. Edits are pure
 * functions returning a new scenario with a bumped version stamp; the
 * version lets the controller discard responses that arrive after a newer
 * edit already superseded the request.
 */

import type { PatientDoc, PlannerConfigSpec, PlanRequest } from "./api.js";

export interface ScenarioState {
  patientId: string;
  modelId: string;
  /** intervention start times, kept sorted and unique */
  epochs: number[];
  /** run-wide [low, high] per behavior; lock a behavior with low == high */
  bounds: Record<string, [number, number]>;
  /** condition codes to chart; empty means all conditions */
  overlays: string[];
  smoothness: number;
  nStages: number;
  /** years the patient follows a plan after each epoch */
  adherenceWindow: number;
  horizon: number;
  version: number;
}

export function initialScenario(patientId: string, modelId: string): ScenarioState {
  return {
    patientId,
    modelId,
    epochs: [],
    bounds: {},
    overlays: [],
    smoothness: 0.05,
    nStages: 5,
    adherenceWindow: 1,
    horizon: 10,
    version: 0,
  };
}

function bump(s: ScenarioState, patch: Partial<ScenarioState>): ScenarioState {
  return { ...s, ...patch, version: s.version + 1 };
}

export function addEpoch(s: ScenarioState, t: number): ScenarioState {
  const epochs = [...new Set([...s.epochs, t])].sort((a, b) => a - b);
  return bump(s, { epochs });
}

export function removeEpoch(s: ScenarioState, t: number): ScenarioState {
  return bump(s, { epochs: s.epochs.filter((e) => e !== t) });
}

export function setBounds(
  s: ScenarioState,
  behavior: string,
  low: number,
  high: number,
): ScenarioState {
  if (low > high) {
    throw new RangeError(`bounds for ${behavior} reversed: ${low} > ${high}`);
  }
  return bump(s, { bounds: { ...s.bounds, [behavior]: [low, high] } });
}

/** Pin a behavior at a fixed level for the whole run. */
export function lockBehavior(s: ScenarioState, behavior: string, level: number): ScenarioState {
  return setBounds(s, behavior, level, level);
}

export function clearBounds(s: ScenarioState, behavior: string): ScenarioState {
  const bounds = { ...s.bounds };
  delete bounds[behavior];
  return bump(s, { bounds });
}

export function setSmoothness(s: ScenarioState, smoothness: number): ScenarioState {
  return bump(s, { smoothness });
}

export function setHorizon(s: ScenarioState, horizon: number): ScenarioState {
  return bump(s, { horizon });
}

export function setStages(s: ScenarioState, nStages: number): ScenarioState {
  return bump(s, { nStages });
}

export function setAdherenceWindow(s: ScenarioState, adherenceWindow: number): ScenarioState {
  return bump(s, { adherenceWindow });
}

/** Show or hide one condition's chart panel. */
export function toggleOverlay(s: ScenarioState, code: string): ScenarioState {
  const overlays = s.overlays.includes(code)
    ? s.overlays.filter((c) => c !== code)
    : [...s.overlays, code];
  return bump(s, { overlays });
}

/** Assemble the plan request the service expects for this scenario. */
export function planRequest(s: ScenarioState, patient: PatientDoc): PlanRequest {
  const config: PlannerConfigSpec = {
    n_stages: s.nStages,
    smoothness: s.smoothness,
    adherence_window: s.adherenceWindow,
  };
  return {
    state: patient.state,
    covariates: patient.covariates,
    epochs: s.epochs,
    horizon: s.horizon,
    config,
    bounds: s.bounds,
  };
}

/**
 * Serialize the shareable part of a scenario into URL query parameters.
 * The version stamp is session-local and deliberately left out.
 */
export function toQuery(s: ScenarioState): string {
  const params = new URLSearchParams();
  params.set("patient", s.patientId);
  params.set("model", s.modelId);
  if (s.epochs.length > 0) {
    params.set("epochs", s.epochs.join(","));
  }
  for (const [behavior, [lo, hi]] of Object.entries(s.bounds)) {
    params.append("bound", `${behavior}=${lo}:${hi}`);
  }
  if (s.overlays.length > 0) {
    params.set("overlays", s.overlays.join(","));
  }
  params.set("smoothness", String(s.smoothness));
  params.set("stages", String(s.nStages));
  params.set("adherence", String(s.adherenceWindow));
  params.set("horizon", String(s.horizon));
  return params.toString();
}

export function fromQuery(query: string): ScenarioState {
  const params = new URLSearchParams(query);
  const patientId = params.get("patient") ?? "";
  const modelId = params.get("model") ?? "";
  let s = initialScenario(patientId, modelId);
  const epochs = params.get("epochs");
  if (epochs) {
    s = { ...s, epochs: epochs.split(",").map(Number) };
  }
  const bounds: Record<string, [number, number]> = {};
  for (const spec of params.getAll("bound")) {
    const [behavior, range] = spec.split("=");
    const [lo, hi] = range.split(":").map(Number);
    bounds[behavior] = [lo, hi];
  }
  s = { ...s, bounds };
  const overlays = params.get("overlays");
  if (overlays) {
    s = { ...s, overlays: overlays.split(",") };
  }
  const smoothness = params.get("smoothness");
  if (smoothness !== null) {
    s = { ...s, smoothness: Number(smoothness) };
  }
  const stages = params.get("stages");
  if (stages !== null) {
    s = { ...s, nStages: Number(stages) };
  }
  const adherence = params.get("adherence");
  if (adherence !== null) {
    s = { ...s, adherenceWindow: Number(adherence) };
  }
  const horizon = params.get("horizon");
  if (horizon !== null) {
    s = { ...s, horizon: Number(horizon) };
  }
  return { ...s, version: 0 };
}
