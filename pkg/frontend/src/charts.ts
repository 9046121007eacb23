/**
 * Transforms plan and predict payloads into render-ready structures.
 *
 * Everything here is a pure projection of service output: series points are
 * copied verbatim, never resampled or smoothed, so the charts show exactly
 * what the model computed.
 */

import type { PlanResponse, SensitivityEntry, TrajectoryPayload } from "./api.js";

export interface Series {
  label: string;
  style: "solid" | "dashed";
  times: number[];
  values: number[];
}

export interface ConditionPanel {
  condition: string;
  baseline: Series;
  intervened: Series;
  /** vertical marker positions, one per intervention epoch */
  markers: number[];
}

export function buildConditionPanels(plan: PlanResponse, overlays: string[] = []): ConditionPanel[] {
  const shown =
    overlays.length === 0
      ? plan.baseline.conditions
      : plan.baseline.conditions.filter((c) => overlays.includes(c));
  return shown.map((condition) => ({
    condition,
    baseline: {
      label: `${condition} baseline`,
      style: "dashed",
      times: [...plan.baseline.times],
      values: [...plan.baseline.marginals[condition]],
    },
    intervened: {
      label: `${condition} with plan`,
      style: "solid",
      times: [...plan.intervened.times],
      values: [...plan.intervened.marginals[condition]],
    },
    markers: [...plan.epochs],
  }));
}

export interface PanelFromPrediction {
  condition: string;
  series: Series;
}

export function buildPredictionPanels(traj: TrajectoryPayload): PanelFromPrediction[] {
  return traj.conditions.map((condition) => ({
    condition,
    series: {
      label: condition,
      style: "solid",
      times: [...traj.times],
      values: [...traj.marginals[condition]],
    },
  }));
}

export interface EpochRecommendation {
  epoch: number;
  /** behaviors whose planned first-stage level differs from the current one */
  changes: { behavior: string; from: number; to: number }[];
  summary: string;
}

function formatLevel(level: number): string {
  return level === 0 ? "off" : level === 1 ? "on" : level.toFixed(2);
}

/**
 * Describe each epoch's plan as the behavior switches it asks for, relative
 * to the patient's current behaviors. An epoch whose first stage matches the
 * current profile reports "no change possible": the planner had no admissible
 * move that lowered risk.
 */
export function recommendationSummary(
  plan: PlanResponse,
  behaviors: string[],
  current: Record<string, number>,
): EpochRecommendation[] {
  return plan.epochs.map((epoch, i) => {
    const stage = plan.plans[i].stages[0];
    const changes = behaviors
      .map((behavior, j) => ({ behavior, from: current[behavior] ?? 0, to: stage[j] }))
      .filter((c) => c.from !== c.to);
    const summary =
      changes.length === 0
        ? "no change possible"
        : changes
            .map((c) => `${c.behavior}: ${formatLevel(c.from)} to ${formatLevel(c.to)}`)
            .join(", ");
    return { epoch, changes, summary };
  });
}

export interface SensitivityRow {
  behavior: string;
  delta: number;
  direction: "raises risk" | "lowers risk" | "no effect";
}

/** Rows arrive sorted by |delta| from the service; keep that order. */
export function sensitivityRows(entries: SensitivityEntry[]): SensitivityRow[] {
  return entries.map((e) => ({
    behavior: e.behavior,
    delta: e.delta,
    direction: e.delta > 0 ? "raises risk" : e.delta < 0 ? "lowers risk" : "no effect",
  }));
}

export interface HazardRow {
  condition: string;
  /** intensity per segment of the schedule, in time order */
  perSegment: number[];
}

/**
 * Arrange per-segment transition intensities for the hazard drawer. Only
 * conditions that are still acquirable appear in a segment's table, so
 * missing entries read as zero.
 */
export function hazardRows(
  conditions: string[],
  segmentIntensities: Record<string, number>[],
): HazardRow[] {
  return conditions.map((condition) => ({
    condition,
    perSegment: segmentIntensities.map((seg) => seg[condition] ?? 0),
  }));
}
