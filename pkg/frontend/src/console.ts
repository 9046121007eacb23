/**
 * Session controller wiring scenario edits to the planning service.
 *
 * The controller owns one scenario at a time. Edits are applied locally and
 * only hit the network on refreshPlan(); a version stamp captured at send
 * time lets late responses for superseded scenarios be dropped instead of
 * overwriting newer results.
 */

import { ApiError, ConsoleApi, type PatientDoc, type PlanResponse } from "./api.js";
import { initialScenario, planRequest, type ScenarioState } from "./scenario.js";

export interface SessionView {
  scenario: ScenarioState;
  patient: PatientDoc | null;
  plan: PlanResponse | null;
  /** behaviors to badge after a bound conflict */
  badges: string[];
  error: string | null;
  loading: boolean;
}

export class ConsoleSession {
  private scenario: ScenarioState;
  private patient: PatientDoc | null = null;
  private plan: PlanResponse | null = null;
  private badges: string[] = [];
  private error: string | null = null;
  private inFlight = 0;

  constructor(private readonly api: ConsoleApi) {
    this.scenario = initialScenario("", "");
  }

  view(): SessionView {
    return {
      scenario: this.scenario,
      patient: this.patient,
      plan: this.plan,
      badges: [...this.badges],
      error: this.error,
      loading: this.inFlight > 0,
    };
  }

  async open(patientId: string, modelId: string): Promise<void> {
    this.patient = await this.api.getPatient(patientId);
    this.scenario = initialScenario(patientId, modelId);
    this.plan = null;
    this.badges = [];
    this.error = null;
  }

  /** Apply a pure scenario edit; the result is not planned until refreshPlan(). */
  edit(fn: (s: ScenarioState) => ScenarioState): void {
    this.scenario = fn(this.scenario);
  }

  /**
   * Plan the current scenario. Returns the new plan, or null when the
   * response was superseded by a later edit or rejected by the service.
   */
  async refreshPlan(): Promise<PlanResponse | null> {
    if (this.patient === null) {
      throw new Error("no patient loaded");
    }
    const sent = this.scenario;
    const req = planRequest(sent, this.patient);
    this.inFlight += 1;
    try {
      const plan = await this.api.plan(sent.modelId, req);
      if (this.scenario.version !== sent.version) {
        return null;
      }
      this.plan = plan;
      this.badges = [];
      this.error = null;
      return plan;
    } catch (err) {
      if (this.scenario.version !== sent.version) {
        return null;
      }
      if (err instanceof ApiError) {
        this.badges = err.status === 409 ? [...err.offending] : [];
        this.error = err.message;
        return null;
      }
      throw err;
    } finally {
      this.inFlight -= 1;
    }
  }
}
