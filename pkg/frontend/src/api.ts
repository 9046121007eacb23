/**
 * Typed client for the mccplan HTTP service.
 *
 * Every number the console displays comes from these endpoints; nothing is
 * recomputed locally. Concurrent identical requests are deduplicated by
 * method + path + body so chart refreshes and panel renders share one
 * network round trip.
 */

export interface TrajectoryPayload {
  times: number[];
  conditions: string[];
  marginals: Record<string, number[]>;
}

export interface PredictResponse extends TrajectoryPayload {
  model_id: string;
  segment_intensities: Record<string, number>[];
}

export interface StagePlan {
  stages: number[][];
  objective: number;
  stage_risks: number[];
  mode: string;
  converged: boolean;
}

export interface ScheduleSegment {
  t_start: number;
  t_end: number;
  covariates: Record<string, number>;
  intervened: boolean;
}

export interface SensitivityEntry {
  behavior: string;
  risk_at_low: number;
  risk_at_high: number;
  delta: number;
}

export interface PlanResponse {
  model_id: string;
  epochs: number[];
  plans: StagePlan[];
  schedule: ScheduleSegment[];
  change_points: number[];
  baseline: TrajectoryPayload;
  intervened: TrajectoryPayload;
  sensitivity: SensitivityEntry[];
}

export interface PatientDoc {
  patient_id: string;
  state: number | string[];
  covariates: Record<string, number>;
  history: unknown[];
}

export interface ModelDoc {
  model_id: string;
  edges: string[][];
  model: {
    conditions: string[];
    covariates: { modifiable: string[]; fixed: string[]; edge_interactions: string[][] };
    [key: string]: unknown;
  };
}

export interface PlannerConfigSpec {
  n_stages?: number;
  stage_length?: number;
  smoothness?: number;
  mode?: string;
  adherence_window?: number;
  risk_adjusted?: boolean;
}

export interface PredictRequest {
  state: number | string[];
  covariates: Record<string, number>;
  schedule: { duration: number; covariates?: Record<string, number> }[];
  grid_step?: number;
}

export interface PlanRequest {
  state: number | string[];
  covariates: Record<string, number>;
  epochs: number[];
  horizon?: number;
  config?: PlannerConfigSpec;
  bounds?: Record<string, [number, number]>;
  grid_step?: number;
}

/** Structured failure carrying the service's diagnostic fields. */
export class ApiError extends Error {
  readonly status: number;
  /** request fields named by a 422 validation response */
  readonly fields: string[];
  /** behaviors named by a 409 bound-conflict response */
  readonly offending: string[];

  constructor(status: number, detail: string, fields: string[] = [], offending: string[] = []) {
    super(detail);
    this.name = "ApiError";
    this.status = status;
    this.fields = fields;
    this.offending = offending;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ConsoleApi {
  private pending = new Map<string, Promise<unknown>>();

  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  /** Number of requests currently in flight (after deduplication). */
  pendingCount(): number {
    return this.pending.size;
  }

  private send<T>(method: string, path: string, body?: unknown): Promise<T> {
    const encoded = body === undefined ? undefined : JSON.stringify(body);
    const key = `${method} ${path} ${encoded ?? ""}`;
    const existing = this.pending.get(key);
    if (existing) {
      return existing as Promise<T>;
    }
    const run = (async () => {
      const resp = await this.fetchFn(this.baseUrl + path, {
        method,
        headers: encoded === undefined ? undefined : { "content-type": "application/json" },
        body: encoded,
      });
      const payload: unknown = await resp.json().catch(() => ({}));
      if (!resp.ok) {
        const doc = payload as { detail?: unknown; fields?: string[]; offending?: string[] };
        const detail =
          typeof doc.detail === "string" ? doc.detail : `request failed with ${resp.status}`;
        throw new ApiError(resp.status, detail, doc.fields ?? [], doc.offending ?? []);
      }
      return payload as T;
    })();
    const tracked = run.finally(() => this.pending.delete(key));
    this.pending.set(key, tracked);
    return tracked;
  }

  health(): Promise<{ status: string }> {
    return this.send("GET", "/health");
  }

  listModels(): Promise<{ models: string[] }> {
    return this.send("GET", "/models");
  }

  getModel(modelId: string): Promise<ModelDoc> {
    return this.send("GET", `/models/${modelId}`);
  }

  listPatients(): Promise<{ patients: PatientDoc[] }> {
    return this.send("GET", "/patients");
  }

  getPatient(patientId: string): Promise<PatientDoc> {
    return this.send("GET", `/patients/${patientId}`);
  }

  createPatient(doc: PatientDoc): Promise<PatientDoc> {
    return this.send("POST", "/patients", doc);
  }

  predict(modelId: string, req: PredictRequest): Promise<PredictResponse> {
    return this.send("POST", `/models/${modelId}/predict`, req);
  }

  plan(modelId: string, req: PlanRequest): Promise<PlanResponse> {
    return this.send("POST", `/models/${modelId}/plan`, req);
  }
}
