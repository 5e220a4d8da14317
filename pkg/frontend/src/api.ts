// Typed client for the session service. The console renders exclusively
// from these responses; it never re-derives belief quantities.

export interface PredictiveGrids {
  th_mean: number[][];
  th_std: number[][];
  g_mean: number[][];
  g_std: number[][];
  mineralization: number[][];
}

export interface ObservationRecord {
  location: [number, number];
  thickness: number;
  grade: number;
  graben: boolean;
  geochem: boolean;
  step_index: number;
}

export interface BeliefSummary {
  session_id: string;
  mode: string;
  n_observations: number;
  terminal: boolean;
  decision: string | null;
  hypothesis_ids: number[];
  hypothesis_weights: number[];
  marginal_loglik: number[];
  loglik_trace: number[][];
  observations: ObservationRecord[];
  grids?: PredictiveGrids;
  falsification?: FalsificationSummary;
}

export interface FalsificationSummary {
  hypothesis_ids: number[];
  falsified: boolean[];
  hypothesis_logliks: number[];
  null_loglik: number;
  all_falsified: boolean;
  margin: number;
  loglik_trace: number[][];
}

export interface Recommendation {
  action: { kind: string; cell: [number, number] | null };
  expected_profit: { mean: number; std: number };
  diagnostics: Record<string, unknown>;
  at_observation_count: number;
}

export interface ObservationInput {
  location: [number, number];
  thickness?: number;
  grade?: number;
  graben?: boolean;
  geochem?: boolean;
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function parseJson(response: Response): Promise<unknown> {
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const detail =
      typeof body === "object" && body !== null && "detail" in body
        ? JSON.stringify((body as { detail: unknown }).detail)
        : response.statusText;
    throw new ApiError(response.status, detail);
  }
  return body;
}

export class SessionApi {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  async createSession(config: Record<string, unknown>): Promise<BeliefSummary> {
    const r = await this.fetchFn(this.url("/sessions"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    });
    return (await parseJson(r)) as BeliefSummary;
  }

  async belief(sessionId: string): Promise<BeliefSummary> {
    const r = await this.fetchFn(this.url(`/sessions/${sessionId}/belief`));
    return (await parseJson(r)) as BeliefSummary;
  }

  async falsification(sessionId: string): Promise<FalsificationSummary> {
    const r = await this.fetchFn(this.url(`/sessions/${sessionId}/falsification`));
    return (await parseJson(r)) as FalsificationSummary;
  }

  async recommendation(sessionId: string): Promise<Recommendation> {
    const r = await this.fetchFn(this.url(`/sessions/${sessionId}/recommendation`));
    return (await parseJson(r)) as Recommendation;
  }

  async addObservation(
    sessionId: string,
    observation: ObservationInput,
  ): Promise<BeliefSummary> {
    const r = await this.fetchFn(this.url(`/sessions/${sessionId}/observations`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(observation),
    });
    return (await parseJson(r)) as BeliefSummary;
  }

  async decide(sessionId: string, decision: "develop" | "abandon"): Promise<BeliefSummary> {
    const r = await this.fetchFn(this.url(`/sessions/${sessionId}/decision`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ decision }),
    });
    return (await parseJson(r)) as BeliefSummary;
  }
}
