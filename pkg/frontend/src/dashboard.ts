// Session dashboard: polls the service, renders the belief and
// falsification state, accepts drill results, and issues decisions.

import {
  ApiError,
  BeliefSummary,
  FalsificationSummary,
  Recommendation,
  SessionApi,
} from "./api.js";
import {
  Marker,
  renderHeatmap,
  renderLoglikChart,
  renderProfitGauge,
  renderWeightBars,
} from "./render.js";

export const POLL_INTERVAL_MS = 2000;

const GRID_TITLES: Record<string, string> = {
  th_mean: "thickness mean",
  th_std: "thickness std",
  g_mean: "grade mean",
  g_std: "grade std",
  mineralization: "expected mineralization",
};

export class Dashboard {
  private timer: ReturnType<typeof setInterval> | null = null;
  private lastBelief: BeliefSummary | null = null;
  private lastRecommendation: Recommendation | null = null;

  constructor(
    private root: HTMLElement,
    private api: SessionApi,
    private sessionId: string,
  ) {
    this.buildSkeleton();
  }

  private buildSkeleton(): void {
    this.root.replaceChildren();
    const sections = [
      "status-banner",
      "falsification-banner",
      "heatmaps",
      "weights",
      "loglik",
      "profit",
      "recommendation",
      "observation-form",
      "decision-controls",
    ];
    for (const id of sections) {
      const el = document.createElement("div");
      el.id = id;
      this.root.appendChild(el);
    }
    this.buildObservationForm();
    this.buildDecisionControls();
  }

  start(): void {
    void this.refresh();
    this.timer = setInterval(() => void this.refresh(), POLL_INTERVAL_MS);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  async refresh(): Promise<void> {
    try {
      const belief = await this.api.belief(this.sessionId);
      const falsification = await this.api.falsification(this.sessionId);
      let recommendation: Recommendation | null = null;
      if (!belief.terminal) {
        recommendation = await this.api.recommendation(this.sessionId);
      }
      this.setBanner("");
      this.render(belief, falsification, recommendation);
    } catch (err) {
      // keep the stale view, surface a retry banner, never write stale data
      const detail = err instanceof ApiError ? `${err.status} ${err.message}` : String(err);
      this.setBanner(`service unreachable, retrying: ${detail}`);
    }
  }

  private setBanner(text: string): void {
    const banner = this.root.querySelector<HTMLElement>("#status-banner")!;
    banner.textContent = text;
    banner.className = text ? "banner-error" : "";
  }

  render(
    belief: BeliefSummary,
    falsification: FalsificationSummary,
    recommendation: Recommendation | null,
  ): void {
    this.lastBelief = belief;
    this.lastRecommendation = recommendation;

    const markers: Marker[] = belief.observations.map((o, i) => ({
      row: o.location[0],
      col: o.location[1],
      label: String(i + 1),
      kind: "hole",
    }));
    if (recommendation?.action.cell) {
      markers.push({
        row: recommendation.action.cell[0],
        col: recommendation.action.cell[1],
        label: "?",
        kind: "recommendation",
      });
    }
    const heatmaps = this.root.querySelector<HTMLElement>("#heatmaps")!;
    heatmaps.replaceChildren();
    if (belief.grids) {
      for (const [key, title] of Object.entries(GRID_TITLES)) {
        const grid = (belief.grids as unknown as Record<string, number[][]>)[key];
        if (!grid) continue;
        const panel = document.createElement("div");
        panel.id = `heatmap-${key}`;
        heatmaps.appendChild(panel);
        renderHeatmap(panel, title, grid, markers);
      }
    }

    renderWeightBars(
      this.root.querySelector<HTMLElement>("#weights")!,
      belief.hypothesis_ids,
      belief.hypothesis_weights,
    );
    renderLoglikChart(
      this.root.querySelector<HTMLElement>("#loglik")!,
      falsification.hypothesis_ids,
      falsification.loglik_trace,
    );

    const banner = this.root.querySelector<HTMLElement>("#falsification-banner")!;
    if (falsification.all_falsified) {
      banner.textContent =
        "all hypotheses falsified - the prior model set looks wrong; " +
        "formulate new hypotheses before drilling further";
      banner.className = "banner-falsified";
    } else {
      banner.textContent = "";
      banner.className = "";
    }

    const reco = this.root.querySelector<HTMLElement>("#recommendation")!;
    reco.replaceChildren();
    if (recommendation) {
      renderProfitGauge(
        this.root.querySelector<HTMLElement>("#profit")!,
        recommendation.expected_profit.mean,
        recommendation.expected_profit.std,
      );
      const text = document.createElement("div");
      text.className = "recommendation-text";
      const cell = recommendation.action.cell;
      text.dataset.kind = recommendation.action.kind;
      text.textContent =
        recommendation.action.kind === "drill" && cell
          ? `recommendation: drill (${cell[0]}, ${cell[1]})`
          : `recommendation: ${recommendation.action.kind}`;
      reco.appendChild(text);
    }

    this.setLocked(belief.terminal, belief.decision);
  }

  private buildObservationForm(): void {
    const holder = this.root.querySelector<HTMLElement>("#observation-form")!;
    const form = document.createElement("form");
    form.id = "drill-form";
    const fields: Array<[string, string]> = [
      ["row", "number"],
      ["col", "number"],
      ["thickness", "text"],
      ["grade", "text"],
    ];
    for (const [name, type] of fields) {
      const input = document.createElement("input");
      input.name = name;
      input.id = `field-${name}`;
      input.type = type;
      input.placeholder = name;
      form.appendChild(input);
    }
    for (const name of ["graben", "geochem"]) {
      const label = document.createElement("label");
      const box = document.createElement("input");
      box.type = "checkbox";
      box.name = name;
      box.id = `field-${name}`;
      label.append(box, document.createTextNode(name));
      form.appendChild(label);
    }
    const submit = document.createElement("button");
    submit.type = "submit";
    submit.id = "submit-observation";
    submit.textContent = "record drill result";
    form.appendChild(submit);
    const error = document.createElement("div");
    error.id = "form-error";
    form.appendChild(error);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitObservation();
    });
    holder.appendChild(form);
  }

  async submitObservation(): Promise<void> {
    const get = (name: string) =>
      this.root.querySelector<HTMLInputElement>(`#field-${name}`)!;
    const errorBox = this.root.querySelector<HTMLElement>("#form-error")!;
    errorBox.textContent = "";
    const row = Number(get("row").value);
    const col = Number(get("col").value);
    if (!Number.isInteger(row) || !Number.isInteger(col)) {
      errorBox.textContent = "row and col must be integers";
      return;
    }
    const thicknessRaw = get("thickness").value.trim();
    const payload: Record<string, unknown> = { location: [row, col] };
    if (thicknessRaw !== "") {
      const thickness = Number(thicknessRaw);
      const grade = Number(get("grade").value);
      if (!Number.isFinite(thickness) || !Number.isFinite(grade)) {
        errorBox.textContent = "thickness and grade must be numbers";
        return;
      }
      payload.thickness = thickness;
      payload.grade = grade;
      payload.graben = get("graben").checked;
      payload.geochem = get("geochem").checked;
    }
    try {
      const belief = await this.api.addObservation(
        this.sessionId,
        payload as never,
      );
      const falsification = belief.falsification ??
        (await this.api.falsification(this.sessionId));
      const recommendation = belief.terminal
        ? null
        : await this.api.recommendation(this.sessionId);
      this.render(belief, falsification, recommendation);
    } catch (err) {
      errorBox.textContent =
        err instanceof ApiError ? `rejected: ${err.message}` : String(err);
    }
  }

  private buildDecisionControls(): void {
    const holder = this.root.querySelector<HTMLElement>("#decision-controls")!;
    for (const decision of ["develop", "abandon"] as const) {
      const button = document.createElement("button");
      button.id = `decide-${decision}`;
      button.textContent = decision;
      button.addEventListener("click", () => void this.decide(decision));
      holder.appendChild(button);
    }
    const summary = document.createElement("div");
    summary.id = "terminal-summary";
    holder.appendChild(summary);
  }

  async decide(decision: "develop" | "abandon"): Promise<void> {
    try {
      const summary = await this.api.decide(this.sessionId, decision);
      this.stop();
      this.setLocked(true, summary.decision ?? decision);
    } catch (err) {
      const box = this.root.querySelector<HTMLElement>("#terminal-summary")!;
      box.textContent = err instanceof ApiError ? `rejected: ${err.message}` : String(err);
    }
  }

  setLocked(terminal: boolean, decision: string | null): void {
    const inputs = this.root.querySelectorAll<HTMLInputElement | HTMLButtonElement>(
      "#drill-form input, #drill-form button, #decision-controls button",
    );
    inputs.forEach((el) => {
      el.disabled = terminal;
    });
    const summary = this.root.querySelector<HTMLElement>("#terminal-summary")!;
    if (terminal) {
      summary.textContent = `session closed: ${decision}`;
      summary.dataset.decision = decision ?? "";
      this.stop();
    } else {
      summary.textContent = "";
    }
  }

  get state(): { belief: BeliefSummary | null; recommendation: Recommendation | null } {
    return { belief: this.lastBelief, recommendation: this.lastRecommendation };
  }
}
