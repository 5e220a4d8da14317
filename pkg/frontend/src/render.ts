// DOM renderers. Every numeric element carries the exact response value in
// a data attribute so views can be verified against payloads.

export interface Marker {
  row: number;
  col: number;
  label: string;
  kind: "hole" | "recommendation";
}

function colorFor(value: number, lo: number, hi: number): string {
  const t = hi > lo ? Math.min(Math.max((value - lo) / (hi - lo), 0), 1) : 0;
  const r = Math.round(24 + t * (231 - 24));
  const g = Math.round(39 + t * (111 - 39));
  const b = Math.round(84 + t * (26 - 84));
  return `rgb(${r},${g},${b})`;
}

export function renderHeatmap(
  container: HTMLElement,
  title: string,
  grid: number[][],
  markers: Marker[] = [],
): void {
  container.replaceChildren();
  container.classList.add("heatmap");
  const heading = document.createElement("h3");
  heading.textContent = title;
  container.appendChild(heading);
  const flat = grid.flat();
  const lo = Math.min(...flat);
  const hi = Math.max(...flat);
  const table = document.createElement("div");
  table.className = "heatmap-grid";
  table.style.display = "grid";
  table.style.gridTemplateColumns = `repeat(${grid[0]?.length ?? 0}, 1fr)`;
  const markerAt = new Map<string, Marker>();
  for (const m of markers) markerAt.set(`${m.row},${m.col}`, m);
  grid.forEach((rowValues, row) => {
    rowValues.forEach((value, col) => {
      const cell = document.createElement("div");
      cell.className = "heatmap-cell";
      cell.dataset.row = String(row);
      cell.dataset.col = String(col);
      cell.dataset.value = String(value);
      cell.style.backgroundColor = colorFor(value, lo, hi);
      cell.title = `(${row}, ${col}) = ${value}`;
      const marker = markerAt.get(`${row},${col}`);
      if (marker) {
        cell.classList.add(`marker-${marker.kind}`);
        cell.textContent = marker.label;
      }
      table.appendChild(cell);
    });
  });
  container.appendChild(table);
}

export function renderWeightBars(
  container: HTMLElement,
  ids: number[],
  weights: number[],
): void {
  container.replaceChildren();
  const heading = document.createElement("h3");
  heading.textContent = "hypothesis probabilities";
  container.appendChild(heading);
  ids.forEach((id, i) => {
    const row = document.createElement("div");
    row.className = "weight-row";
    const label = document.createElement("span");
    label.className = "weight-label";
    label.textContent = id === 0 ? "null" : `hypothesis ${id}`;
    const bar = document.createElement("div");
    bar.className = "weight-bar";
    bar.style.width = `${(weights[i] * 100).toFixed(2)}%`;
    const value = document.createElement("span");
    value.className = "weight-value";
    value.dataset.hypothesis = String(id);
    value.dataset.value = String(weights[i]);
    value.textContent = weights[i].toFixed(3);
    row.append(label, bar, value);
    container.appendChild(row);
  });
}

export function renderLoglikChart(
  container: HTMLElement,
  ids: number[],
  trace: number[][],
): void {
  container.replaceChildren();
  const heading = document.createElement("h3");
  heading.textContent = "log likelihood vs null";
  container.appendChild(heading);
  const svgNs = "http://www.w3.org/2000/svg";
  const svg = document.createElementNS(svgNs, "svg");
  svg.setAttribute("viewBox", "0 0 400 200");
  svg.setAttribute("class", "loglik-chart");
  svg.dataset.steps = String(trace.length);
  if (trace.length > 0) {
    const series = ids.map((_, col) => trace.map((row) => row[col]));
    const nullSeries = trace.map((row) => row[row.length - 1]);
    const all = [...series.flat(), ...nullSeries];
    const lo = Math.min(...all);
    const hi = Math.max(...all);
    const x = (step: number) =>
      trace.length > 1 ? (step / (trace.length - 1)) * 380 + 10 : 200;
    const y = (v: number) => (hi > lo ? 190 - ((v - lo) / (hi - lo)) * 180 : 100);
    const colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];
    ids.forEach((id, col) => {
      const line = document.createElementNS(svgNs, "polyline");
      line.setAttribute(
        "points",
        series[col].map((v, i) => `${x(i)},${y(v)}`).join(" "),
      );
      line.setAttribute("fill", "none");
      line.setAttribute("stroke", colors[col % colors.length]);
      line.dataset.series = `hypothesis-${id}`;
      line.dataset.values = series[col].join(",");
      svg.appendChild(line);
    });
    const nullLine = document.createElementNS(svgNs, "polyline");
    nullLine.setAttribute(
      "points",
      nullSeries.map((v, i) => `${x(i)},${y(v)}`).join(" "),
    );
    nullLine.setAttribute("fill", "none");
    nullLine.setAttribute("stroke", "#000");
    nullLine.setAttribute("stroke-dasharray", "4 3");
    nullLine.dataset.series = "null";
    nullLine.dataset.values = nullSeries.join(",");
    svg.appendChild(nullLine);
  }
  container.appendChild(svg);
}

export function renderProfitGauge(
  container: HTMLElement,
  mean: number,
  std: number,
): void {
  container.replaceChildren();
  const heading = document.createElement("h3");
  heading.textContent = "expected profit";
  const value = document.createElement("div");
  value.className = "profit-value";
  value.dataset.mean = String(mean);
  value.dataset.std = String(std);
  value.textContent = `${mean.toFixed(2)} ± ${std.toFixed(2)}`;
  value.classList.add(mean > 0 ? "profit-positive" : "profit-negative");
  container.append(heading, value);
}
