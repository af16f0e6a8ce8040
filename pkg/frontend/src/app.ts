// Browser entry point: binds the controller to the form, table, chart, and
// diff panel. Everything numeric on screen is a formatted server value.

import { ApiClient, ApiRequestError } from "./api.js";
import { renderTimelineSvg } from "./chart.js";
import { Controller } from "./controller.js";
import { formatDelta, formatFlag, formatNumber } from "./format.js";
import type { Framework, SweepFeature } from "./types.js";
import { diffResponses, sweepDeltas } from "./whatif.js";

const controller = new Controller(new ApiClient(""));

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function readForm(): void {
  controller.state = {
    ...controller.state,
    sex: (el<HTMLSelectElement>("sex").value as "F" | "M"),
    age: Number(el<HTMLInputElement>("age").value),
    analyte: el<HTMLSelectElement>("analyte").value,
    horizonDays: Number(el<HTMLInputElement>("horizon").value),
  };
  for (const fw of ["pop", "per", "norma"] as Framework[]) {
    controller.toggleFramework(fw, el<HTMLInputElement>(`fw-${fw}`).checked);
  }
  const rows = [];
  for (const tr of document.querySelectorAll<HTMLTableRowElement>("#history tbody tr")) {
    const [ts, value, unit] = Array.from(tr.querySelectorAll("input")).map((i) => i.value);
    if (ts || value) {
      rows.push({ timestamp: ts, value, unit: unit || "mg/dL" });
    }
  }
  controller.state = { ...controller.state, rows };
}

function renderResponse(): void {
  const resp = controller.state.lastResponse;
  const table = el<HTMLTableElement>("results");
  const tbody = table.querySelector("tbody")!;
  tbody.innerHTML = "";
  if (!resp) {
    return;
  }
  for (const [fw, r] of Object.entries(resp.frameworks)) {
    const tr = document.createElement("tr");
    const cells = [
      fw,
      formatNumber(r.lower),
      formatNumber(r.upper),
      formatFlag(r.flag_abnormal),
      r.point_forecast === null ? "---" : formatNumber(r.point_forecast),
    ];
    for (const text of cells) {
      const td = document.createElement("td");
      td.textContent = text;
      tr.appendChild(td);
    }
    tbody.appendChild(tr);
  }
  el("warnings").textContent = resp.warnings.join("; ");
  el("chart").innerHTML = renderTimelineSvg(controller.chartModel());
  const notes = controller.chartModel().legendNotes;
  el("legend-notes").textContent = notes.join("; ");
}

function renderErrors(errors: string[]): void {
  el("errors").textContent = errors.join("; ");
}

async function onInterpret(): Promise<void> {
  readForm();
  try {
    const resp = await controller.interpret();
    renderErrors(controller.state.errors);
    if (resp) {
      renderResponse();
      renderDiff();
    }
  } catch (err) {
    renderErrors([err instanceof ApiRequestError ? `${err.code}: ${err.message}` : String(err)]);
  }
}

function renderDiff(): void {
  const { previousResponse, lastResponse } = controller.state;
  const target = el("diff");
  if (!previousResponse || !lastResponse) {
    target.textContent = "";
    return;
  }
  const parts = [];
  for (const d of diffResponses(previousResponse, lastResponse)) {
    const width = d.widthDelta === null ? "---" : formatDelta(d.widthDelta);
    const flag = d.flagChanged
      ? ` flag ${formatFlag(d.flagBefore)} → ${formatFlag(d.flagAfter)}`
      : "";
    parts.push(`${d.framework}: width ${width}${flag}`);
  }
  target.textContent = parts.join(" | ");
}

async function onSweep(): Promise<void> {
  readForm();
  const feature = el<HTMLSelectElement>("sweep-feature").value as SweepFeature;
  const grid = el<HTMLInputElement>("sweep-grid").value
    .split(",").map((s) => s.trim()).filter(Boolean)
    .map((s) => (feature === "sex" ? s : Number(s)));
  try {
    const records = await controller.runSweep(feature, grid);
    const deltas = sweepDeltas(records);
    const tbody = el<HTMLTableElement>("sweep-results").querySelector("tbody")!;
    tbody.innerHTML = "";
    for (const d of deltas) {
      const tr = document.createElement("tr");
      for (const text of [String(d.value), formatNumber(d.width),
                          formatDelta(d.widthDeltaVsBaseline),
                          `${formatNumber(d.pctWidthChange)}%`]) {
        const td = document.createElement("td");
        td.textContent = text;
        tr.appendChild(td);
      }
      tbody.appendChild(tr);
    }
  } catch (err) {
    renderErrors([String(err)]);
  }
}

function addRow(ts = "", value = "", unit = "mg/dL"): void {
  const tbody = el<HTMLTableElement>("history").querySelector("tbody")!;
  const tr = document.createElement("tr");
  for (const [val, placeholder] of [[ts, "2024-01-31T00:00:00Z"], [value, "85.0"], [unit, "mg/dL"]]) {
    const td = document.createElement("td");
    const input = document.createElement("input");
    input.value = val;
    input.placeholder = placeholder;
    td.appendChild(input);
    tr.appendChild(td);
  }
  const td = document.createElement("td");
  const rm = document.createElement("button");
  rm.textContent = "×";
  rm.onclick = () => tr.remove();
  td.appendChild(rm);
  tr.appendChild(td);
  tbody.appendChild(tr);
}

async function boot(): Promise<void> {
  const analytes = await controller.client.analytes();
  const select = el<HTMLSelectElement>("analyte");
  for (const a of analytes) {
    const opt = document.createElement("option");
    opt.value = a.code;
    opt.textContent = `${a.code} — ${a.name} (${a.unit})`;
    select.appendChild(opt);
  }
  select.value = "GLU";
  el<HTMLButtonElement>("add-row").onclick = () => addRow();
  el<HTMLButtonElement>("interpret").onclick = () => void onInterpret();
  el<HTMLButtonElement>("run-sweep").onclick = () => void onSweep();
  addRow();
}

void boot();
