/**
 * Browser entry point: a minimal DOM shell over ConsoleSession.
 *
 * Rendering is deliberately plain (tables and inline SVG polylines) so the
 * console runs from a static file server with no framework. All state logic
 * lives in the tested modules; this file only reads views and paints them.
 */

import { ConsoleApi } from "./api.js";
import { buildConditionPanels, recommendationSummary, sensitivityRows } from "./charts.js";
import { ConsoleSession } from "./console.js";
import {
  addEpoch,
  fromQuery,
  lockBehavior,
  removeEpoch,
  setAdherenceWindow,
  setSmoothness,
  toQuery,
} from "./scenario.js";

const WIDTH = 420;
const HEIGHT = 160;
const PAD = 24;

function polyline(times: number[], values: number[], horizon: number, dashed: boolean): string {
  const pts = times
    .map((t, i) => {
      const x = PAD + (t / horizon) * (WIDTH - 2 * PAD);
      const y = HEIGHT - PAD - values[i] * (HEIGHT - 2 * PAD);
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
  const dash = dashed ? ' stroke-dasharray="6 4"' : "";
  return `<polyline fill="none" stroke="currentColor" stroke-width="1.5"${dash} points="${pts}"/>`;
}

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node;
}

async function boot(): Promise<void> {
  const api = new ConsoleApi("");
  const session = new ConsoleSession(api);

  const models = await api.listModels();
  const patients = await api.listPatients();
  if (models.models.length === 0 || patients.patients.length === 0) {
    el("status").textContent = "service has no preloaded model or patients";
    return;
  }

  const fromUrl = fromQuery(window.location.search.replace(/^\?/, ""));
  const patientId = fromUrl.patientId || patients.patients[0].patient_id;
  const modelId = fromUrl.modelId || models.models[0];
  // stage vectors index behaviors in the model's declared order
  const behaviors = (await api.getModel(modelId)).model.covariates.modifiable;
  await session.open(patientId, modelId);
  if (fromUrl.patientId) {
    session.edit(() => ({ ...fromUrl, version: 0 }));
  }

  const render = () => {
    const view = session.view();
    el("status").textContent = view.loading
      ? "planning..."
      : view.error ?? `${view.scenario.patientId} on ${view.scenario.modelId}`;
    el("badges").textContent = view.badges.length > 0 ? `check bounds: ${view.badges.join(", ")}` : "";
    el("epochs").textContent =
      view.scenario.epochs.length > 0 ? view.scenario.epochs.join(", ") : "none";

    if (!view.plan || !view.patient) {
      return;
    }
    const panels = buildConditionPanels(view.plan, view.scenario.overlays);
    el("panels").innerHTML = panels
      .map((p) => {
        const markers = p.markers
          .map((t) => {
            const x = PAD + (t / view.scenario.horizon) * (WIDTH - 2 * PAD);
            return `<line x1="${x}" y1="${PAD}" x2="${x}" y2="${HEIGHT - PAD}" stroke="#999"/>`;
          })
          .join("");
        return `<figure><figcaption>${p.condition}</figcaption>
          <svg viewBox="0 0 ${WIDTH} ${HEIGHT}">${markers}
            ${polyline(p.baseline.times, p.baseline.values, view.scenario.horizon, true)}
            ${polyline(p.intervened.times, p.intervened.values, view.scenario.horizon, false)}
          </svg></figure>`;
      })
      .join("");

    const current: Record<string, number> = {};
    for (const b of behaviors) {
      current[b] = view.patient.covariates[b] ?? 0;
    }
    el("recs").innerHTML = recommendationSummary(view.plan, behaviors, current)
      .map((r) => `<li>year ${r.epoch}: ${r.summary}</li>`)
      .join("");
    el("sensitivity").innerHTML = sensitivityRows(view.plan.sensitivity)
      .map((r) => `<tr><td>${r.behavior}</td><td>${r.delta.toFixed(4)}</td><td>${r.direction}</td></tr>`)
      .join("");
    window.history.replaceState(null, "", `?${toQuery(view.scenario)}`);
  };

  const plan = async () => {
    render();
    await session.refreshPlan();
    render();
  };

  el("add-epoch").addEventListener("click", () => {
    const t = Number((el("epoch-input") as HTMLInputElement).value);
    if (Number.isFinite(t) && t > 0) {
      session.edit((s) => addEpoch(s, t));
      void plan();
    }
  });
  el("clear-epochs").addEventListener("click", () => {
    session.edit((s) => s.epochs.reduce(removeEpoch, s));
    void plan();
  });
  el("smoothness").addEventListener("change", (ev) => {
    session.edit((s) => setSmoothness(s, Number((ev.target as HTMLInputElement).value)));
    void plan();
  });
  el("adherence").addEventListener("change", (ev) => {
    session.edit((s) => setAdherenceWindow(s, Number((ev.target as HTMLInputElement).value)));
    void plan();
  });
  el("lock-tobacco").addEventListener("change", (ev) => {
    const on = (ev.target as HTMLInputElement).checked;
    session.edit((s) => {
      if (!on) {
        const bounds = { ...s.bounds };
        delete bounds.tobacco;
        return { ...s, bounds, version: s.version + 1 };
      }
      return lockBehavior(s, "tobacco", session.view().patient?.covariates.tobacco ?? 0);
    });
    void plan();
  });

  await plan();
}

boot().catch((err) => {
  el("status").textContent = err instanceof Error ? err.message : String(err);
});
