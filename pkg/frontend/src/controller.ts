// DOM-free controller: owns the session state, issues requests through the
// injected client, and exposes view models for rendering. app.ts binds it
// to the document; tests drive it directly.

import { ApiClient } from "./api.js";
import { buildChartModel, ChartModel } from "./chart.js";
import {
  buildRequest, enabledFrameworks, initialState, recordResponse, SessionState,
  sweepCacheKey, validateRows,
} from "./state.js";
import type { Framework, InterpretResponse, SweepRecord } from "./types.js";
import { diffResponses, FrameworkDiff } from "./whatif.js";

export class Controller {
  state: SessionState;
  readonly client: ApiClient;
  requestCount = 0;

  constructor(client: ApiClient) {
    this.client = client;
    this.state = initialState();
  }

  /** Validate locally, then fetch an interpretation. Returns null when
   * validation fails (no request is issued). */
  async interpret(): Promise<InterpretResponse | null> {
    const problems = validateRows(this.state.rows);
    if (problems.length) {
      this.state = { ...this.state, errors: problems };
      return null;
    }
    this.requestCount += 1;
    const resp = await this.client.interpret(buildRequest(this.state));
    this.state = recordResponse(this.state, resp);
    return resp;
  }

  /** Horizon edit: one request, then a diff against the previous response. */
  async whatIfHorizon(horizonDays: number): Promise<FrameworkDiff[] | null> {
    this.state = { ...this.state, horizonDays };
    const resp = await this.interpret();
    if (resp === null) {
      return null;
    }
    return diffResponses(this.state.previousResponse, resp);
  }

  /** Framework toggle is local: the band disappears without a request. */
  toggleFramework(fw: Framework, on: boolean): void {
    this.state = {
      ...this.state,
      frameworks: { ...this.state.frameworks, [fw]: on },
    };
  }

  async runSweep(feature: "age" | "sex" | "history_length" | "horizon" | "variability",
                 grid: (number | string)[]): Promise<SweepRecord[]> {
    const key = sweepCacheKey(feature, grid);
    const cached = this.state.sweepCache.get(key);
    if (cached) {
      return cached;
    }
    this.requestCount += 1;
    const records = await this.client.sweep({
      base: buildRequest(this.state), feature, grid,
    });
    this.state.sweepCache.set(key, records);
    return records;
  }

  chartModel(): ChartModel {
    return buildChartModel(this.state.lastResponse, enabledFrameworks(this.state));
  }
}
