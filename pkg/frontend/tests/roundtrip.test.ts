// Golden round trip: the fixture history interpreted through the recorded
// server response must display interval endpoints string-identical to the
// committed CLI output for the same history and checkpoint.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { formatFlag, formatNumber } from "../src/format.js";
import type { Framework, InterpretResponse } from "../src/types.js";

const FIX = join(dirname(fileURLToPath(import.meta.url)), "..", "fixtures");
const resp: InterpretResponse = JSON.parse(
  readFileSync(join(FIX, "interpret_response.json"), "utf8"));
const cli = readFileSync(join(FIX, "cli_output.txt"), "utf8").trim().split("\n");

function cliLine(framework: string): Map<string, string> {
  const line = cli.find((l) => l.startsWith(`${framework} `));
  expect(line, `CLI output has a ${framework} line`).toBeDefined();
  return new Map(line!.split(" ").slice(1).map((tok) => {
    const [k, v] = tok.split("=");
    return [k, v] as [string, string];
  }));
}

describe("UI round trip against CLI output", () => {
  for (const fw of ["pop", "per", "norma"] as Framework[]) {
    it(`${fw} interval endpoints are string-exact`, () => {
      const tokens = cliLine(fw);
      const result = resp.frameworks[fw]!;
      expect(formatNumber(result.lower)).toBe(tokens.get("lower"));
      expect(formatNumber(result.upper)).toBe(tokens.get("upper"));
    });
  }

  it("flags agree with the CLI", () => {
    for (const fw of ["pop", "per", "norma"] as Framework[]) {
      expect(formatFlag(resp.frameworks[fw]!.flag_abnormal)).toBe(cliLine(fw).get("flag"));
    }
  });

  it("the model point forecast matches", () => {
    expect(formatNumber(resp.frameworks.norma!.point_forecast))
      .toBe(cliLine("norma").get("point"));
  });

  it("latest value and horizon header match", () => {
    const head = new Map(cli[0].split(" ").map((tok) => tok.split("=") as [string, string]));
    expect(formatNumber(resp.latest_value)).toBe(head.get("latest"));
    expect(formatNumber(resp.horizon_days)).toBe(head.get("horizon_days"));
  });
});
