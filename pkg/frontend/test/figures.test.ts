import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { describe, expect, it } from "vitest";

import { readCsv, readJson } from "../src/csv";
import { makeFigure, plotBounds, plotLapOverlay, plotTrajectory } from "../src/figures";
import { writeFigure } from "../src/cli";

const QUAD = path.join(__dirname, "..", "fixtures", "quad");
const RACING = path.join(__dirname, "..", "fixtures", "racing");

describe("bounds evolution", () => {
  it("renders without error and draws the envelopes", () => {
    const { svg } = plotBounds(QUAD);
    expect(svg).toContain("<svg");
    expect(svg).toContain("true value");
  });

  it("final envelope matches summary.json within rounding", () => {
    const { finalReductionPct } = plotBounds(QUAD);
    const summary = readJson(path.join(QUAD, "summary.json"));
    const expected: number[] = summary.uncertainty_reduction_pct;
    expect(finalReductionPct).toBeDefined();
    finalReductionPct!.forEach((r, i) => {
      expect(Math.abs(r - expected[i])).toBeLessThan(1e-4);
    });
  });

  it("is a pure function of the inputs", () => {
    const a = plotBounds(QUAD).svg;
    const b = plotBounds(QUAD).svg;
    expect(a).toBe(b);
  });

  it("fails descriptively when columns are missing", () => {
    const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "figs-"));
    fs.writeFileSync(path.join(tmp, "bounds.csv"), "t,widths\n0,1\n");
    fs.writeFileSync(path.join(tmp, "summary.json"), "{}");
    expect(() => plotBounds(tmp)).toThrow(/lo_0/);
  });
});

describe("trajectory plan", () => {
  it("renders the quad run with obstacle overlay", () => {
    const { svg } = plotTrajectory(QUAD);
    expect(svg).toContain("<svg");
    expect(svg).toContain("<rect"); // obstacles present in the scenario
  });

  it("renders the racing run with track overlay", () => {
    const { svg } = plotTrajectory(RACING);
    expect(svg).toContain("<svg");
  });

  it("rejects an empty trajectory file", () => {
    const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "figs-"));
    fs.writeFileSync(path.join(tmp, "trajectory.csv"), "t,x0,x1,epoch\n");
    expect(() => plotTrajectory(tmp)).toThrow(/no data rows/);
  });
});

describe("lap overlay", () => {
  it("draws exactly the laps reported in summary.json", () => {
    const summary = readJson(path.join(RACING, "summary.json"));
    const { lapsDrawn, svg } = plotLapOverlay(RACING);
    expect(svg).toContain("lap 1");
    expect(lapsDrawn).toBe(summary.lap_times.length);
  });
});

describe("cli", () => {
  it("writes png and svg files", async () => {
    const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "figs-"));
    const png = path.join(tmp, "bounds.png");
    const svg = path.join(tmp, "traj.svg");
    await writeFigure(QUAD, "bounds_evolution", png);
    await writeFigure(QUAD, "trajectory_plan", svg);
    expect(fs.statSync(png).size).toBeGreaterThan(1000);
    expect(fs.readFileSync(svg, "utf8")).toContain("<svg");
    expect(fs.readFileSync(png).subarray(1, 4).toString()).toBe("PNG");
  });

  it("covers every figure kind on the fixtures", () => {
    for (const kind of ["bounds_evolution", "trajectory_plan"] as const) {
      expect(makeFigure(QUAD, kind).svg).toContain("</svg>");
    }
    for (const kind of ["bounds_evolution", "trajectory_plan", "lap_overlay"] as const) {
      expect(makeFigure(RACING, kind).svg).toContain("</svg>");
    }
  });
});
