import { column, inDir, readCsv, readJson, requireColumns, Table } from "./csv";
import { Figure } from "./svg";

export type FigureKind = "bounds_evolution" | "trajectory_plan" | "lap_overlay";

export interface FigureResult {
  svg: string;
  /** bounds_evolution: final reduction percentage per parameter */
  finalReductionPct?: number[];
  /** lap_overlay: number of lap segments drawn */
  lapsDrawn?: number;
}

const TAG_COLORS: Record<string, string> = {
  informative: "#e6762a",
  conservative: "#2a6fe6",
  fallback: "#8a8a8a",
  executed: "#2a6fe6",
};

function paramCount(bounds: Table): number {
  let p = 0;
  while (bounds.columns.includes(`lo_${p}`) && bounds.columns.includes(`hi_${p}`)) {
    p += 1;
  }
  if (p === 0) {
    throw new Error("bounds.csv has no lo_i/hi_i column pairs");
  }
  return p;
}

/** Parameter-bound envelope evolution with the true value overlaid. */
export function plotBounds(dir: string): FigureResult {
  const bounds = readCsv(inDir(dir, "bounds.csv"));
  requireColumns(bounds, ["t", "lo_0", "hi_0"], "bounds.csv");
  const summary = readJson(inDir(dir, "summary.json"));
  const p = paramCount(bounds);
  const t = column(bounds, "t");

  const panelW = 300;
  const fig = new Figure(80 + p * (panelW + 50), 300);
  const reductions: number[] = [];

  for (let i = 0; i < p; i++) {
    const lo = column(bounds, `lo_${i}`);
    const hi = column(bounds, `hi_${i}`);
    const truth: number | undefined = summary.true_theta?.[i];
    const w0 = hi[0] - lo[0];
    const wf = hi[hi.length - 1] - lo[lo.length - 1];
    reductions.push(w0 > 0 ? (100 * (w0 - wf)) / w0 : 0);

    const panel = fig.panel(70 + i * (panelW + 50), 36, panelW, 210, `parameter ${i}`);
    const ymin = Math.min(...lo, truth ?? Infinity);
    const ymax = Math.max(...hi, truth ?? -Infinity);
    panel.domain(t[0], t[t.length - 1], ymin, ymax);
    panel.band(t, lo, hi, "#dce8fb");
    panel.steps(t.map((x, k) => ({ x, y: lo[k] })), "#2a6fe6");
    panel.steps(t.map((x, k) => ({ x, y: hi[k] })), "#2a6fe6");
    if (truth !== undefined) {
      panel.hline(truth, "#c03a2b");
    }
    panel.axes("t [s]", i === 0 ? "parameter bound" : "");
  }
  fig.legend([["bounds", "#2a6fe6"], ["true value", "#c03a2b"]], fig.width - 140, 20);
  return { svg: fig.render(), finalReductionPct: reductions };
}

function tagOfEpoch(dir: string): Map<number, string> {
  const out = new Map<number, string>();
  try {
    const epochs = readCsv(inDir(dir, "epochs.csv"));
    const tagIdx = epochs.columns.indexOf("tag");
    epochs.raw.forEach((cells, k) => out.set(k, cells[tagIdx]));
  } catch {
    // optional; default colors are used
  }
  return out;
}

function drawWorld(panel: any, scenario: any): void {
  if (!scenario) return;
  for (const obs of scenario.obstacles ?? []) {
    panel.rect(obs.lo[0], obs.lo[1], obs.hi[0], obs.hi[1], "#f3c6c0", "#c03a2b");
  }
  if (scenario.goal) {
    panel.circle(scenario.goal[0], scenario.goal[1], scenario.goal_radius ?? 0.5,
                 "#2f9e44");
  }
  const track = scenario.track_geometry;
  if (track) {
    const wp: number[][] = track.waypoints;
    const hw: number = track.half_width;
    const center = wp.map((q) => ({ x: q[0], y: q[1] }));
    panel.line(center.concat([center[0]]), "#bbbbbb", 1.0, "4,4");
    for (const side of [-1, 1]) {
      const edge = wp.map((q, i) => {
        const nxt = wp[(i + 1) % wp.length];
        const dx = nxt[0] - q[0];
        const dy = nxt[1] - q[1];
        const n = Math.hypot(dx, dy) || 1;
        return { x: q[0] - (side * hw * dy) / n, y: q[1] + (side * hw * dx) / n };
      });
      panel.line(edge.concat([edge[0]]), "#555555", 1.2);
    }
  }
}

function loadTrajectory(dir: string) {
  const traj = readCsv(inDir(dir, "trajectory.csv"));
  requireColumns(traj, ["t", "x0", "x1", "epoch"], "trajectory.csv");
  if (traj.rows.length === 0) {
    throw new Error("trajectory.csv has no data rows");
  }
  let scenario: any = null;
  try {
    scenario = readJson(inDir(dir, "scenario.json"));
  } catch {
    scenario = null;
  }
  return { traj, scenario };
}

/** Executed trajectory in the plane, colored by committed-segment kind. */
export function plotTrajectory(dir: string): FigureResult {
  const { traj, scenario } = loadTrajectory(dir);
  const xs = column(traj, "x0");
  const ys = column(traj, "x1");
  const epoch = column(traj, "epoch");
  const tags = tagOfEpoch(dir);

  const fig = new Figure(640, 560);
  const panel = fig.panel(70, 36, 520, 440, "executed trajectory");
  panel.domainEqual(Math.min(...xs), Math.max(...xs), Math.min(...ys), Math.max(...ys));
  drawWorld(panel, scenario);

  let start = 0;
  for (let i = 1; i <= xs.length; i++) {
    if (i === xs.length || epoch[i] !== epoch[start]) {
      const tag = tags.get(epoch[start]) ?? "executed";
      const pts = [];
      for (let k = Math.max(start - 1, 0); k < i; k++) {
        pts.push({ x: xs[k], y: ys[k] });
      }
      panel.line(pts, TAG_COLORS[tag] ?? "#2a6fe6", 1.8);
      start = i;
    }
  }
  panel.axes("x [m]", "y [m]");
  fig.legend(Object.entries(TAG_COLORS).slice(0, 3).map(([k, v]) => [k, v] as [string, string]),
             fig.width - 150, 24);
  return { svg: fig.render() };
}

/** Racing laps overlaid, one color per lap. */
export function plotLapOverlay(dir: string): FigureResult {
  const { traj, scenario } = loadTrajectory(dir);
  const summary = readJson(inDir(dir, "summary.json"));
  const lapTimes: number[] = summary.lap_times ?? [];
  const xs = column(traj, "x0");
  const ys = column(traj, "x1");
  const t = column(traj, "t");

  const marks = [t[0]];
  for (const lap of lapTimes) {
    marks.push(marks[marks.length - 1] + lap);
  }
  marks.push(t[t.length - 1] + 1e-9);

  const fig = new Figure(640, 560);
  const panel = fig.panel(70, 36, 520, 440, "lap overlay");
  panel.domainEqual(Math.min(...xs), Math.max(...xs), Math.min(...ys), Math.max(...ys));
  drawWorld(panel, scenario);

  const palette = ["#888888", "#2a6fe6", "#e6762a", "#2f9e44", "#a03ae6", "#c03a2b",
                   "#0aa6a6", "#7a5b1e"];
  let laps = 0;
  const legend: Array<[string, string]> = [];
  for (let seg = 0; seg + 1 < marks.length; seg++) {
    const pts = [];
    for (let k = 0; k < t.length; k++) {
      if (t[k] >= marks[seg] - 1e-9 && t[k] <= marks[seg + 1] + 1e-9) {
        pts.push({ x: xs[k], y: ys[k] });
      }
    }
    if (pts.length > 1) {
      const color = palette[seg % palette.length];
      const label = seg < lapTimes.length ? `lap ${seg + 1}` : "after";
      panel.line(pts, color, 1.6);
      if (seg < lapTimes.length) {
        laps += 1;
        legend.push([label, color]);
      }
    }
  }
  panel.axes("x [m]", "y [m]");
  fig.legend(legend, fig.width - 130, 24);
  return { svg: fig.render(), lapsDrawn: laps };
}

export function makeFigure(dir: string, kind: FigureKind): FigureResult {
  switch (kind) {
    case "bounds_evolution":
      return plotBounds(dir);
    case "trajectory_plan":
      return plotTrajectory(dir);
    case "lap_overlay":
      return plotLapOverlay(dir);
    default:
      throw new Error(`unknown figure kind '${kind}'`);
  }
}
