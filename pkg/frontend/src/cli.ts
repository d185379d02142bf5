#!/usr/bin/env node
/** figs --in <run dir> --kind <bounds_evolution|trajectory_plan|lap_overlay> --out <file.png|.svg> */

import * as fs from "fs";
import { FigureKind, makeFigure } from "./figures";

const KINDS: FigureKind[] = ["bounds_evolution", "trajectory_plan", "lap_overlay"];

function parseArgs(argv: string[]): { inDir: string; kind: FigureKind; out: string } {
  const opts: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const val = argv[i + 1];
    if (!key?.startsWith("--") || val === undefined) {
      throw new Error("usage: figs --in <dir> --kind <name> --out <file.png>");
    }
    opts[key.slice(2)] = val;
  }
  for (const need of ["in", "kind", "out"]) {
    if (!(need in opts)) {
      throw new Error(`missing --${need}`);
    }
  }
  if (!KINDS.includes(opts.kind as FigureKind)) {
    throw new Error(`--kind must be one of ${KINDS.join(", ")}`);
  }
  return { inDir: opts.in, kind: opts.kind as FigureKind, out: opts.out };
}

export async function writeFigure(inDir: string, kind: FigureKind, out: string):
    Promise<void> {
  const result = makeFigure(inDir, kind);
  if (out.endsWith(".svg")) {
    fs.writeFileSync(out, result.svg);
    return;
  }
  const sharp = require("sharp");
  const png = await sharp(Buffer.from(result.svg), { density: 96 }).png().toBuffer();
  fs.writeFileSync(out, png);
}

async function main(): Promise<number> {
  try {
    const { inDir, kind, out } = parseArgs(process.argv.slice(2));
    await writeFigure(inDir, kind, out);
    console.log(`wrote ${out}`);
    return 0;
  } catch (err: any) {
    console.error(`figs: ${err.message ?? err}`);
    return 1;
  }
}

if (require.main === module) {
  main().then((code) => process.exit(code));
}
