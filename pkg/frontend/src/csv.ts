import * as fs from "fs";
import * as path from "path";

export interface Table {
  columns: string[];
  /** numeric view of each row; non-numeric cells become NaN */
  rows: number[][];
  /** raw string cells, same shape */
  raw: string[][];
}

export function readCsv(file: string): Table {
  const text = fs.readFileSync(file, "utf8").trim();
  if (text.length === 0) {
    throw new Error(`empty CSV file: ${file}`);
  }
  const lines = text.split(/\r?\n/);
  const columns = lines[0].split(",");
  const raw = lines.slice(1).map((l) => l.split(","));
  const rows = raw.map((cells) => cells.map((c) => Number(c)));
  return { columns, rows, raw };
}

export function requireColumns(table: Table, needed: string[], file: string): void {
  for (const name of needed) {
    if (!table.columns.includes(name)) {
      throw new Error(
        `${file} is missing required column '${name}' (has: ${table.columns.join(", ")})`,
      );
    }
  }
}

export function column(table: Table, name: string): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new Error(`no such column '${name}'`);
  }
  return table.rows.map((r) => r[idx]);
}

export function readJson(file: string): any {
  return JSON.parse(fs.readFileSync(file, "utf8"));
}

export function inDir(dir: string, name: string): string {
  const p = path.join(dir, name);
  if (!fs.existsSync(p)) {
    throw new Error(`expected ${name} in ${dir}`);
  }
  return p;
}
