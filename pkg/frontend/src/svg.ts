/** Minimal deterministic SVG plot builder (no DOM, no randomness). */

export interface Pt {
  x: number;
  y: number;
}

const FONT = "11px sans-serif";

function fmt(v: number): string {
  if (!isFinite(v)) return "0";
  return Number(v.toPrecision(6)).toString();
}

/** Round-ish tick positions covering [lo, hi]. */
export function ticks(lo: number, hi: number, target = 5): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step0 = span / target;
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (m * mag >= step0) {
      step = m * mag;
      break;
    }
  }
  const out: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + 1e-12; v += step) {
    out.push(Number(v.toFixed(12)));
  }
  return out;
}

export class Panel {
  private body: string[] = [];
  private xmin = 0;
  private xmax = 1;
  private ymin = 0;
  private ymax = 1;

  constructor(
    readonly x0: number,
    readonly y0: number,
    readonly w: number,
    readonly h: number,
    readonly title = "",
  ) {}

  domain(xmin: number, xmax: number, ymin: number, ymax: number): this {
    const padX = (xmax - xmin || 1) * 0.04;
    const padY = (ymax - ymin || 1) * 0.08;
    this.xmin = xmin - padX;
    this.xmax = xmax + padX;
    this.ymin = ymin - padY;
    this.ymax = ymax + padY;
    return this;
  }

  /** Equal-aspect domain containing the given bounds. */
  domainEqual(xmin: number, xmax: number, ymin: number, ymax: number): this {
    const cx = (xmin + xmax) / 2;
    const cy = (ymin + ymax) / 2;
    let spanX = (xmax - xmin) * 1.1 || 1;
    let spanY = (ymax - ymin) * 1.1 || 1;
    if (spanX / this.w > spanY / this.h) {
      spanY = (spanX * this.h) / this.w;
    } else {
      spanX = (spanY * this.w) / this.h;
    }
    this.xmin = cx - spanX / 2;
    this.xmax = cx + spanX / 2;
    this.ymin = cy - spanY / 2;
    this.ymax = cy + spanY / 2;
    return this;
  }

  px(x: number): number {
    return this.x0 + ((x - this.xmin) / (this.xmax - this.xmin)) * this.w;
  }

  py(y: number): number {
    return this.y0 + this.h - ((y - this.ymin) / (this.ymax - this.ymin)) * this.h;
  }

  private path(points: Pt[], close = false): string {
    const parts = points.map(
      (p, i) => `${i === 0 ? "M" : "L"}${fmt(this.px(p.x))} ${fmt(this.py(p.y))}`,
    );
    return parts.join(" ") + (close ? " Z" : "");
  }

  line(points: Pt[], color: string, width = 1.4, dash = ""): this {
    if (points.length < 2) return this;
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.body.push(
      `<path d="${this.path(points)}" fill="none" stroke="${color}" stroke-width="${width}"${d}/>`,
    );
    return this;
  }

  /** Step-after polyline (bounds envelopes). */
  steps(points: Pt[], color: string, width = 1.6): this {
    if (points.length === 0) return this;
    const expanded: Pt[] = [points[0]];
    for (let i = 1; i < points.length; i++) {
      expanded.push({ x: points[i].x, y: points[i - 1].y });
      expanded.push(points[i]);
    }
    return this.line(expanded, color, width);
  }

  band(xs: number[], lo: number[], hi: number[], fill: string): this {
    const up = xs.map((x, i) => ({ x, y: hi[i] }));
    const down = xs.map((x, i) => ({ x, y: lo[i] })).reverse();
    this.body.push(
      `<path d="${this.path(up.concat(down), true)}" fill="${fill}" stroke="none"/>`,
    );
    return this;
  }

  hline(y: number, color: string, dash = "5,4"): this {
    return this.line(
      [
        { x: this.xmin, y },
        { x: this.xmax, y },
      ],
      color,
      1.2,
      dash,
    );
  }

  rect(xmin: number, ymin: number, xmax: number, ymax: number, fill: string,
       stroke = "none"): this {
    const x = this.px(xmin);
    const y = this.py(ymax);
    const w = this.px(xmax) - x;
    const h = this.py(ymin) - y;
    this.body.push(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" ` +
        `fill="${fill}" stroke="${stroke}"/>`,
    );
    return this;
  }

  circle(x: number, y: number, rWorld: number, stroke: string, fill = "none"): this {
    const r = Math.abs(this.px(x + rWorld) - this.px(x));
    this.body.push(
      `<circle cx="${fmt(this.px(x))}" cy="${fmt(this.py(y))}" r="${fmt(r)}" ` +
        `stroke="${stroke}" fill="${fill}" stroke-width="1.4"/>`,
    );
    return this;
  }

  axes(xlabel: string, ylabel: string): this {
    const parts: string[] = [];
    const axColor = "#444";
    parts.push(
      `<rect x="${this.x0}" y="${this.y0}" width="${this.w}" height="${this.h}" ` +
        `fill="none" stroke="${axColor}"/>`,
    );
    for (const t of ticks(this.xmin, this.xmax)) {
      const x = this.px(t);
      parts.push(
        `<line x1="${fmt(x)}" y1="${this.y0 + this.h}" x2="${fmt(x)}" ` +
          `y2="${this.y0 + this.h + 4}" stroke="${axColor}"/>`,
        `<text x="${fmt(x)}" y="${this.y0 + this.h + 16}" text-anchor="middle" ` +
          `style="font:${FONT}">${fmt(t)}</text>`,
      );
    }
    for (const t of ticks(this.ymin, this.ymax)) {
      const y = this.py(t);
      parts.push(
        `<line x1="${this.x0 - 4}" y1="${fmt(y)}" x2="${this.x0}" y2="${fmt(y)}" ` +
          `stroke="${axColor}"/>`,
        `<text x="${this.x0 - 7}" y="${fmt(y + 3.5)}" text-anchor="end" ` +
          `style="font:${FONT}">${fmt(t)}</text>`,
      );
    }
    parts.push(
      `<text x="${this.x0 + this.w / 2}" y="${this.y0 + this.h + 32}" ` +
        `text-anchor="middle" style="font:${FONT}">${xlabel}</text>`,
      `<text x="${this.x0 - 40}" y="${this.y0 + this.h / 2}" text-anchor="middle" ` +
        `style="font:${FONT}" transform="rotate(-90 ${this.x0 - 40} ` +
        `${this.y0 + this.h / 2})">${ylabel}</text>`,
    );
    if (this.title) {
      parts.push(
        `<text x="${this.x0 + this.w / 2}" y="${this.y0 - 8}" text-anchor="middle" ` +
          `style="font:bold ${FONT}">${this.title}</text>`,
      );
    }
    this.body.unshift(parts.join("\n"));
    return this;
  }

  render(): string {
    return `<g>${this.body.join("\n")}</g>`;
  }
}

export class Figure {
  private panels: Panel[] = [];
  private extra: string[] = [];

  constructor(readonly width: number, readonly height: number) {}

  panel(x0: number, y0: number, w: number, h: number, title = ""): Panel {
    const p = new Panel(x0, y0, w, h, title);
    this.panels.push(p);
    return p;
  }

  legend(entries: Array<[string, string]>, x: number, y: number): void {
    const parts: string[] = [];
    entries.forEach(([label, color], i) => {
      const yy = y + 16 * i;
      parts.push(
        `<line x1="${x}" y1="${yy - 4}" x2="${x + 22}" y2="${yy - 4}" ` +
          `stroke="${color}" stroke-width="3"/>`,
        `<text x="${x + 28}" y="${yy}" style="font:${FONT}">${label}</text>`,
      );
    });
    this.extra.push(parts.join("\n"));
  }

  render(): string {
    return [
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" ` +
        `height="${this.height}" viewBox="0 0 ${this.width} ${this.height}">`,
      `<rect width="${this.width}" height="${this.height}" fill="white"/>`,
      ...this.panels.map((p) => p.render()),
      ...this.extra,
      "</svg>",
    ].join("\n");
  }
}
