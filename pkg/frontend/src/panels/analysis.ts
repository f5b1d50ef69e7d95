/**
 * Feature analysis panel: parallel coordinates with per-axis brushes and a
 * 2-D scatter with rectangle selection.
 *
 * Both plots draw from the server's object table and emit subset
 * definitions; the membership shown here is a preview, the authoritative
 * evaluation happens server-side when the definition is posted.
 */

import type { FeatureName, FilterNode, ObjectRow, Subset } from "../api/types";
import { FEATURES } from "../api/types";
import type { Gesture } from "../gestures/log";
import {
  AxisBrush,
  axisDomains,
  brushesToFilter,
  normalizedToValue,
  polyline,
  rowsInBrushes,
} from "../plots/pcp";
import { project, pointsInRect, rectToFilter, ScatterPoint } from "../plots/scatter";
import type { ToastHub } from "./toasts";

export interface AnalysisCallbacks {
  onGesture: (gesture: Gesture) => Promise<unknown>;
}

const PAD = 24;

export class AnalysisPanel {
  private readonly toasts: ToastHub;
  private readonly callbacks: AnalysisCallbacks;
  private readonly pcpCanvas: HTMLCanvasElement;
  private readonly scatterCanvas: HTMLCanvasElement;
  private readonly methodSelect: HTMLSelectElement;
  private readonly pairSelects: [HTMLSelectElement, HTMLSelectElement];
  private readonly subsetList: HTMLSelectElement;

  private rows: ObjectRow[] = [];
  private brushes = new Map<FeatureName, AxisBrush>();
  private points: ScatterPoint[] = [];
  private dragY0: number | null = null;
  private dragAxis: FeatureName | null = null;
  private scatterDrag: { x: number; y: number } | null = null;
  private nextName = 1;

  constructor(parent: HTMLElement, toasts: ToastHub, callbacks: AnalysisCallbacks) {
    this.toasts = toasts;
    this.callbacks = callbacks;

    const root = document.createElement("div");
    root.className = "analysis-panel";
    parent.appendChild(root);

    this.pcpCanvas = document.createElement("canvas");
    this.pcpCanvas.width = 420;
    this.pcpCanvas.height = 260;
    root.appendChild(this.pcpCanvas);

    const filterButton = document.createElement("button");
    filterButton.textContent = "Subset from brushes";
    filterButton.addEventListener(
      "click",
      toasts.guard(async () => {
        const filter = brushesToFilter([...this.brushes.values()]);
        if (filter) {
          await this.createSubset(filter);
        }
      }),
    );
    root.appendChild(filterButton);

    this.methodSelect = document.createElement("select");
    for (const m of ["pca", "pair"]) {
      const opt = document.createElement("option");
      opt.value = opt.textContent = m;
      this.methodSelect.appendChild(opt);
    }
    this.pairSelects = [document.createElement("select"), document.createElement("select")];
    for (const sel of this.pairSelects) {
      for (const f of FEATURES) {
        const opt = document.createElement("option");
        opt.value = opt.textContent = f;
        sel.appendChild(opt);
      }
    }
    this.pairSelects[1].value = "length";
    const rewire = () => this.reproject();
    this.methodSelect.addEventListener("change", rewire);
    this.pairSelects.forEach((s) => s.addEventListener("change", rewire));
    root.append(this.methodSelect, ...this.pairSelects);

    this.scatterCanvas = document.createElement("canvas");
    this.scatterCanvas.width = 420;
    this.scatterCanvas.height = 300;
    root.appendChild(this.scatterCanvas);

    this.subsetList = document.createElement("select");
    this.subsetList.className = "subset-list";
    root.appendChild(this.subsetList);

    this.pcpCanvas.addEventListener("pointerdown", (e) => this.pcpDown(e));
    this.pcpCanvas.addEventListener("pointerup", (e) => this.pcpUp(e));
    this.scatterCanvas.addEventListener("pointerdown", (e) => {
      this.scatterDrag = this.scatterPoint(e);
    });
    this.scatterCanvas.addEventListener(
      "pointerup",
      toasts.guard(async (e: PointerEvent) => this.scatterUp(e)),
    );
  }

  setRows(rows: ObjectRow[]): void {
    this.rows = rows;
    this.brushes.clear();
    this.reproject();
    this.drawPcp();
  }

  /** Subset the comparison panel snapshots next, or undefined for all. */
  selectedSubsetId(): number | undefined {
    const v = this.subsetList.value;
    return v ? Number(v) : undefined;
  }

  /** An image-region selection arriving from the viewer's select tool. */
  regionSelected(rect: [number, number, number, number], imageWidth: number): void {
    const [x, y, w, h] = rect;
    const indices: number[] = [];
    for (let yy = y; yy < y + h; yy++) {
      for (let xx = x; xx < x + w; xx++) {
        indices.push(yy * imageWidth + xx);
      }
    }
    void this.toasts.guard(async () =>
      this.createSubset({ kind: "image", indices }),
    )();
  }

  private async createSubset(filter: FilterNode): Promise<void> {
    const name = `selection ${this.nextName++}`;
    const subset = (await this.callbacks.onGesture({
      kind: "subset",
      name,
      filter,
    })) as Subset;
    const opt = document.createElement("option");
    opt.value = String(subset.id);
    opt.textContent = `${subset.name} (${subset.members.length})`;
    this.subsetList.appendChild(opt);
    this.subsetList.value = String(subset.id);
  }

  // --- parallel coordinates ---------------------------------------------------

  private axisX(i: number): number {
    const span = this.pcpCanvas.width - 2 * PAD;
    return PAD + (i * span) / (FEATURES.length - 1);
  }

  private drawPcp(): void {
    const ctx = this.pcpCanvas.getContext("2d");
    if (!ctx) {
      return;
    }
    const { width, height } = this.pcpCanvas;
    ctx.clearRect(0, 0, width, height);
    const domains = axisDomains(this.rows);
    const selected = new Set(rowsInBrushes(this.rows, [...this.brushes.values()]));

    ctx.strokeStyle = "#888";
    for (const [i, d] of domains.entries()) {
      const x = this.axisX(i);
      ctx.beginPath();
      ctx.moveTo(x, PAD);
      ctx.lineTo(x, height - PAD);
      ctx.stroke();
      ctx.fillText(d.feature, x - 16, 12);
    }

    for (const row of this.rows) {
      const ys = polyline(row, domains);
      ctx.strokeStyle = selected.has(row.id) ? "#2277ff" : "#cccccc";
      ctx.beginPath();
      for (const [i, t] of ys.entries()) {
        const x = this.axisX(i);
        const y = height - PAD - t * (height - 2 * PAD); // larger values up
        if (i === 0) {
          ctx.moveTo(x, y);
        } else {
          ctx.lineTo(x, y);
        }
      }
      ctx.stroke();
    }

    ctx.fillStyle = "rgba(34, 119, 255, 0.2)";
    for (const [i, d] of domains.entries()) {
      const brush = this.brushes.get(d.feature);
      if (!brush || (brush.lo === undefined && brush.hi === undefined)) {
        continue;
      }
      const span = height - 2 * PAD;
      const tLo = brush.lo === undefined ? 0 : (brush.lo - d.lo) / (d.hi - d.lo || 1);
      const tHi = brush.hi === undefined ? 1 : (brush.hi - d.lo) / (d.hi - d.lo || 1);
      const y1 = height - PAD - tHi * span;
      ctx.fillRect(this.axisX(i) - 6, y1, 12, (tHi - tLo) * span);
    }
    ctx.fillStyle = "#000";
  }

  private pcpDown(e: PointerEvent): void {
    const { x, y } = this.canvasPoint(this.pcpCanvas, e);
    for (const [i, f] of FEATURES.entries()) {
      if (Math.abs(x - this.axisX(i)) < 10) {
        this.dragAxis = f;
        this.dragY0 = y;
        return;
      }
    }
    this.dragAxis = null;
  }

  private pcpUp(e: PointerEvent): void {
    if (this.dragAxis === null || this.dragY0 === null) {
      return;
    }
    const { y } = this.canvasPoint(this.pcpCanvas, e);
    const feature = this.dragAxis;
    this.dragAxis = null;
    const domains = axisDomains(this.rows);
    const domain = domains[FEATURES.indexOf(feature)];
    if (!domain) {
      return;
    }
    const span = this.pcpCanvas.height - 2 * PAD;
    const toValue = (py: number) =>
      normalizedToValue(domain, (this.pcpCanvas.height - PAD - py) / span);
    const a = toValue(this.dragY0);
    const b = toValue(y);
    if (Math.abs(this.dragY0 - y) < 3) {
      this.brushes.delete(feature); // a click clears the axis brush
    } else {
      this.brushes.set(feature, { feature, lo: Math.min(a, b), hi: Math.max(a, b) });
    }
    this.dragY0 = null;
    this.drawPcp();
  }

  // --- scatter ---------------------------------------------------------------

  private method(): "pca" | "pair" {
    return this.methodSelect.value === "pair" ? "pair" : "pca";
  }

  private pairParams(): FeatureName[] {
    return this.method() === "pair"
      ? [this.pairSelects[0].value as FeatureName, this.pairSelects[1].value as FeatureName]
      : [];
  }

  private reproject(): void {
    try {
      this.points = this.rows.length >= 2 || this.method() === "pair"
        ? project(this.rows, this.method(), this.pairParams())
        : [];
    } catch {
      this.points = [];
    }
    this.drawScatter();
  }

  private extent(): { x0: number; x1: number; y0: number; y1: number } {
    let x0 = Infinity;
    let x1 = -Infinity;
    let y0 = Infinity;
    let y1 = -Infinity;
    for (const p of this.points) {
      x0 = Math.min(x0, p.x);
      x1 = Math.max(x1, p.x);
      y0 = Math.min(y0, p.y);
      y1 = Math.max(y1, p.y);
    }
    if (!Number.isFinite(x0)) {
      return { x0: 0, x1: 1, y0: 0, y1: 1 };
    }
    return { x0, x1: x1 === x0 ? x0 + 1 : x1, y0, y1: y1 === y0 ? y0 + 1 : y1 };
  }

  private drawScatter(selected?: Set<number>): void {
    const ctx = this.scatterCanvas.getContext("2d");
    if (!ctx) {
      return;
    }
    const { width, height } = this.scatterCanvas;
    ctx.clearRect(0, 0, width, height);
    const ext = this.extent();
    for (const p of this.points) {
      const sx = PAD + ((p.x - ext.x0) / (ext.x1 - ext.x0)) * (width - 2 * PAD);
      const sy = height - PAD - ((p.y - ext.y0) / (ext.y1 - ext.y0)) * (height - 2 * PAD);
      ctx.fillStyle = !selected || selected.has(p.id) ? "#2277ff" : "#cccccc";
      ctx.beginPath();
      ctx.arc(sx, sy, 3, 0, 2 * Math.PI);
      ctx.fill();
    }
  }

  private scatterPoint(e: PointerEvent): { x: number; y: number } {
    const { x, y } = this.canvasPoint(this.scatterCanvas, e);
    const { width, height } = this.scatterCanvas;
    const ext = this.extent();
    return {
      x: ext.x0 + ((x - PAD) / (width - 2 * PAD)) * (ext.x1 - ext.x0),
      y: ext.y0 + ((height - PAD - y) / (height - 2 * PAD)) * (ext.y1 - ext.y0),
    };
  }

  private async scatterUp(e: PointerEvent): Promise<void> {
    if (!this.scatterDrag) {
      return;
    }
    const a = this.scatterDrag;
    this.scatterDrag = null;
    const b = this.scatterPoint(e);
    const bounds: [number, number, number, number] = [
      Math.min(a.x, b.x),
      Math.min(a.y, b.y),
      Math.max(a.x, b.x),
      Math.max(a.y, b.y),
    ];
    const selected = new Set(pointsInRect(this.points, bounds));
    this.drawScatter(selected);
    await this.createSubset(rectToFilter(this.method(), this.pairParams(), bounds));
  }

  private canvasPoint(canvas: HTMLCanvasElement, e: MouseEvent): { x: number; y: number } {
    const rect = canvas.getBoundingClientRect();
    return {
      x: ((e.clientX - rect.left) / rect.width) * canvas.width,
      y: ((e.clientY - rect.top) / rect.height) * canvas.height,
    };
  }
}
