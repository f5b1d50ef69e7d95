/**
 * Client-side view model for one open session.
 *
 * Nothing in here is authoritative: labels, objects and display parameters
 * all live on the server, and this class only mirrors what the last response
 * said.  It owns the things the server never sees, which are the viewport,
 * the active tool and the review-candidate cursor.
 */

import type { Candidate, SessionMeta, SessionParams } from "../api/types";
import type { Viewport } from "../api/client";

/** One interaction mode; exactly one is active at any time. */
export type Tool =
  | { kind: "pan" }
  | { kind: "structure-brush"; label: number; radius: number }
  | { kind: "mito-exclude" }
  | { kind: "mito-split" }
  | { kind: "mito-merge" }
  | { kind: "mito-include" }
  | { kind: "region-select" };

export interface TileRequest extends Viewport {}

const MIN_VIEW = 8; // px; zooming in further than this is useless

export class ViewState {
  readonly sessionId: string;
  readonly groupId: string;
  readonly height: number;
  readonly width: number;

  /** Server-confirmed display parameters; replaced wholesale after each PUT. */
  params: SessionParams;
  objectCount: number;
  canUndo: { structure: boolean; mito: boolean };
  training: boolean;

  viewport: Viewport;

  private activeTool: Tool = { kind: "pan" };
  private boxes: Candidate[] = [];
  private cursor = -1;

  constructor(meta: SessionMeta) {
    this.sessionId = meta.id;
    this.groupId = meta.group_id;
    this.height = meta.height;
    this.width = meta.width;
    this.params = meta.params;
    this.objectCount = meta.object_count;
    this.canUndo = meta.can_undo;
    this.training = meta.training;
    this.viewport = { x: 0, y: 0, w: meta.width, h: meta.height };
  }

  // --- tools -------------------------------------------------------------

  get tool(): Tool {
    return this.activeTool;
  }

  setTool(tool: Tool): void {
    if (tool.kind === "structure-brush") {
      if (!Number.isInteger(tool.label) || tool.label < 0 || tool.label > 3) {
        throw new Error(`brush label ${tool.label} out of range`);
      }
      if (!(tool.radius > 0)) {
        throw new Error("brush radius must be positive");
      }
    }
    this.activeTool = tool;
  }

  // --- server mirrors ------------------------------------------------------

  /** Install the merged params document a PUT returned. */
  syncParams(merged: SessionParams): void {
    this.params = merged;
  }

  /** Refresh counters from a re-fetched session document. */
  syncMeta(meta: SessionMeta): void {
    this.objectCount = meta.object_count;
    this.canUndo = meta.can_undo;
    this.training = meta.training;
  }

  // --- viewport -----------------------------------------------------------

  pan(dx: number, dy: number): void {
    this.viewport = this.clamp({
      ...this.viewport,
      x: this.viewport.x + Math.round(dx),
      y: this.viewport.y + Math.round(dy),
    });
  }

  /**
   * Scale the viewport by `factor` (> 1 zooms in) keeping the image point
   * under (fx, fy) fixed.  The focus defaults to the viewport center.
   */
  zoom(factor: number, fx?: number, fy?: number): void {
    if (!(factor > 0)) {
      throw new Error("zoom factor must be positive");
    }
    const vp = this.viewport;
    const cx = fx ?? vp.x + vp.w / 2;
    const cy = fy ?? vp.y + vp.h / 2;
    const w = Math.round(vp.w / factor);
    const h = Math.round(vp.h / factor);
    // keep the focus at the same relative offset inside the viewport
    const rx = vp.w > 0 ? (cx - vp.x) / vp.w : 0.5;
    const ry = vp.h > 0 ? (cy - vp.y) / vp.h : 0.5;
    this.viewport = this.clamp({
      x: Math.round(cx - rx * w),
      y: Math.round(cy - ry * h),
      w,
      h,
    });
  }

  resetView(): void {
    this.viewport = { x: 0, y: 0, w: this.width, h: this.height };
  }

  private clamp(vp: Viewport): Viewport {
    const w = Math.max(Math.min(MIN_VIEW, this.width), Math.min(vp.w, this.width));
    const h = Math.max(Math.min(MIN_VIEW, this.height), Math.min(vp.h, this.height));
    const x = Math.max(0, Math.min(vp.x, this.width - w));
    const y = Math.max(0, Math.min(vp.y, this.height - h));
    return { x, y, w, h };
  }

  /**
   * Tiles covering the current viewport, aligned to a global `tileSize`
   * grid so a pan reuses every tile it can, clipped at the image edge.
   */
  tiles(tileSize: number): TileRequest[] {
    if (!Number.isInteger(tileSize) || tileSize <= 0) {
      throw new Error("tile size must be a positive integer");
    }
    const vp = this.viewport;
    const x0 = Math.floor(vp.x / tileSize) * tileSize;
    const y0 = Math.floor(vp.y / tileSize) * tileSize;
    const out: TileRequest[] = [];
    for (let y = y0; y < vp.y + vp.h; y += tileSize) {
      for (let x = x0; x < vp.x + vp.w; x += tileSize) {
        const w = Math.min(tileSize, this.width - x);
        const h = Math.min(tileSize, this.height - y);
        if (w > 0 && h > 0) {
          out.push({ x, y, w, h });
        }
      }
    }
    return out;
  }

  // --- candidate review cursor ------------------------------------------------

  setCandidates(boxes: Candidate[]): void {
    this.boxes = boxes.slice();
    this.cursor = -1;
  }

  get candidates(): readonly Candidate[] {
    return this.boxes;
  }

  currentCandidate(): Candidate | null {
    return this.cursor >= 0 && this.cursor < this.boxes.length
      ? (this.boxes[this.cursor] as Candidate)
      : null;
  }

  nextCandidate(): Candidate | null {
    if (this.boxes.length === 0) {
      return null;
    }
    this.cursor = (this.cursor + 1) % this.boxes.length;
    return this.currentCandidate();
  }

  prevCandidate(): Candidate | null {
    if (this.boxes.length === 0) {
      return null;
    }
    this.cursor = this.cursor <= 0 ? this.boxes.length - 1 : this.cursor - 1;
    return this.currentCandidate();
  }

  /** Center the viewport on a candidate without changing the zoom level. */
  focusCandidate(box: Candidate): void {
    const vp = this.viewport;
    this.viewport = this.clamp({
      x: Math.round(box.x + box.w / 2 - vp.w / 2),
      y: Math.round(box.y + box.h / 2 - vp.h / 2),
      w: vp.w,
      h: vp.h,
    });
  }
}
