/**
 * Image viewer: a raster layer of server-rendered tiles underneath a vector
 * overlay for live strokes, polylines and review-candidate boxes.
 *
 * The raster never gets composited client-side; every tile is fetched from
 * the render endpoint with the session's current parameters baked in, so
 * what the user proofreads is exactly what the server computed.  All pointer
 * geometry is converted to image coordinates before it leaves this module.
 */

import type { ApiClient } from "../api/client";
import type { ObjectRow } from "../api/types";
import type { Gesture } from "../gestures/log";
import type { ViewState } from "../state/viewstate";

const TILE = 256;

export interface ViewerCallbacks {
  /** A finished gesture, ready to apply. */
  onGesture: (gesture: Gesture) => void;
  /** A region-select drag finished, rect in image coords [x, y, w, h]. */
  onRegion: (rect: [number, number, number, number]) => void;
}

interface Point {
  x: number;
  y: number;
}

export class Viewer {
  private readonly client: ApiClient;
  private readonly view: ViewState;
  private readonly callbacks: ViewerCallbacks;
  private readonly raster: HTMLCanvasElement;
  private readonly overlay: HTMLCanvasElement;
  private objects: ObjectRow[] = [];
  private dragStart: Point | null = null;
  private path: Point[] = [];
  private generation = 0;

  constructor(
    parent: HTMLElement,
    client: ApiClient,
    view: ViewState,
    callbacks: ViewerCallbacks,
  ) {
    this.client = client;
    this.view = view;
    this.callbacks = callbacks;

    const stack = document.createElement("div");
    stack.className = "viewer-stack";
    this.raster = document.createElement("canvas");
    this.overlay = document.createElement("canvas");
    this.raster.width = this.overlay.width = 768;
    this.raster.height = this.overlay.height = 768;
    stack.append(this.raster, this.overlay);
    parent.appendChild(stack);

    this.overlay.addEventListener("pointerdown", (e) => this.pointerDown(e));
    this.overlay.addEventListener("pointermove", (e) => this.pointerMove(e));
    this.overlay.addEventListener("pointerup", (e) => this.pointerUp(e));
    this.overlay.addEventListener("wheel", (e) => {
      e.preventDefault();
      const p = this.toImage(e);
      this.view.zoom(e.deltaY < 0 ? 1.25 : 0.8, p.x, p.y);
      void this.redraw();
    });
  }

  /** Object rows used for hit-testing exclude/split clicks. */
  setObjects(objects: ObjectRow[]): void {
    this.objects = objects;
  }

  /** Re-fetch every visible tile and repaint both layers. */
  async redraw(): Promise<void> {
    const gen = ++this.generation;
    const ctx = this.raster.getContext("2d");
    if (!ctx) {
      return;
    }
    const vp = this.view.viewport;
    const scale = this.raster.width / vp.w;
    const tiles = this.view.tiles(TILE);
    const images = await Promise.all(
      tiles.map(async (t) => {
        const blob = await this.client.render(this.view.sessionId, t);
        return { tile: t, bitmap: await createImageBitmap(blob) };
      }),
    );
    if (gen !== this.generation) {
      return; // a newer redraw superseded this one mid-fetch
    }
    ctx.clearRect(0, 0, this.raster.width, this.raster.height);
    for (const { tile, bitmap } of images) {
      ctx.drawImage(
        bitmap,
        (tile.x - vp.x) * scale,
        (tile.y - vp.y) * scale,
        tile.w * scale,
        tile.h * scale,
      );
    }
    this.drawOverlay();
  }

  drawOverlay(): void {
    const ctx = this.overlay.getContext("2d");
    if (!ctx) {
      return;
    }
    ctx.clearRect(0, 0, this.overlay.width, this.overlay.height);
    const current = this.view.currentCandidate();
    for (const box of this.view.candidates) {
      if (box.resolved) {
        continue;
      }
      const r = this.toScreenRect(box.x, box.y, box.w, box.h);
      ctx.strokeStyle = box === current ? "#ff4444" : "#ffaa00";
      ctx.lineWidth = box === current ? 2 : 1;
      ctx.strokeRect(r.x, r.y, r.w, r.h);
    }
    if (this.path.length > 1) {
      ctx.strokeStyle = "#44ddff";
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      for (const [i, p] of this.path.entries()) {
        const s = this.toScreen(p);
        if (i === 0) {
          ctx.moveTo(s.x, s.y);
        } else {
          ctx.lineTo(s.x, s.y);
        }
      }
      ctx.stroke();
    }
  }

  // --- pointer plumbing ---------------------------------------------------

  private pointerDown(e: PointerEvent): void {
    this.overlay.setPointerCapture(e.pointerId);
    const p = this.toImage(e);
    this.dragStart = p;
    this.path = [p];
  }

  private pointerMove(e: PointerEvent): void {
    if (!this.dragStart) {
      return;
    }
    const tool = this.view.tool;
    const p = this.toImage(e);
    if (tool.kind === "pan") {
      const last = this.path[this.path.length - 1];
      if (last) {
        this.view.pan(last.x - p.x, last.y - p.y);
        void this.redraw();
      }
      return;
    }
    const last = this.path[this.path.length - 1];
    if (!last || Math.hypot(p.x - last.x, p.y - last.y) >= 1) {
      this.path.push(p);
      this.drawOverlay();
    }
  }

  private pointerUp(e: PointerEvent): void {
    if (!this.dragStart) {
      return;
    }
    const start = this.dragStart;
    const end = this.toImage(e);
    const path = this.path;
    this.dragStart = null;
    this.path = [];
    this.drawOverlay();

    const tool = this.view.tool;
    switch (tool.kind) {
      case "pan":
        return;
      case "structure-brush":
        this.callbacks.onGesture({
          kind: "brush",
          path: thinPath(path, tool.radius).map((p) => [p.y, p.x]),
          radius: tool.radius,
          label: tool.label,
        });
        return;
      case "mito-exclude": {
        const hit = this.hitObject(end);
        if (hit !== null) {
          this.callbacks.onGesture({ kind: "mito-exclude", objectId: hit });
        }
        return;
      }
      case "mito-split": {
        const hit = this.hitObject(start);
        if (hit !== null && path.length >= 2) {
          this.callbacks.onGesture({
            kind: "mito-split",
            objectId: hit,
            line: path.map((p) => [p.y, p.x]),
          });
        }
        return;
      }
      case "mito-merge":
      case "mito-include": {
        if (path.length >= 2) {
          this.callbacks.onGesture({
            kind: tool.kind,
            line: path.map((p) => [p.y, p.x]),
          });
        }
        return;
      }
      case "region-select": {
        const x0 = Math.min(start.x, end.x);
        const y0 = Math.min(start.y, end.y);
        this.callbacks.onRegion([
          x0,
          y0,
          Math.abs(end.x - start.x) + 1,
          Math.abs(end.y - start.y) + 1,
        ]);
        return;
      }
    }
  }

  private hitObject(p: Point): number | null {
    // smallest bounding box wins so nested hits pick the tighter object
    let best: ObjectRow | null = null;
    for (const obj of this.objects) {
      const [x, y, w, h] = obj.bbox as [number, number, number, number];
      if (p.x >= x && p.x < x + w && p.y >= y && p.y < y + h) {
        if (!best || w * h < best.bbox[2]! * best.bbox[3]!) {
          best = obj;
        }
      }
    }
    return best ? best.id : null;
  }

  private toImage(e: MouseEvent): Point {
    const rect = this.overlay.getBoundingClientRect();
    const vp = this.view.viewport;
    const x = vp.x + ((e.clientX - rect.left) / rect.width) * vp.w;
    const y = vp.y + ((e.clientY - rect.top) / rect.height) * vp.h;
    return {
      x: Math.max(0, Math.min(this.view.width - 1, Math.round(x))),
      y: Math.max(0, Math.min(this.view.height - 1, Math.round(y))),
    };
  }

  private toScreen(p: Point): Point {
    const vp = this.view.viewport;
    const scale = this.overlay.width / vp.w;
    return { x: (p.x - vp.x) * scale, y: (p.y - vp.y) * scale };
  }

  private toScreenRect(x: number, y: number, w: number, h: number) {
    const a = this.toScreen({ x, y });
    const scale = this.overlay.width / this.view.viewport.w;
    return { x: a.x, y: a.y, w: w * scale, h: h * scale };
  }
}

/** Keep stamps roughly half a radius apart so a drag posts a bounded batch. */
function thinPath(path: Point[], radius: number): Point[] {
  const spacing = Math.max(1, radius / 2);
  const out: Point[] = [];
  for (const p of path) {
    const last = out[out.length - 1];
    if (!last || Math.hypot(p.x - last.x, p.y - last.y) >= spacing) {
      out.push(p);
    }
  }
  return out.length ? out : path.slice(0, 1);
}
