/**
 * Control panel: display-parameter sliders, tool pickers and the
 * re-segmentation button with its polled progress bar.
 *
 * Slider moves become params gestures; the merged document the server
 * answers with is installed verbatim so the sliders always show confirmed
 * state, not optimistic local values.
 */

import type { ApiClient } from "../api/client";
import { pollJob } from "../api/poll";
import type { ParamsPatch, SessionParams } from "../api/types";
import type { Gesture } from "../gestures/log";
import type { Tool, ViewState } from "../state/viewstate";
import type { ToastHub } from "./toasts";

export interface ControlCallbacks {
  onGesture: (gesture: Gesture) => Promise<unknown>;
  /** Called when a training job finished and the raster must be refreshed. */
  onTrained: () => void;
}

const CHANNELS = ["venus", "mito"] as const;
const ENHANCE_FIELDS = ["brightness", "contrast", "translate"] as const;
const LAYERS = ["venus", "mito", "labels", "objects"] as const;
const SIGMAS = ["sigma_s", "sigma_m", "sigma_e"] as const;

const TOOLS: { label: string; tool: Tool }[] = [
  { label: "pan", tool: { kind: "pan" } },
  { label: "dendrite brush", tool: { kind: "structure-brush", label: 1, radius: 6 } },
  { label: "axon brush", tool: { kind: "structure-brush", label: 2, radius: 6 } },
  { label: "soma brush", tool: { kind: "structure-brush", label: 3, radius: 6 } },
  { label: "eraser", tool: { kind: "structure-brush", label: 0, radius: 6 } },
  { label: "exclude", tool: { kind: "mito-exclude" } },
  { label: "split", tool: { kind: "mito-split" } },
  { label: "merge", tool: { kind: "mito-merge" } },
  { label: "include", tool: { kind: "mito-include" } },
  { label: "select region", tool: { kind: "region-select" } },
];

export class ControlPanel {
  private readonly root: HTMLElement;
  private readonly client: ApiClient;
  private readonly view: ViewState;
  private readonly toasts: ToastHub;
  private readonly callbacks: ControlCallbacks;
  private readonly sliders = new Map<string, HTMLInputElement>();
  private readonly progress: HTMLProgressElement;
  private readonly trainButton: HTMLButtonElement;

  constructor(
    parent: HTMLElement,
    client: ApiClient,
    view: ViewState,
    toasts: ToastHub,
    callbacks: ControlCallbacks,
  ) {
    this.client = client;
    this.view = view;
    this.toasts = toasts;
    this.callbacks = callbacks;
    this.root = document.createElement("div");
    this.root.className = "control-panel";
    parent.appendChild(this.root);

    const toolbar = document.createElement("div");
    toolbar.className = "toolbar";
    for (const { label, tool } of TOOLS) {
      const b = document.createElement("button");
      b.textContent = label;
      b.addEventListener("click", () => view.setTool(tool));
      toolbar.appendChild(b);
    }
    this.root.appendChild(toolbar);

    for (const ch of CHANNELS) {
      for (const field of ENHANCE_FIELDS) {
        this.addSlider(`${ch}.${field}`, (v) => ({ [ch]: { [field]: v } }));
      }
    }
    for (const layer of LAYERS) {
      this.addSlider(`blend.${layer}.opacity`, (v) => ({
        blend: { [layer]: { opacity: v } },
      }));
    }
    for (const sigma of SIGMAS) {
      this.addSlider(sigma, (v) => ({ [sigma]: v }));
    }

    this.trainButton = document.createElement("button");
    this.trainButton.textContent = "Re-segmentation";
    this.progress = document.createElement("progress");
    this.progress.max = 1;
    this.progress.value = 0;
    this.trainButton.addEventListener(
      "click",
      toasts.guard(async () => this.train()),
    );
    this.root.append(this.trainButton, this.progress);
    this.refresh();
  }

  /** Push confirmed params back into every slider. */
  refresh(): void {
    const p = this.view.params;
    for (const ch of CHANNELS) {
      for (const field of ENHANCE_FIELDS) {
        this.setSlider(`${ch}.${field}`, p[ch][field]);
      }
    }
    for (const layer of LAYERS) {
      this.setSlider(`blend.${layer}.opacity`, p.blend[layer].opacity);
    }
    for (const sigma of SIGMAS) {
      this.setSlider(sigma, p[sigma]);
    }
  }

  private addSlider(name: string, toPatch: (v: number) => ParamsPatch): void {
    const row = document.createElement("label");
    row.textContent = name;
    const input = document.createElement("input");
    input.type = "range";
    input.min = "0";
    input.max = "1";
    input.step = "0.01";
    input.addEventListener(
      "change",
      this.toasts.guard(async () => {
        const merged = (await this.callbacks.onGesture({
          kind: "params",
          patch: toPatch(Number(input.value)),
        })) as SessionParams;
        this.view.syncParams(merged);
        this.refresh();
      }),
    );
    row.appendChild(input);
    this.root.appendChild(row);
    this.sliders.set(name, input);
  }

  private setSlider(name: string, value: number): void {
    const input = this.sliders.get(name);
    if (input) {
      input.value = String(value);
    }
  }

  private async train(): Promise<void> {
    this.trainButton.disabled = true;
    try {
      const jobId = (await this.callbacks.onGesture({ kind: "train" })) as string;
      const job = await pollJob(this.client, jobId, {
        intervalMs: 500,
        onProgress: (j) => {
          this.progress.value = j.progress;
        },
      });
      this.progress.value = job.progress;
      this.callbacks.onTrained();
    } finally {
      this.trainButton.disabled = false;
    }
  }
}
