/**
 * Composition root: builds the panels around one API client and routes
 * every gesture through a single driver so the whole UI shares one log.
 */

import { ApiClient } from "./api/client";
import type { ObjectRow, SessionParams } from "./api/types";
import { Gesture, GestureDriver } from "./gestures/log";
import { ViewState } from "./state/viewstate";
import { AnalysisPanel } from "./panels/analysis";
import { ControlPanel } from "./panels/controls";
import { DataTree } from "./panels/datatree";
import { SnapshotPanel } from "./panels/snapshots";
import { ToastHub } from "./panels/toasts";
import { Viewer } from "./panels/viewer";

const OBJECT_GESTURES = new Set([
  "brush",
  "mito-exclude",
  "mito-split",
  "mito-merge",
  "mito-include",
  "undo",
]);

export async function boot(root: HTMLElement, baseUrl = ""): Promise<void> {
  const client = new ApiClient({ baseUrl });
  const toasts = new ToastHub(root);

  const treeHost = document.createElement("div");
  const sessionHost = document.createElement("div");
  root.append(treeHost, sessionHost);

  const tree = new DataTree(treeHost, client, toasts, {
    openDataset: async (datasetId, _groupId) => {
      sessionHost.replaceChildren();
      await openSession(sessionHost, client, toasts, datasetId);
    },
  });
  await tree.refresh();
}

async function openSession(
  root: HTMLElement,
  client: ApiClient,
  toasts: ToastHub,
  datasetId: string,
): Promise<void> {
  const meta = await client.openSession({ dataset_id: datasetId });
  const view = new ViewState(meta);
  const driver = new GestureDriver(client, { id: meta.id, width: meta.width });

  let viewer: Viewer;
  let analysis: AnalysisPanel;

  const refreshObjects = async () => {
    const rows: ObjectRow[] = await client.getObjects(view.sessionId);
    viewer.setObjects(rows);
    analysis.setRows(rows);
  };

  const applyGesture = async (gesture: Gesture): Promise<unknown> => {
    const result = await driver.apply(gesture);
    if (gesture.kind === "params") {
      view.syncParams(result as SessionParams);
    }
    view.syncMeta(await client.getSession(view.sessionId));
    if (OBJECT_GESTURES.has(gesture.kind) || gesture.kind === "params") {
      await viewer.redraw();
    }
    if (OBJECT_GESTURES.has(gesture.kind)) {
      await refreshObjects();
    }
    return result;
  };

  viewer = new Viewer(root, client, view, {
    onGesture: toasts.guard(async (g: Gesture) => {
      await applyGesture(g);
    }),
    onRegion: (rect) => analysis.regionSelected(rect, view.width),
  });

  new ControlPanel(root, client, view, toasts, {
    onGesture: applyGesture,
    onTrained: toasts.guard(async () => {
      await viewer.redraw();
      await refreshObjects();
    }),
  });

  analysis = new AnalysisPanel(root, toasts, { onGesture: applyGesture });

  const snapshots = new SnapshotPanel(root, client, view.groupId, toasts, {
    onGesture: applyGesture,
    selectedSubsetId: () => analysis.selectedSubsetId(),
  });

  // candidate review strip: fetch, then walk with next/prev
  const strip = document.createElement("div");
  strip.className = "candidate-strip";
  for (const kind of ["structure", "mito"] as const) {
    const b = document.createElement("button");
    b.textContent = `find ${kind} candidates`;
    b.addEventListener(
      "click",
      toasts.guard(async () => {
        view.setCandidates(await client.getCandidates(view.sessionId, kind));
        viewer.drawOverlay();
      }),
    );
    strip.appendChild(b);
  }
  const step = (dir: "next" | "prev") => () => {
    const box = dir === "next" ? view.nextCandidate() : view.prevCandidate();
    if (box) {
      view.focusCandidate(box);
      void viewer.redraw();
    }
  };
  for (const dir of ["prev", "next"] as const) {
    const b = document.createElement("button");
    b.textContent = `${dir} candidate`;
    b.addEventListener("click", step(dir));
    strip.appendChild(b);
  }
  for (const target of ["structure", "mito"] as const) {
    const b = document.createElement("button");
    b.textContent = `undo ${target}`;
    b.addEventListener(
      "click",
      toasts.guard(async () => {
        await applyGesture({ kind: "undo", target });
      }),
    );
    strip.appendChild(b);
  }
  root.appendChild(strip);

  await viewer.redraw();
  await refreshObjects();
  await snapshots.refresh();
}

// self-boot when loaded as the page entry point
if (typeof document !== "undefined") {
  const host = document.getElementById("app");
  if (host) {
    boot(host).catch((err) => console.error(err));
  }
}
