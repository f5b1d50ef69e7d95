/**
 * Data management panel: projects, their experimental groups and the
 * datasets inside, with one click opening a proofreading session.
 */

import type { ApiClient } from "../api/client";
import type { ToastHub } from "./toasts";

export interface DataTreeCallbacks {
  openDataset: (datasetId: string, groupId: string) => Promise<void>;
}

export class DataTree {
  private readonly client: ApiClient;
  private readonly toasts: ToastHub;
  private readonly callbacks: DataTreeCallbacks;
  private readonly root: HTMLElement;

  constructor(
    parent: HTMLElement,
    client: ApiClient,
    toasts: ToastHub,
    callbacks: DataTreeCallbacks,
  ) {
    this.client = client;
    this.toasts = toasts;
    this.callbacks = callbacks;
    this.root = document.createElement("ul");
    this.root.className = "data-tree";
    parent.appendChild(this.root);
  }

  async refresh(): Promise<void> {
    this.root.replaceChildren();
    for (const { id } of await this.client.listProjects()) {
      const project = await this.client.getProject(id);
      const li = document.createElement("li");
      li.textContent = project.name;
      const groups = document.createElement("ul");
      for (const group of Object.values(project.groups)) {
        const gi = document.createElement("li");
        gi.textContent = group.name;
        const datasets = document.createElement("ul");
        for (const ds of Object.values(group.datasets)) {
          const di = document.createElement("li");
          const open = document.createElement("button");
          open.textContent = ds.name;
          open.addEventListener(
            "click",
            this.toasts.guard(async () => this.callbacks.openDataset(ds.id, group.id)),
          );
          di.appendChild(open);
          datasets.appendChild(di);
        }
        gi.appendChild(datasets);
        groups.appendChild(gi);
      }
      li.appendChild(groups);
      this.root.appendChild(li);
    }
  }
}
