/**
 * Morphology comparison panel: records snapshots of the active subset and
 * shows every snapshot in the session's experimental group.
 *
 * The table is rebuilt from the group CSV endpoint, the same bytes the
 * download link serves, so what the user exports is what they saw.
 */

import type { ApiClient } from "../api/client";
import type { Snapshot } from "../api/types";
import type { Gesture } from "../gestures/log";
import type { ToastHub } from "./toasts";

export interface SnapshotCallbacks {
  onGesture: (gesture: Gesture) => Promise<unknown>;
  /** Which subset to summarize; undefined means every object. */
  selectedSubsetId: () => number | undefined;
}

export class SnapshotPanel {
  private readonly client: ApiClient;
  private readonly groupId: string;
  private readonly table: HTMLTableElement;
  private readonly comment: HTMLInputElement;

  constructor(
    parent: HTMLElement,
    client: ApiClient,
    groupId: string,
    toasts: ToastHub,
    callbacks: SnapshotCallbacks,
  ) {
    this.client = client;
    this.groupId = groupId;

    const root = document.createElement("div");
    root.className = "snapshot-panel";
    parent.appendChild(root);

    this.comment = document.createElement("input");
    this.comment.placeholder = "comment";
    const record = document.createElement("button");
    record.textContent = "Record snapshot";
    record.addEventListener(
      "click",
      toasts.guard(async () => {
        const subsetId = callbacks.selectedSubsetId();
        const snap = (await callbacks.onGesture({
          kind: "snapshot",
          ...(subsetId === undefined ? {} : { subsetId }),
          comment: this.comment.value,
          at: Date.now() / 1000,
        })) as Snapshot;
        toasts.show(`snapshot ${snap.id}: ${snap.count} objects`);
        this.comment.value = "";
        await this.refresh();
      }),
    );

    const download = document.createElement("a");
    download.textContent = "Download CSV";
    download.href = client.groupCsvUrl(groupId);
    download.setAttribute("download", "snapshots.csv");

    this.table = document.createElement("table");
    root.append(this.comment, record, download, this.table);
  }

  /** Rebuild the table from the group CSV. */
  async refresh(): Promise<void> {
    const csv = await this.client.groupCsv(this.groupId);
    const rows = csv.trim().split("\n").map(splitCsvLine);
    this.table.replaceChildren();
    for (const [i, cells] of rows.entries()) {
      const tr = document.createElement("tr");
      for (const cell of cells) {
        const td = document.createElement(i === 0 ? "th" : "td");
        td.textContent = cell;
        tr.appendChild(td);
      }
      this.table.appendChild(tr);
    }
  }
}

/** Split one CSV record, honoring double-quoted fields with "" escapes. */
export function splitCsvLine(line: string): string[] {
  const out: string[] = [];
  let field = "";
  let quoted = false;
  for (let i = 0; i < line.length; i++) {
    const c = line[i];
    if (quoted) {
      if (c === '"') {
        if (line[i + 1] === '"') {
          field += '"';
          i++;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c === '"') {
      quoted = true;
    } else if (c === ",") {
      out.push(field);
      field = "";
    } else {
      field += c;
    }
  }
  out.push(field);
  return out;
}
