/**
 * End-to-end checks against a real backend process.
 *
 * Two guarantees are pinned here.  First, driving a session through the
 * gesture layer writes the same journal, byte for byte, as issuing the
 * documented HTTP calls directly.  Second, a snapshot recorded through a
 * parallel-coordinates brush counts the same objects as the command-line
 * tool filtering the same dataset with the equivalent expression.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ChildProcess, execFile, spawn } from "node:child_process";
import { mkdtemp, readFile, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";
import { ApiClient } from "../src/api/client";
import type { FilterNode, ObjectRow } from "../src/api/types";
import { Gesture, GestureDriver } from "../src/gestures/log";
import { brushesToFilter } from "../src/plots/pcp";

const execFileP = promisify(execFile);
const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

const PORT = 8450 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;
const PIN_TS = 1756100000; // snapshot timestamp shared by both recordings

let work = "";
let phantomDir = "";
let server: ChildProcess | null = null;
let serverExit: Promise<void> | null = null;
let client: ApiClient;

beforeAll(async () => {
  work = await mkdtemp(join(tmpdir(), "mitoviz-ui-"));
  phantomDir = join(work, "phantom");

  // deterministic dataset with exact truth labels and objects
  const specPath = join(work, "spec.json");
  await writeFile(
    specPath,
    JSON.stringify({ seed: 11, height: 96, width: 96, dendrites: 2, axons: 2 }),
  );
  await execFileP("mitoviz", ["phantom", "--spec", specPath, "--out", phantomDir]);

  server = spawn(
    "mitoviz",
    ["serve", "--data-root", join(work, "data"), "--host", "127.0.0.1", "--port", String(PORT)],
    { stdio: ["ignore", "inherit", "inherit"] },
  );
  serverExit = new Promise((resolve) => server!.once("exit", () => resolve()));

  const deadline = Date.now() + 60_000;
  for (;;) {
    try {
      const res = await fetch(`${BASE}/api/v1/projects`);
      if (res.ok) {
        break;
      }
    } catch {
      // not listening yet
    }
    if (Date.now() > deadline) {
      throw new Error("backend never became ready");
    }
    await sleep(250);
  }

  client = new ApiClient({ baseUrl: BASE });
  await client.createProject({ id: "p1", name: "ui test", groups: [{ id: "g1", name: "ctrl" }] });
  await client.registerDataset("g1", {
    id: "d1",
    name: "phantom",
    venus: join(phantomDir, "venus.png"),
    mito: join(phantomDir, "mito.png"),
    labels: join(phantomDir, "labels.png"),
    objects: join(phantomDir, "objects.json"),
  });
}, 150_000);

afterAll(async () => {
  if (server && server.exitCode === null) {
    server.kill("SIGTERM");
    await Promise.race([serverExit, sleep(10_000)]);
  }
  if (work) {
    await rm(work, { recursive: true, force: true });
  }
});

/** The shared proofreading script: brush, split, PCP filter, snapshot. */
function buildScript(target: ObjectRow): Gesture[] {
  const [bx, by, bw, bh] = target.bbox as [number, number, number, number];
  const cx = bx + Math.floor(bw / 2);
  const filter = brushesToFilter([{ feature: "length", lo: 0.5 }]) as FilterNode;
  return [
    { kind: "params", patch: { venus: { brightness: 0.65 } } },
    {
      kind: "brush",
      path: [
        [5, 5],
        [5, 9],
        [9, 9],
      ],
      radius: 3,
      label: 1,
    },
    // crank the mito threshold so the cut corridor crosses the bright body
    { kind: "params", patch: { sigma_m: 0.9999999 } },
    {
      kind: "mito-split",
      objectId: target.id,
      line: [
        [Math.max(0, by - 2), cx],
        [Math.min(95, by + bh + 1), cx],
      ],
    },
    { kind: "subset", name: "long", filter },
    { kind: "snapshot", subsetId: 1, comment: "tubular population", at: PIN_TS },
  ];
}

async function journalBytes(sid: string): Promise<Buffer> {
  return readFile(join(work, "data", "projects", "p1", "sessions", sid, "journal.jsonl"));
}

describe("gesture layer against a live backend", () => {
  it("replays to the identical journal as direct API calls", async () => {
    // both sessions import the same labels and objects, so they start equal
    const metaA = await client.openSession({ dataset_id: "d1", id: "sa", seed: 7 });
    const metaB = await client.openSession({ dataset_id: "d1", id: "sb", seed: 7 });
    expect(metaA.object_count).toBe(metaB.object_count);
    expect(metaA.object_count).toBeGreaterThan(0);

    const rows = await client.getObjects("sa");
    const target = rows.reduce((a, b) => (b.pixels > a.pixels ? b : a));
    const script = buildScript(target);

    // recording A: the UI path
    const driver = new GestureDriver(client, { id: "sa", width: metaA.width });
    for (const gesture of script) {
      await driver.apply(gesture);
    }

    // recording B: raw HTTP, one documented call per gesture
    const post = async (path: string, body: unknown, method = "POST") => {
      const res = await fetch(`${BASE}/api/v1/sessions/sb${path}`, {
        method,
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
      expect(res.ok).toBe(true);
      return res.json();
    };
    await post("/params", { venus: { brightness: 0.65 } }, "PUT");
    await post("/edits", {
      edits: [
        { kind: "brush", center: 5 * 96 + 5, radius: 3, label: 1 },
        { kind: "brush", center: 5 * 96 + 9, radius: 3, label: 1 },
        { kind: "brush", center: 9 * 96 + 9, radius: 3, label: 1 },
      ],
    });
    await post("/params", { sigma_m: 0.9999999 }, "PUT");
    const [bx, by, bw, bh] = target.bbox as [number, number, number, number];
    const cx = bx + Math.floor(bw / 2);
    await post("/edits", {
      edits: [
        {
          kind: "mito",
          op: "split",
          object_id: target.id,
          line: [
            [Math.max(0, by - 2), cx],
            [Math.min(95, by + bh + 1), cx],
          ],
        },
      ],
    });
    await post("/subsets", {
      name: "long",
      filter: { kind: "range", feature: "length", lo: 0.5 },
    });
    await post("/snapshots", {
      subset_id: 1,
      comment: "tubular population",
      created_at: PIN_TS,
    });

    const a = await journalBytes("sa");
    const b = await journalBytes("sb");
    expect(a.length).toBeGreaterThan(0);
    expect(a.toString("utf-8").trimEnd().split("\n")).toHaveLength(script.length);
    expect(a.equals(b)).toBe(true);

    // both sessions converged to the same edited state, and the cut
    // actually partitioned the target into two pieces
    const afterA = await client.getSession("sa");
    const afterB = await client.getSession("sb");
    expect(afterA.object_count).toBe(metaA.object_count + 1);
    expect(afterA.object_count).toBe(afterB.object_count);
    expect(afterA.params).toEqual(afterB.params);
  }, 150_000);

  it("snapshot counts through a PCP brush match the CLI on the same filter", async () => {
    // pristine session: no edits, so the CLI sees the identical object set
    const meta = await client.openSession({ dataset_id: "d1", id: "sc", seed: 7 });
    const driver = new GestureDriver(client, { id: "sc", width: meta.width });
    const filter = brushesToFilter([{ feature: "length", lo: 0.5 }]) as FilterNode;
    const subset = (await driver.apply({ kind: "subset", name: "long", filter })) as {
      id: number;
      members: number[];
    };
    const snap = (await driver.apply({
      kind: "snapshot",
      subsetId: subset.id,
      comment: "ui count",
      at: PIN_TS,
    })) as { count: number };

    const { stdout } = await execFileP("mitoviz", [
      "--json",
      "analyze",
      "--project",
      phantomDir,
      "--filter",
      "length>=0.5",
      "--snapshot",
      "parity",
    ]);
    const cli = JSON.parse(stdout) as { count: number };

    expect(snap.count).toBe(cli.count);
    expect(snap.count).toBe(subset.members.length);
    // the brush separates the population rather than selecting all or none
    expect(snap.count).toBeGreaterThan(0);
    expect(snap.count).toBeLessThan(meta.object_count);
  }, 150_000);

  it("runs the documented read endpoints the panels depend on", async () => {
    const rows = await client.getObjects("sc");
    expect(rows.length).toBeGreaterThan(0);
    const candidates = await client.getCandidates("sc", "mito");
    expect(Array.isArray(candidates)).toBe(true);

    const png = await client.render("sc", { x: 0, y: 0, w: 32, h: 32 });
    const head = Buffer.from(await png.arrayBuffer()).subarray(0, 4);
    expect(head.equals(Buffer.from([0x89, 0x50, 0x4e, 0x47]))).toBe(true);

    const csv = await client.groupCsv("g1");
    expect(csv.split("\n")[0]).toContain("snapshot_id");
    expect(csv).toContain("tubular population");
  }, 60_000);
});
