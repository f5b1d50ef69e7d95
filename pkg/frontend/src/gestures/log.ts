/**
 * Gesture log: the bridge between pointer input and the HTTP interface.
 *
 * Each gesture is a plain JSON value describing one user intent, and
 * applying it issues exactly one API call.  Because the server journals
 * every mutating call, replaying a recorded log against a fresh session
 * over the same dataset reproduces the journal byte for byte; that is the
 * contract the gesture tests pin down.
 */

import { z } from "zod";
import type { ApiClient } from "../api/client";
import type { Edit, FilterNode, ParamsPatch } from "../api/types";

const PointSchema = z.tuple([z.number(), z.number()]); // [y, x] image coords

const GestureSchema = z.discriminatedUnion("kind", [
  z.object({ kind: z.literal("params"), patch: z.record(z.unknown()) }),
  z.object({
    kind: z.literal("brush"),
    // every stamp of one drag; they post as a single atomic edit batch
    path: z.array(PointSchema).nonempty(),
    radius: z.number().positive(),
    label: z.number().int().min(0).max(3),
  }),
  z.object({ kind: z.literal("mito-exclude"), objectId: z.number().int() }),
  z.object({
    kind: z.literal("mito-split"),
    objectId: z.number().int(),
    line: z.array(PointSchema).min(2),
  }),
  z.object({ kind: z.literal("mito-merge"), line: z.array(PointSchema).min(2) }),
  z.object({ kind: z.literal("mito-include"), line: z.array(PointSchema).min(2) }),
  z.object({ kind: z.literal("undo"), target: z.enum(["structure", "mito"]) }),
  z.object({
    kind: z.literal("train"),
    budgetSeconds: z.number().positive().optional(),
    seed: z.number().int().optional(),
  }),
  z.object({ kind: z.literal("subset"), name: z.string(), filter: z.record(z.unknown()) }),
  z.object({
    kind: z.literal("snapshot"),
    subsetId: z.number().int().optional(),
    comment: z.string().optional(),
    // recorded when the user clicked, so replays carry the same timestamp
    at: z.number().nonnegative(),
  }),
]);

export type Gesture =
  | { kind: "params"; patch: ParamsPatch }
  | { kind: "brush"; path: [number, number][]; radius: number; label: number }
  | { kind: "mito-exclude"; objectId: number }
  | { kind: "mito-split"; objectId: number; line: [number, number][] }
  | { kind: "mito-merge"; line: [number, number][] }
  | { kind: "mito-include"; line: [number, number][] }
  | { kind: "undo"; target: "structure" | "mito" }
  | { kind: "train"; budgetSeconds?: number; seed?: number }
  | { kind: "subset"; name: string; filter: FilterNode }
  | { kind: "snapshot"; subsetId?: number; comment?: string; at: number };

export function parseLog(text: string): Gesture[] {
  const doc = JSON.parse(text);
  return z.array(GestureSchema).parse(doc) as Gesture[];
}

export function serializeLog(log: readonly Gesture[]): string {
  return JSON.stringify(log, null, 1);
}

/**
 * Applies gestures to one session and records the ones that succeeded.
 */
export class GestureDriver {
  readonly log: Gesture[] = [];
  private readonly client: ApiClient;
  private readonly sessionId: string;
  private readonly width: number;

  constructor(client: ApiClient, session: { id: string; width: number }) {
    this.client = client;
    this.sessionId = session.id;
    this.width = session.width;
  }

  /** Issue the single API call a gesture stands for; log it on success. */
  async apply(gesture: Gesture): Promise<unknown> {
    const g = GestureSchema.parse(gesture) as Gesture;
    const result = await this.dispatch(g);
    this.log.push(g);
    return result;
  }

  /** Re-apply a recorded log in order, e.g. against a freshly opened session. */
  async replay(log: readonly Gesture[]): Promise<void> {
    for (const gesture of log) {
      await this.apply(gesture);
    }
  }

  private dispatch(g: Gesture): Promise<unknown> {
    const sid = this.sessionId;
    switch (g.kind) {
      case "params":
        return this.client.putParams(sid, g.patch as ParamsPatch);
      case "brush": {
        const edits: Edit[] = g.path.map(([y, x]) => ({
          kind: "brush",
          center: this.flatIndex(y, x),
          radius: g.radius,
          label: g.label,
        }));
        return this.client.postEdits(sid, edits);
      }
      case "mito-exclude":
        return this.client.postEdits(sid, [
          { kind: "mito", op: "exclude", object_id: g.objectId },
        ]);
      case "mito-split":
        return this.client.postEdits(sid, [
          { kind: "mito", op: "split", object_id: g.objectId, line: intLine(g.line) },
        ]);
      case "mito-merge":
        return this.client.postEdits(sid, [{ kind: "mito", op: "merge", line: intLine(g.line) }]);
      case "mito-include":
        return this.client.postEdits(sid, [
          { kind: "mito", op: "include", line: intLine(g.line) },
        ]);
      case "undo":
        return this.client.undo(sid, g.target);
      case "train":
        return this.client.train(sid, {
          ...(g.budgetSeconds === undefined ? {} : { budget_seconds: g.budgetSeconds }),
          ...(g.seed === undefined ? {} : { seed: g.seed }),
        });
      case "subset":
        return this.client.createSubset(sid, { name: g.name, filter: g.filter as FilterNode });
      case "snapshot":
        return this.client.createSnapshot(sid, {
          ...(g.subsetId === undefined ? {} : { subset_id: g.subsetId }),
          ...(g.comment === undefined ? {} : { comment: g.comment }),
          created_at: g.at,
        });
    }
  }

  private flatIndex(y: number, x: number): number {
    return Math.round(y) * this.width + Math.round(x);
  }
}

function intLine(line: readonly [number, number][]): [number, number][] {
  return line.map(([y, x]) => [Math.round(y), Math.round(x)]);
}
