/**
 * Wire types for the review server's JSON API, checked at runtime with zod.
 *
 * Every response the UI consumes is parsed through one of these schemas, so
 * a drifting backend fails loudly at the boundary instead of rendering
 * garbage three panels later.  Request payloads are plain interfaces; the
 * server validates those.
 */

import { z } from "zod";

export const EnhancementSchema = z.object({
  brightness: z.number(),
  contrast: z.number(),
  translate: z.number(),
});

export const LayerSchema = z.object({
  opacity: z.number(),
  colormap: z.string(),
});

export const ParamsSchema = z.object({
  venus: EnhancementSchema,
  mito: EnhancementSchema,
  blend: z.object({
    venus: LayerSchema,
    mito: LayerSchema,
    labels: LayerSchema,
    objects: LayerSchema,
  }),
  sigma_s: z.number(),
  sigma_m: z.number(),
  sigma_e: z.number(),
});
export type SessionParams = z.infer<typeof ParamsSchema>;

/** Partial params document accepted by PUT .../params. */
export interface ParamsPatch {
  venus?: Partial<z.infer<typeof EnhancementSchema>>;
  mito?: Partial<z.infer<typeof EnhancementSchema>>;
  blend?: Partial<
    Record<"venus" | "mito" | "labels" | "objects", Partial<z.infer<typeof LayerSchema>>>
  >;
  sigma_s?: number;
  sigma_m?: number;
  sigma_e?: number;
}

export const SessionMetaSchema = z.object({
  id: z.string(),
  project_id: z.string(),
  group_id: z.string(),
  dataset_id: z.string(),
  height: z.number().int(),
  width: z.number().int(),
  params: ParamsSchema,
  object_count: z.number().int(),
  can_undo: z.object({ structure: z.boolean(), mito: z.boolean() }),
  training: z.boolean(),
});
export type SessionMeta = z.infer<typeof SessionMetaSchema>;

export const CandidateSchema = z.object({
  x: z.number().int(),
  y: z.number().int(),
  w: z.number().int(),
  h: z.number().int(),
  kind: z.string(),
  score: z.number(),
  resolved: z.boolean(),
});
export type Candidate = z.infer<typeof CandidateSchema>;

export const ObjectRowSchema = z.object({
  id: z.number().int(),
  bbox: z.array(z.number().int()).length(4),
  provenance: z.string(),
  pixels: z.number().int(),
  area: z.number(),
  circularity: z.number(),
  eccentricity: z.number(),
  length: z.number(),
  structure: z.number().int(),
});
export type ObjectRow = z.infer<typeof ObjectRowSchema>;

/** The four numeric morphology features, in server column order. */
export const FEATURES = ["area", "circularity", "eccentricity", "length"] as const;
export type FeatureName = (typeof FEATURES)[number];

export const JobSchema = z.object({
  id: z.string(),
  session_id: z.string(),
  phase: z.enum(["queued", "training", "applying", "done", "failed"]),
  progress: z.number(),
  error: z.string().optional(),
});
export type Job = z.infer<typeof JobSchema>;

// A bounding box is null when an edit touched no pixels.
const BboxSchema = z.union([z.array(z.number().int()).length(4), z.null()]);

export const EditSummarySchema = z.object({
  kind: z.string(),
  op: z.string().optional(),
  changed: z.number().int(),
  bbox: BboxSchema,
});

export const EditResponseSchema = z.object({
  results: z.array(EditSummarySchema),
  changed: z.number().int(),
  object_count: z.number().int(),
});
export type EditResponse = z.infer<typeof EditResponseSchema>;

export const UndoResponseSchema = z.object({
  undone: z.boolean(),
  changed: z.number().int().optional(),
});
export type UndoResponse = z.infer<typeof UndoResponseSchema>;

export const SubsetSchema = z.object({
  id: z.number().int(),
  name: z.string(),
  members: z.array(z.number().int()),
  definition: z.record(z.unknown()),
});
export type Subset = z.infer<typeof SubsetSchema>;

export const SnapshotSchema = z.object({
  id: z.number().int(),
  count: z.number().int(),
  density: z.number(),
  comment: z.string(),
  group: z.string(),
  image: z.string(),
  mean_area_um2: z.number().nullable(),
  mean_length_um: z.number().nullable(),
  mean_eccentricity: z.number().nullable(),
  mean_circularity: z.number().nullable(),
  members: z.array(z.number().int()),
});
export type Snapshot = z.infer<typeof SnapshotSchema>;

export const DatasetDocSchema = z.object({
  id: z.string(),
  name: z.string(),
  venus: z.string(),
  mito: z.string(),
  labels: z.string().nullable(),
  objects: z.string().nullable(),
  pixel_size_um: z.number(),
});
export type DatasetDoc = z.infer<typeof DatasetDocSchema>;

export const ProjectDocSchema = z.object({
  id: z.string(),
  name: z.string(),
  groups: z.record(
    z.object({
      id: z.string(),
      name: z.string(),
      datasets: z.record(DatasetDocSchema),
    }),
  ),
  schema_version: z.number().int(),
});
export type ProjectDoc = z.infer<typeof ProjectDocSchema>;

export const ProjectListSchema = z.object({
  projects: z.array(z.object({ id: z.string(), name: z.string() })),
});

export const ErrorDetailSchema = z.object({
  loc: z.array(z.union([z.string(), z.number()])),
  msg: z.string(),
  type: z.string(),
});
export type ErrorDetail = z.infer<typeof ErrorDetailSchema>;

// --- filter definitions (requests only, mirrored from the analysis engine) --

export interface RangeNode {
  kind: "range";
  feature: FeatureName;
  lo?: number;
  hi?: number;
  strict_lo?: boolean;
  strict_hi?: boolean;
}

export interface StructureNode {
  kind: "structure";
  codes: number[];
}

export interface RectRegion {
  shape: "rect";
  bounds: [number, number, number, number]; // xmin, ymin, xmax, ymax
}

export interface PolygonRegion {
  shape: "polygon";
  points: [number, number][];
}

export interface ProjectionNode {
  kind: "projection";
  method: "pca" | "pair";
  params: string[];
  region: RectRegion | PolygonRegion;
}

export interface ImageNode {
  kind: "image";
  indices: number[];
}

export interface CombineNode {
  kind: "combine";
  op: "and" | "or" | "not";
  children: FilterNode[];
}

export type FilterNode =
  | RangeNode
  | StructureNode
  | ProjectionNode
  | ImageNode
  | CombineNode;

// --- edit payloads -----------------------------------------------------------

export interface BrushEdit {
  kind: "brush";
  /** Flat row-major pixel index of the cursor. */
  center: number;
  radius: number;
  label: number;
  sigma_s?: number;
}

export interface MitoExcludeEdit {
  kind: "mito";
  op: "exclude";
  object_id: number;
}

export interface MitoSplitEdit {
  kind: "mito";
  op: "split";
  object_id: number;
  /** Polyline vertices as [y, x] pairs in image coordinates. */
  line: [number, number][];
  sigma_m?: number;
}

export interface MitoMergeEdit {
  kind: "mito";
  op: "merge" | "include" | "merge_or_include";
  line: [number, number][];
  sigma_m?: number;
}

export type Edit = BrushEdit | MitoExcludeEdit | MitoSplitEdit | MitoMergeEdit;
