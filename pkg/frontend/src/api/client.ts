/**
 * Thin typed client over the review server's versioned HTTP interface.
 *
 * All state lives on the server; this module only shapes requests and
 * validates responses.  The fetch implementation is injectable so tests can
 * run against a canned transport or a spawned backend equally well.
 */

import type { ZodType } from "zod";
import {
  Candidate,
  CandidateSchema,
  DatasetDoc,
  DatasetDocSchema,
  Edit,
  EditResponse,
  EditResponseSchema,
  ErrorDetail,
  FilterNode,
  Job,
  JobSchema,
  ObjectRow,
  ObjectRowSchema,
  ParamsPatch,
  ParamsSchema,
  ProjectDoc,
  ProjectDocSchema,
  ProjectListSchema,
  SessionMeta,
  SessionMetaSchema,
  SessionParams,
  Snapshot,
  SnapshotSchema,
  Subset,
  SubsetSchema,
  UndoResponse,
  UndoResponseSchema,
} from "./types";
import { z } from "zod";

const API_PREFIX = "/api/v1";

export class ApiError extends Error {
  readonly status: number;
  readonly detail: ErrorDetail[];

  constructor(status: number, detail: ErrorDetail[]) {
    const first = detail[0];
    super(first ? `${first.type}: ${first.msg}` : `request failed (${status})`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

export interface ApiClientOptions {
  /** Origin of the backend, e.g. "http://127.0.0.1:8017".  Empty = same origin. */
  baseUrl?: string;
  /** Transport override for tests. */
  fetchFn?: typeof fetch;
}

export interface Viewport {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface OpenSessionRequest {
  dataset_id: string;
  id?: string;
  seed?: number;
  bootstrap?: Record<string, unknown>;
  import_labels?: string;
  import_objects?: string;
}

export interface TrainRequest {
  budget_seconds?: number;
  seed?: number;
  focusing_factor?: number;
  plateau_steps?: number;
}

export interface SnapshotRequest {
  subset_id?: number;
  comment?: string;
  /** Unix seconds; pinned by gesture replays so journals stay byte-identical. */
  created_at?: number;
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: typeof fetch;

  constructor(options: ApiClientOptions = {}) {
    this.base = (options.baseUrl ?? "").replace(/\/$/, "");
    this.fetchFn = options.fetchFn ?? fetch;
  }

  // --- projects and datasets -----------------------------------------------

  async listProjects(): Promise<{ id: string; name: string }[]> {
    const doc = await this.request("GET", "/projects", undefined, ProjectListSchema);
    return doc.projects;
  }

  async createProject(body: {
    id?: string;
    name: string;
    groups?: { id?: string; name: string }[];
  }): Promise<ProjectDoc> {
    return this.request("POST", "/projects", body, ProjectDocSchema);
  }

  async getProject(pid: string): Promise<ProjectDoc> {
    return this.request("GET", `/projects/${pid}`, undefined, ProjectDocSchema);
  }

  async registerDataset(
    gid: string,
    body: {
      id?: string;
      name?: string;
      venus: string;
      mito: string;
      labels?: string;
      objects?: string;
      pixel_size_um?: number;
    },
  ): Promise<DatasetDoc> {
    return this.request("POST", `/groups/${gid}/datasets`, body, DatasetDocSchema);
  }

  // --- sessions --------------------------------------------------------------

  async openSession(body: OpenSessionRequest): Promise<SessionMeta> {
    return this.request("POST", "/sessions", body, SessionMetaSchema);
  }

  async getSession(sid: string): Promise<SessionMeta> {
    return this.request("GET", `/sessions/${sid}`, undefined, SessionMetaSchema);
  }

  /** URL of one rendered tile; the canvas layer points <img> sources here. */
  renderUrl(sid: string, vp: Viewport): string {
    const q = `viewport=${vp.x},${vp.y},${vp.w},${vp.h}`;
    return `${this.base}${API_PREFIX}/sessions/${sid}/render?${q}`;
  }

  /** Fetch one rendered tile as a PNG blob. */
  async render(sid: string, vp: Viewport): Promise<Blob> {
    const res = await this.fetchFn(this.renderUrl(sid, vp));
    if (!res.ok) {
      throw new ApiError(res.status, await readDetail(res));
    }
    return res.blob();
  }

  async putParams(sid: string, patch: ParamsPatch, token?: string): Promise<SessionParams> {
    return this.request(
      "PUT",
      `/sessions/${sid}/params`,
      withToken(patch, token),
      ParamsSchema,
    );
  }

  async getCandidates(sid: string, kind: "structure" | "mito"): Promise<Candidate[]> {
    const doc = await this.request(
      "GET",
      `/sessions/${sid}/candidates?kind=${kind}`,
      undefined,
      z.object({ candidates: z.array(CandidateSchema) }),
    );
    return doc.candidates;
  }

  async getObjects(sid: string): Promise<ObjectRow[]> {
    const doc = await this.request(
      "GET",
      `/sessions/${sid}/objects`,
      undefined,
      z.object({ objects: z.array(ObjectRowSchema) }),
    );
    return doc.objects;
  }

  async postEdits(sid: string, edits: Edit[], token?: string): Promise<EditResponse> {
    return this.request(
      "POST",
      `/sessions/${sid}/edits`,
      withToken({ edits }, token),
      EditResponseSchema,
    );
  }

  async undo(sid: string, target: "structure" | "mito", token?: string): Promise<UndoResponse> {
    return this.request(
      "POST",
      `/sessions/${sid}/undo`,
      withToken({ target }, token),
      UndoResponseSchema,
    );
  }

  // --- training ----------------------------------------------------------------

  async train(sid: string, body: TrainRequest = {}, token?: string): Promise<string> {
    const doc = await this.request(
      "POST",
      `/sessions/${sid}/train`,
      withToken(body, token),
      z.object({ job_id: z.string() }),
    );
    return doc.job_id;
  }

  async getJob(jobId: string): Promise<Job> {
    return this.request("GET", `/jobs/${jobId}`, undefined, JobSchema);
  }

  // --- analysis ------------------------------------------------------------------

  async listSubsets(sid: string): Promise<Subset[]> {
    const doc = await this.request(
      "GET",
      `/sessions/${sid}/subsets`,
      undefined,
      z.object({ subsets: z.array(SubsetSchema) }),
    );
    return doc.subsets;
  }

  async createSubset(
    sid: string,
    body: { name: string; filter: FilterNode; id?: number },
    token?: string,
  ): Promise<Subset> {
    return this.request("POST", `/sessions/${sid}/subsets`, withToken(body, token), SubsetSchema);
  }

  async createSnapshot(sid: string, body: SnapshotRequest, token?: string): Promise<Snapshot> {
    return this.request(
      "POST",
      `/sessions/${sid}/snapshots`,
      withToken(body, token),
      SnapshotSchema,
    );
  }

  async groupCsv(gid: string): Promise<string> {
    const res = await this.fetchFn(`${this.base}${API_PREFIX}/groups/${gid}/snapshots.csv`);
    if (!res.ok) {
      throw new ApiError(res.status, await readDetail(res));
    }
    return res.text();
  }

  /** URL the snapshot panel's download link points at. */
  groupCsvUrl(gid: string): string {
    return `${this.base}${API_PREFIX}/groups/${gid}/snapshots.csv`;
  }

  // --- plumbing ---------------------------------------------------------------------

  private async request<T>(
    method: string,
    path: string,
    body: unknown,
    schema: ZodType<T>,
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const res = await this.fetchFn(`${this.base}${API_PREFIX}${path}`, init);
    if (!res.ok) {
      throw new ApiError(res.status, await readDetail(res));
    }
    return schema.parse(await res.json());
  }
}

function withToken(body: object, token: string | undefined): object {
  return token === undefined ? body : { ...body, token };
}

async function readDetail(res: Response): Promise<ErrorDetail[]> {
  try {
    const doc = (await res.json()) as { detail?: unknown };
    if (Array.isArray(doc.detail)) {
      return doc.detail as ErrorDetail[];
    }
  } catch {
    // non-JSON error body; fall through to a synthetic detail
  }
  return [{ loc: [], msg: res.statusText || "request failed", type: "http_error" }];
}
