/**
 * Polling helpers for long-running training jobs.
 */

import type { ApiClient } from "./client";
import type { Job } from "./types";

const DEFAULT_INTERVAL_MS = 500;

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

/**
 * Yield job documents every `intervalMs` until the job settles.  The final
 * yielded document has phase "done" or "failed"; the consumer decides what
 * a failure means for it.
 */
export async function* watchJob(
  client: ApiClient,
  jobId: string,
  intervalMs: number = DEFAULT_INTERVAL_MS,
): AsyncGenerator<Job, void, void> {
  for (;;) {
    const job = await client.getJob(jobId);
    yield job;
    if (job.phase === "done" || job.phase === "failed") {
      return;
    }
    await sleep(intervalMs);
  }
}

/**
 * Poll until completion.  Resolves with the final document when the job
 * finishes, rejects on failure or when `timeoutMs` elapses first.
 */
export async function pollJob(
  client: ApiClient,
  jobId: string,
  options: {
    intervalMs?: number;
    timeoutMs?: number;
    onProgress?: (job: Job) => void;
  } = {},
): Promise<Job> {
  const deadline = Date.now() + (options.timeoutMs ?? 120_000);
  for await (const job of watchJob(client, jobId, options.intervalMs)) {
    options.onProgress?.(job);
    if (job.phase === "done") {
      return job;
    }
    if (job.phase === "failed") {
      throw new Error(job.error || "training failed");
    }
    if (Date.now() > deadline) {
      throw new Error(`job ${jobId} still ${job.phase} after timeout`);
    }
  }
  throw new Error("job stream ended unexpectedly");
}
