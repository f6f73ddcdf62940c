// Job polling: 1 s interval backing off to 5 s, cancellable so a new
// submission can drop the previous job's polling loop.

import type { ApiClient, Job } from "./api.js";
export type { Job } from "./api.js";

export interface PollOptions {
  initialMs?: number;
  maxMs?: number;
  backoffFactor?: number;
  onUpdate?: (job: Job) => void;
}

export interface PollHandle {
  promise: Promise<Job>;
  cancel: () => void;
}

export class PollCancelled extends Error {
  constructor() {
    super("polling cancelled");
  }
}

export function nextInterval(current: number, maxMs = 5000, factor = 1.5): number {
  return Math.min(Math.round(current * factor), maxMs);
}

export function pollJob(api: ApiClient, jobId: string, opts: PollOptions = {}): PollHandle {
  const initialMs = opts.initialMs ?? 1000;
  const maxMs = opts.maxMs ?? 5000;
  const factor = opts.backoffFactor ?? 1.5;

  let cancelled = false;
  let timer: ReturnType<typeof setTimeout> | null = null;
  let rejectFn: (err: Error) => void;

  const promise = new Promise<Job>((resolve, reject) => {
    rejectFn = reject;
    let interval = initialMs;

    const tick = async () => {
      if (cancelled) return;
      let job: Job;
      try {
        job = await api.getJob(jobId);
      } catch (err) {
        reject(err instanceof Error ? err : new Error(String(err)));
        return;
      }
      if (cancelled) return;
      opts.onUpdate?.(job);
      if (job.status === "done" || job.status === "failed") {
        resolve(job);
        return;
      }
      timer = setTimeout(tick, interval);
      interval = nextInterval(interval, maxMs, factor);
    };

    timer = setTimeout(tick, interval);
    interval = nextInterval(interval, maxMs, factor);
  });

  return {
    promise,
    cancel: () => {
      cancelled = true;
      if (timer !== null) clearTimeout(timer);
      rejectFn(new PollCancelled());
    },
  };
}
