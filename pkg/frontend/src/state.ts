// Session state machine: idle -> uploaded -> retrieved -> selected ->
// running -> done/failed. Editing inputs clears anything computed from
// the old values, and transfer stays unavailable until an image is
// uploaded and a candidate picked.

import type { Job, JobProgress, RetrieveResult } from "./api.js";

export const MAX_UPLOAD_BYTES = 10 * 1024 * 1024;

export type Phase =
  | "idle"
  | "uploaded"
  | "retrieved"
  | "selected"
  | "running"
  | "done"
  | "failed";

export interface UploadMeta {
  name: string;
  size: number;
  type: string;
}

export interface SessionState {
  phase: Phase;
  upload: UploadMeta | null;
  title: string;
  description: string;
  candidates: RetrieveResult[];
  selectedId: string | null;
  jobId: string | null;
  progress: JobProgress | null;
  job: Job | null;
  message: string | null;
}

export function initialState(): SessionState {
  return {
    phase: "idle",
    upload: null,
    title: "",
    description: "",
    candidates: [],
    selectedId: null,
    jobId: null,
    progress: null,
    job: null,
    message: null,
  };
}

function looksLikeImage(meta: UploadMeta): boolean {
  if (meta.type === "image/png" || meta.type === "image/x-portable-pixmap") return true;
  const name = meta.name.toLowerCase();
  return name.endsWith(".png") || name.endsWith(".ppm");
}

export function validateUpload(meta: UploadMeta): string | null {
  if (meta.size > MAX_UPLOAD_BYTES) {
    return `file is ${meta.size} bytes; the limit is ${MAX_UPLOAD_BYTES} (10 MB)`;
  }
  if (!looksLikeImage(meta)) {
    return "only PNG and PPM images are supported";
  }
  return null;
}

export function validateQuery(title: string, description: string): string | null {
  if (!title.trim() && !description.trim()) {
    return "enter a style title or a description first";
  }
  return null;
}

export class SessionMachine {
  state: SessionState = initialState();

  /** Wipe everything derived from previous inputs (candidates, job, result). */
  private clearDerived(): void {
    this.state.candidates = [];
    this.state.selectedId = null;
    this.state.jobId = null;
    this.state.progress = null;
    this.state.job = null;
    this.state.phase = this.state.upload ? "uploaded" : "idle";
  }

  /** Returns the validation message, or null when the file was accepted. */
  setUpload(meta: UploadMeta): string | null {
    const problem = validateUpload(meta);
    if (problem) {
      this.state.message = problem;
      return problem;
    }
    this.state.upload = meta;
    this.state.message = null;
    this.clearDerived();
    return null;
  }

  setText(title: string, description: string): void {
    if (title === this.state.title && description === this.state.description) return;
    this.state.title = title;
    this.state.description = description;
    this.clearDerived();
  }

  /** Returns the validation message, or null when a retrieve may proceed. */
  canRetrieve(): string | null {
    return validateQuery(this.state.title, this.state.description);
  }

  retrieved(candidates: RetrieveResult[]): void {
    this.state.candidates = candidates;
    this.state.selectedId = null;
    this.state.message = null;
    this.state.phase = "retrieved";
  }

  select(id: string): void {
    if (!this.state.candidates.some((c) => c.id === id)) {
      throw new Error(`candidate ${id} is not in the current result list`);
    }
    this.state.selectedId = id;
    this.state.phase = "selected";
  }

  canTransfer(): boolean {
    return this.state.upload !== null && this.state.selectedId !== null
      && this.state.phase !== "running";
  }

  jobStarted(jobId: string): void {
    this.state.jobId = jobId;
    this.state.progress = { iteration: 0, total: 0 };
    this.state.job = null;
    this.state.phase = "running";
  }

  jobUpdated(job: Job): void {
    if (job.id !== this.state.jobId) return; // stale poll from a superseded job
    this.state.progress = job.progress;
    if (job.status === "done") {
      this.state.job = job;
      this.state.phase = "done";
    } else if (job.status === "failed") {
      this.state.job = job;
      this.state.message = job.error ?? "transfer failed";
      this.state.phase = "failed";
    }
  }

  failed(message: string): void {
    this.state.message = message;
    this.state.phase = this.state.selectedId ? "selected" : this.state.phase;
  }

  progressPercent(): number {
    const p = this.state.progress;
    if (!p || p.total === 0) return 0;
    return Math.round((100 * p.iteration) / p.total);
  }
}
