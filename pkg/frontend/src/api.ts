// Thin typed wrapper over the backend HTTP API. All numbers displayed in
// the UI come from these responses verbatim.

export interface RetrieveResult {
  id: string;
  score: number;
  image_url: string;
}

export interface JobProgress {
  iteration: number;
  total: number;
}

export interface JobLosses {
  content: number;
  style: number;
  tv: number;
  total: number;
}

export interface JobResult {
  image_url: string;
  retrieved_id: string;
  losses: JobLosses | null;
  history: number[][];
}

export interface Job {
  id: string;
  kind: string;
  status: "queued" | "running" | "done" | "failed";
  progress: JobProgress;
  result: JobResult | null;
  error: string | null;
  created: string;
  updated: string;
}

export interface Health {
  status: string;
  index_size: number;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function errorDetail(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    if (typeof body?.detail === "string") return body.detail;
    if (body?.detail) return JSON.stringify(body.detail);
  } catch {
    // fall through to the status line
  }
  return `request failed with status ${resp.status}`;
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async health(): Promise<Health> {
    const resp = await fetch(this.url("/api/health"));
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
    return resp.json();
  }

  async retrieve(title: string, description: string, k = 5): Promise<RetrieveResult[]> {
    const resp = await fetch(this.url("/api/retrieve"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ title, description, k }),
    });
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
    const body = await resp.json();
    return body.results as RetrieveResult[];
  }

  async submitPipeline(
    file: File | Blob,
    title: string,
    description: string,
    overrides?: Record<string, unknown>,
  ): Promise<string> {
    const form = new FormData();
    form.append("file", file, file instanceof File ? file.name : "content.img");
    form.append("title", title);
    form.append("description", description);
    if (overrides && Object.keys(overrides).length > 0) {
      form.append("overrides", JSON.stringify(overrides));
    }
    const resp = await fetch(this.url("/api/pipeline"), { method: "POST", body: form });
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
    const body = await resp.json();
    return body.job_id as string;
  }

  async getJob(jobId: string): Promise<Job> {
    const resp = await fetch(this.url(`/api/jobs/${jobId}`));
    if (!resp.ok) throw new ApiError(resp.status, await errorDetail(resp));
    return resp.json();
  }

  resultUrl(jobId: string): string {
    return this.url(`/api/jobs/${jobId}/result`);
  }

  imageUrl(imagePath: string): string {
    return this.url(imagePath);
  }
}
