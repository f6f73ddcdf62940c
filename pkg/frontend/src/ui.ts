// DOM wiring around the session machine. mountApp is exported so tests
// can drive the controller against a document of their own.

import { ApiClient, ApiError } from "./api.js";
import type { Job, RetrieveResult } from "./api.js";
import { PollCancelled, PollHandle, pollJob } from "./poll.js";
import { decodePpm } from "./ppm.js";
import { SessionMachine } from "./state.js";

export interface Controller {
  machine: SessionMachine;
  handleFile(file: File): Promise<void>;
  handleRetrieve(): Promise<void>;
  handleSelect(id: string): void;
  handleTransfer(overrides?: Record<string, unknown>): Promise<void>;
  render(): void;
  dispose(): void;
}

function el<T extends HTMLElement>(doc: Document, id: string): T {
  const node = doc.getElementById(id);
  if (!node) throw new Error(`missing #${id} in document`);
  return node as T;
}

async function previewUpload(doc: Document, container: HTMLElement, file: File): Promise<void> {
  container.innerHTML = "";
  try {
    if (file.name.toLowerCase().endsWith(".ppm")) {
      const decoded = decodePpm(new Uint8Array(await file.arrayBuffer()));
      const canvas = doc.createElement("canvas");
      canvas.width = decoded.width;
      canvas.height = decoded.height;
      canvas.className = "preview-image";
      const ctx = canvas.getContext("2d");
      if (ctx) {
        ctx.putImageData(new ImageData(decoded.rgba, decoded.width, decoded.height), 0, 0);
      }
      container.appendChild(canvas);
    } else {
      const img = doc.createElement("img");
      img.className = "preview-image";
      img.alt = file.name;
      img.src = URL.createObjectURL(file);
      container.appendChild(img);
    }
  } catch {
    // preview is best-effort; the upload itself is still usable
  }
  const caption = doc.createElement("p");
  caption.className = "preview-caption";
  caption.textContent = file.name;
  container.appendChild(caption);
}

export function mountApp(doc: Document, api: ApiClient): Controller {
  const machine = new SessionMachine();

  const fileInput = el<HTMLInputElement>(doc, "file-input");
  const preview = el<HTMLElement>(doc, "preview");
  const titleInput = el<HTMLInputElement>(doc, "title-input");
  const descriptionInput = el<HTMLTextAreaElement>(doc, "description-input");
  const retrieveBtn = el<HTMLButtonElement>(doc, "retrieve-btn");
  const candidatesBox = el<HTMLElement>(doc, "candidates");
  const transferBtn = el<HTMLButtonElement>(doc, "transfer-btn");
  const statusLine = el<HTMLElement>(doc, "status-line");
  const progressFill = el<HTMLElement>(doc, "progress-fill");
  const resultBox = el<HTMLElement>(doc, "result");
  const message = el<HTMLElement>(doc, "message");

  let activePoll: PollHandle | null = null;
  let currentFile: File | null = null;

  function renderCandidates(): void {
    candidatesBox.innerHTML = "";
    for (const cand of machine.state.candidates) {
      const button = doc.createElement("button");
      button.type = "button";
      button.className = "candidate" + (machine.state.selectedId === cand.id ? " selected" : "");
      button.dataset.id = cand.id;

      const img = doc.createElement("img");
      img.src = api.imageUrl(cand.image_url);
      img.alt = cand.id;
      button.appendChild(img);

      const label = doc.createElement("span");
      label.textContent = `${cand.id} (${cand.score})`;
      button.appendChild(label);

      button.addEventListener("click", () => controller.handleSelect(cand.id));
      candidatesBox.appendChild(button);
    }
  }

  function renderResult(): void {
    resultBox.innerHTML = "";
    const job = machine.state.job;
    if (!job || job.status !== "done" || !job.result) return;

    const pair = doc.createElement("div");
    pair.className = "side-by-side";
    const original = preview.querySelector(".preview-image");
    if (original) pair.appendChild(original.cloneNode(true));
    const out = doc.createElement("img");
    out.id = "result-image";
    out.className = "preview-image";
    out.src = api.resultUrl(job.id);
    out.alt = "stylized result";
    pair.appendChild(out);
    resultBox.appendChild(pair);

    const info = doc.createElement("p");
    info.id = "retrieved-info";
    info.textContent = `style image: ${job.result.retrieved_id}`;
    resultBox.appendChild(info);

    if (job.result.losses) {
      const list = doc.createElement("dl");
      list.id = "losses";
      for (const key of ["content", "style", "tv", "total"] as const) {
        const dt = doc.createElement("dt");
        dt.textContent = key;
        const dd = doc.createElement("dd");
        dd.id = `loss-${key}`;
        // numbers pass through from the job JSON untouched
        dd.textContent = String(job.result.losses[key]);
        list.appendChild(dt);
        list.appendChild(dd);
      }
      resultBox.appendChild(list);
    }
  }

  function render(): void {
    const state = machine.state;
    message.textContent = state.message ?? "";
    message.hidden = !state.message;
    retrieveBtn.disabled = state.phase === "running";
    transferBtn.disabled = !machine.canTransfer();
    progressFill.style.width = `${machine.progressPercent()}%`;
    if (state.phase === "running" && state.progress) {
      statusLine.textContent =
        `transferring: iteration ${state.progress.iteration} / ${state.progress.total}`;
    } else if (state.phase === "done") {
      statusLine.textContent = "done";
    } else if (state.phase === "failed") {
      statusLine.textContent = "failed";
    } else {
      statusLine.textContent = state.phase;
    }
    renderCandidates();
    renderResult();
  }

  const controller: Controller = {
    machine,

    async handleFile(file: File): Promise<void> {
      const problem = machine.setUpload({ name: file.name, size: file.size, type: file.type });
      if (problem === null) {
        currentFile = file;
        await previewUpload(doc, preview, file);
      }
      render();
    },

    async handleRetrieve(): Promise<void> {
      machine.setText(titleInput.value, descriptionInput.value);
      const problem = machine.canRetrieve();
      if (problem) {
        machine.state.message = problem;
        render();
        return; // invalid input: no network call
      }
      try {
        const results = await api.retrieve(machine.state.title, machine.state.description, 5);
        machine.retrieved(results);
      } catch (err) {
        machine.state.message = err instanceof ApiError ? err.message : String(err);
      }
      render();
    },

    handleSelect(id: string): void {
      machine.select(id);
      render();
    },

    async handleTransfer(overrides?: Record<string, unknown>): Promise<void> {
      if (!machine.canTransfer() || !currentFile) return;
      activePoll?.cancel(); // at most one active job per session
      activePoll = null;
      try {
        const jobId = await api.submitPipeline(
          currentFile, machine.state.title, machine.state.description, overrides,
        );
        machine.jobStarted(jobId);
        render();
        activePoll = pollJob(api, jobId, {
          onUpdate: (job: Job) => {
            machine.jobUpdated(job);
            render();
          },
        });
        await activePoll.promise;
      } catch (err) {
        if (err instanceof PollCancelled) return;
        machine.failed(err instanceof ApiError ? err.message : String(err));
      }
      render();
    },

    render,
    dispose(): void {
      activePoll?.cancel();
      activePoll = null;
    },
  };

  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (file) void controller.handleFile(file);
  });
  const onTextEdit = () => {
    machine.setText(titleInput.value, descriptionInput.value);
    render();
  };
  titleInput.addEventListener("input", onTextEdit);
  descriptionInput.addEventListener("input", onTextEdit);
  retrieveBtn.addEventListener("click", () => void controller.handleRetrieve());
  transferBtn.addEventListener("click", () => void controller.handleTransfer());

  render();
  return controller;
}

export type { RetrieveResult };
