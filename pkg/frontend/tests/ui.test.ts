import { describe, expect, it, vi } from "vitest";

import type { ApiClient, Job } from "../src/api.js";
import { encodePpm } from "../src/ppm.js";
import { mountApp } from "../src/ui.js";
import { appDocument } from "./helpers.js";

function stubApi(overrides: Partial<Record<keyof ApiClient, unknown>> = {}): ApiClient {
  return {
    retrieve: vi.fn(async () => [
      { id: "art001", score: 0.91, image_url: "/images/art001" },
      { id: "art002", score: 0.4, image_url: "/images/art002" },
    ]),
    submitPipeline: vi.fn(async () => "job-1"),
    getJob: vi.fn(),
    resultUrl: (id: string) => `/api/jobs/${id}/result`,
    imageUrl: (p: string) => p,
    ...overrides,
  } as unknown as ApiClient;
}

function ppmFile(name = "content.ppm", pixels = 4): File {
  const rgb = new Uint8Array(pixels * 3).fill(128);
  return new File([encodePpm(pixels, 1, rgb)], name);
}

describe("mounted app", () => {
  it("enables transfer only after upload and selection", async () => {
    const doc = appDocument();
    const controller = mountApp(doc, stubApi());
    const transferBtn = doc.getElementById("transfer-btn") as HTMLButtonElement;
    expect(transferBtn.disabled).toBe(true);

    await controller.handleFile(ppmFile());
    expect(doc.getElementById("preview")!.textContent).toContain("content.ppm");
    expect(transferBtn.disabled).toBe(true);

    (doc.getElementById("title-input") as HTMLInputElement).value = "azure study";
    await controller.handleRetrieve();
    expect(doc.querySelectorAll(".candidate")).toHaveLength(2);
    expect(transferBtn.disabled).toBe(true);

    controller.handleSelect("art001");
    expect(transferBtn.disabled).toBe(false);
    expect(doc.querySelector(".candidate.selected")?.textContent).toContain("art001");
  });

  it("blocks empty text client-side without any network call", async () => {
    const doc = appDocument();
    const api = stubApi();
    const controller = mountApp(doc, api);
    await controller.handleRetrieve();
    expect(api.retrieve).not.toHaveBeenCalled();
    expect(doc.getElementById("message")!.textContent).toMatch(/title or a description/);
  });

  it("rejects oversize files inline without uploading", async () => {
    const doc = appDocument();
    const api = stubApi();
    const controller = mountApp(doc, api);
    const big = new File([new ArrayBuffer(10 * 1024 * 1024 + 1)], "big.png");
    await controller.handleFile(big);
    expect(doc.getElementById("message")!.textContent).toMatch(/10 MB/);
    expect(controller.machine.state.upload).toBeNull();
    expect(api.submitPipeline).not.toHaveBeenCalled();
  });

  it("editing the text clears candidates and disables transfer", async () => {
    const doc = appDocument();
    const controller = mountApp(doc, stubApi());
    await controller.handleFile(ppmFile());
    const title = doc.getElementById("title-input") as HTMLInputElement;
    title.value = "azure study";
    await controller.handleRetrieve();
    controller.handleSelect("art001");
    expect((doc.getElementById("transfer-btn") as HTMLButtonElement).disabled).toBe(false);

    title.value = "emerald study";
    title.dispatchEvent(new (doc.defaultView as any).Event("input"));
    expect(doc.querySelectorAll(".candidate")).toHaveLength(0);
    expect((doc.getElementById("transfer-btn") as HTMLButtonElement).disabled).toBe(true);
  });

  it("runs a transfer to completion and shows the job's loss numbers", async () => {
    const doc = appDocument();
    const losses = { content: 1.25, style: 0.0625, tv: 2.5, total: 0.07875 };
    const doneJob: Job = {
      id: "job-1", kind: "pipeline", status: "done",
      progress: { iteration: 4, total: 4 },
      result: {
        image_url: "/api/jobs/job-1/result", retrieved_id: "art001",
        losses, history: [[1, 1, 1, 1]],
      },
      error: null, created: "t", updated: "t",
    };
    const api = stubApi({ getJob: vi.fn(async () => doneJob) });
    const controller = mountApp(doc, api);
    await controller.handleFile(ppmFile());
    (doc.getElementById("title-input") as HTMLInputElement).value = "azure study";
    await controller.handleRetrieve();
    controller.handleSelect("art001");

    vi.useFakeTimers();
    const run = controller.handleTransfer({ iterations: 4 });
    await vi.advanceTimersByTimeAsync(1000);
    await run;
    vi.useRealTimers();

    expect(controller.machine.state.phase).toBe("done");
    expect(doc.getElementById("loss-content")!.textContent).toBe(String(losses.content));
    expect(doc.getElementById("loss-style")!.textContent).toBe(String(losses.style));
    expect(doc.getElementById("loss-tv")!.textContent).toBe(String(losses.tv));
    expect(doc.getElementById("loss-total")!.textContent).toBe(String(losses.total));
    expect((doc.getElementById("result-image") as HTMLImageElement).getAttribute("src"))
      .toBe("/api/jobs/job-1/result");
    expect(doc.getElementById("status-line")!.textContent).toBe("done");
  });

  it("shows the server error banner when the job fails", async () => {
    const doc = appDocument();
    const failedJob: Job = {
      id: "job-1", kind: "pipeline", status: "failed",
      progress: { iteration: 0, total: 4 }, result: null,
      error: "iteration 2: non-finite total loss inf",
      created: "t", updated: "t",
    };
    const api = stubApi({ getJob: vi.fn(async () => failedJob) });
    const controller = mountApp(doc, api);
    await controller.handleFile(ppmFile());
    (doc.getElementById("title-input") as HTMLInputElement).value = "azure";
    await controller.handleRetrieve();
    controller.handleSelect("art001");

    vi.useFakeTimers();
    const run = controller.handleTransfer();
    await vi.advanceTimersByTimeAsync(1000);
    await run;
    vi.useRealTimers();

    expect(controller.machine.state.phase).toBe("failed");
    expect(doc.getElementById("message")!.textContent).toContain("non-finite");
    expect(doc.getElementById("status-line")!.textContent).toBe("failed");
  });
});
