/**
 * End-to-end flow against the real local service with the mock backend:
 * upload, tune, approve, edit, reintegrate, download (S1), plus the
 * single-origin guarantee over every request the client makes (S2).
 */

import { ChildProcess, execFileSync, spawn } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ServiceError, decodeImagePayload } from "../src/api.js";
import { initialView, reduce } from "../src/state.js";

const PORT = 18750 + Math.floor(Math.random() * 1000);
const ORIGIN = `http://127.0.0.1:${PORT}`;

let service: ChildProcess;
let workDir: string;
let imageBlob: Blob;
let landmarksBlob: Blob;
const requestedUrls: string[] = [];

const recordingFetch = (async (input: RequestInfo | URL, init?: RequestInit) => {
  requestedUrls.push(String(input));
  return fetch(input, init);
}) as typeof fetch;

async function waitForService(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${ORIGIN}/`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("service did not come up in time");
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "privedit-ui-"));
  // Fixture portrait + landmarks straight from the package generators.
  execFileSync("python3", [
    "-c",
    [
      "import sys",
      "from privedit.fixtures import synthetic_portrait, write_sidecar",
      "from privedit.imaging import save_image",
      "img, lms = synthetic_portrait(256, 256, seed=90)",
      `save_image(img, r'${join(workDir, "face.png")}')`,
      `write_sidecar(lms, r'${join(workDir, "face.landmarks.json")}')`,
    ].join("\n"),
  ]);
  const cfgPath = join(workDir, "cfg.json");
  writeFileSync(
    cfgPath,
    JSON.stringify({ workspace: workDir, "backend.kind": "mock-identity" }),
  );
  service = spawn(
    "python3",
    ["-m", "privedit.cli", "--config", cfgPath, "serve", "--port", String(PORT)],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  await waitForService();
  imageBlob = new Blob([readFileSync(join(workDir, "face.png"))], { type: "image/png" });
  landmarksBlob = new Blob([readFileSync(join(workDir, "face.landmarks.json"))], {
    type: "application/json",
  });
}, 60_000);

afterAll(() => {
  service?.kill("SIGTERM");
  rmSync(workDir, { recursive: true, force: true });
});

describe("full session flow against the live service", () => {
  it("upload -> tune -> approve -> edit -> reintegrate -> download", async () => {
    const client = new ApiClient(ORIGIN, recordingFetch);
    let view = initialView;

    const session = await client.createSession(imageBlob, landmarksBlob);
    view = reduce(view, {
      type: "session_created",
      sessionId: session.session_id,
      landmarkStatus: session.landmark_status,
    });
    expect(view.step).toBe("uploaded");

    // Slider drag 0.6 -> 1.0: the preview grows and arrives quickly.
    const counts: number[] = [];
    for (const ratio of [0.6, 1.0]) {
      view = reduce(view, { type: "ratio_changed", ratio });
      const started = Date.now();
      const preview = await client.preview(session.session_id, ratio);
      expect(Date.now() - started).toBeLessThan(1000);
      expect(preview.blob.size).toBeGreaterThan(0);
      counts.push(preview.maskedPixels);
      view = reduce(view, {
        type: "preview_ready",
        url: `blob:ratio-${ratio}`,
        maskedPixels: preview.maskedPixels,
        ratio,
      });
    }
    expect(counts[1]!).toBeGreaterThan(counts[0]!);
    expect(view.maskedPixels).toBe(counts[1]);

    // Out-of-order action: edit before approve renders the 409 hint.
    const early = await client.edit(session.session_id, "headshot").catch((e) => e);
    expect(early).toBeInstanceOf(ServiceError);
    expect((early as ServiceError).status).toBe(409);
    view = reduce(view, {
      type: "request_failed",
      status: (early as ServiceError).status,
      detail: (early as ServiceError).detail,
    });
    expect(view.banner?.kind).toBe("info");
    expect(view.banner?.text).toMatch(/Step order/);

    await client.approve(session.session_id, 1.0);
    view = reduce(view, { type: "approved", ratio: 1.0 });

    const edited = await client.edit(session.session_id, "studio headshot");
    expect(edited.size).toBeGreaterThan(0);
    view = reduce(view, { type: "edited", url: "blob:edited" });

    const result = await client.reintegrate(session.session_id);
    expect(result.validity.passed).toBe(true);
    const finalBlob = decodeImagePayload(result.image);
    expect(finalBlob.size).toBeGreaterThan(0);
    // PNG magic: the download bytes are the final image, unmodified.
    const head = new Uint8Array(await finalBlob.arrayBuffer()).slice(0, 8);
    expect(Array.from(head)).toEqual([137, 80, 78, 71, 13, 10, 26, 10]);
    view = reduce(view, {
      type: "reintegrated",
      url: "blob:final",
      passed: result.validity.passed,
      reason: result.validity.reason,
      suggestion: result.reprompt_suggestion ?? null,
    });
    expect(view.step).toBe("reintegrated");

    const report = (await client.report(session.session_id)) as { schema: string };
    expect(report.schema).toBe("privedit-result/1");

    await client.deleteSession(session.session_id);
    const gone = await client.report(session.session_id).catch((e) => e);
    expect((gone as ServiceError).status).toBe(404);
  }, 60_000);

  it("issues requests only to the configured service origin", () => {
    expect(requestedUrls.length).toBeGreaterThan(5);
    for (const url of requestedUrls) {
      expect(new URL(url).origin).toBe(ORIGIN);
    }
  });
});
