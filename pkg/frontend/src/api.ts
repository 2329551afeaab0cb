/**
 * Typed client for the local privedit service.
 *
 * Every request is pinned to the configured origin: the original portrait
 * must never travel anywhere else, so the client refuses to build a URL
 * whose origin differs from the one it was constructed with.
 */

export interface UploadResponse {
  session_id: string;
  landmark_status: string;
  state: string;
}

export interface ValidityInfo {
  passed: boolean;
  reason: string | null;
}

export interface PoseDelta {
  roll: number;
  residual: number;
}

export interface ReintegrateResponse {
  state: string;
  validity: ValidityInfo;
  pose_delta: PoseDelta | null;
  /** base64-encoded PNG of the final image */
  image: string;
  reprompt_suggestion?: string;
}

export interface PreviewResult {
  blob: Blob;
  maskedPixels: number;
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`service returned ${status}: ${detail}`);
    this.name = "ServiceError";
  }
}

export class OfflineError extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${String(cause)}`);
    this.name = "OfflineError";
  }
}

async function errorDetail(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    return JSON.stringify(body);
  } catch {
    return resp.statusText;
  }
}

export class ApiClient {
  private readonly origin: string;
  private readonly fetchImpl: typeof fetch;

  constructor(baseUrl: string, fetchImpl: typeof fetch = fetch) {
    this.origin = new URL(baseUrl).origin;
    this.fetchImpl = fetchImpl;
  }

  /** Resolve a path against the service origin; anything else is refused. */
  url(path: string): string {
    const resolved = new URL(path, this.origin);
    if (resolved.origin !== this.origin) {
      throw new Error(`refusing cross-origin request to ${resolved.origin}`);
    }
    return resolved.toString();
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(this.url(path), init);
    } catch (cause) {
      throw new OfflineError(cause);
    }
    if (!resp.ok) {
      throw new ServiceError(resp.status, await errorDetail(resp));
    }
    return resp;
  }

  async createSession(image: Blob, landmarks?: Blob): Promise<UploadResponse> {
    const form = new FormData();
    form.append("image", image, "upload.png");
    if (landmarks) {
      form.append("landmarks", landmarks, "upload.landmarks.json");
    }
    const resp = await this.request("/session", { method: "POST", body: form });
    return (await resp.json()) as UploadResponse;
  }

  async preview(sessionId: string, ratio: number, signal?: AbortSignal): Promise<PreviewResult> {
    const resp = await this.request(
      `/session/${sessionId}/preview?ratio=${encodeURIComponent(ratio)}`,
      { signal },
    );
    const maskedPixels = Number(resp.headers.get("X-Masked-Pixels") ?? "0");
    return { blob: await resp.blob(), maskedPixels };
  }

  async approve(sessionId: string, ratio: number): Promise<void> {
    await this.request(`/session/${sessionId}/approve`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ ratio }),
    });
  }

  async edit(sessionId: string, prompt: string): Promise<Blob> {
    const resp = await this.request(`/session/${sessionId}/edit`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ prompt }),
    });
    return resp.blob();
  }

  async reintegrate(sessionId: string): Promise<ReintegrateResponse> {
    const resp = await this.request(`/session/${sessionId}/reintegrate`, { method: "POST" });
    return (await resp.json()) as ReintegrateResponse;
  }

  async report(sessionId: string): Promise<unknown> {
    const resp = await this.request(`/session/${sessionId}/report`);
    return resp.json();
  }

  async deleteSession(sessionId: string): Promise<void> {
    await this.request(`/session/${sessionId}`, { method: "DELETE" });
  }
}

/** Decode the base64 PNG of a reintegrate response into a Blob. */
export function decodeImagePayload(b64: string): Blob {
  const binary = atob(b64);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) {
    bytes[i] = binary.charCodeAt(i);
  }
  return new Blob([bytes], { type: "image/png" });
}
