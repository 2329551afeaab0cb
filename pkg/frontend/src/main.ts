/** DOM wiring for the mask-tune-edit-reintegrate flow. */

import { ApiClient, OfflineError, ServiceError, decodeImagePayload } from "./api.js";
import { LatestWins, debounce } from "./debounce.js";
import { SessionView, ViewEvent, canTune, initialView, reduce } from "./state.js";

const PREVIEW_DEBOUNCE_MS = 150;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function mount(root: Document, client: ApiClient): void {
  let view: SessionView = initialView;
  const previews = new LatestWins();

  const fileInput = el<HTMLInputElement>("file-input");
  const slider = el<HTMLInputElement>("ratio-slider");
  const ratioLabel = el<HTMLSpanElement>("ratio-value");
  const pixelCounter = el<HTMLSpanElement>("pixel-counter");
  const previewImg = el<HTMLImageElement>("preview-img");
  const editedImg = el<HTMLImageElement>("edited-img");
  const finalImg = el<HTMLImageElement>("final-img");
  const promptInput = el<HTMLInputElement>("prompt-input");
  const approveBtn = el<HTMLButtonElement>("approve-btn");
  const editBtn = el<HTMLButtonElement>("edit-btn");
  const reintegrateBtn = el<HTMLButtonElement>("reintegrate-btn");
  const repromptBtn = el<HTMLButtonElement>("reprompt-btn");
  const downloadLink = el<HTMLAnchorElement>("download-link");
  const resetBtn = el<HTMLButtonElement>("reset-btn");
  const banner = el<HTMLDivElement>("banner");

  function dispatch(event: ViewEvent): void {
    view = reduce(view, event);
    render();
  }

  function fail(err: unknown): void {
    if (err instanceof ServiceError) {
      dispatch({ type: "request_failed", status: err.status, detail: err.detail });
    } else if (err instanceof OfflineError) {
      dispatch({ type: "offline" });
    } else {
      dispatch({ type: "request_failed", status: 0, detail: String(err) });
    }
  }

  function render(): void {
    ratioLabel.textContent = view.ratio.toFixed(2);
    pixelCounter.textContent =
      view.maskedPixels === null ? "–" : `${view.maskedPixels} px masked`;
    slider.disabled = !canTune(view) || view.busy;
    approveBtn.disabled = !canTune(view) || view.busy;
    editBtn.disabled = view.step !== "masked" || view.busy || view.offline;
    reintegrateBtn.disabled = view.step !== "edited" || view.busy || view.offline;
    repromptBtn.hidden = view.repromptSuggestion === null;
    previewImg.src = view.previewUrl ?? "";
    previewImg.hidden = view.previewUrl === null;
    editedImg.src = view.editedUrl ?? "";
    editedImg.hidden = view.editedUrl === null;
    finalImg.src = view.finalUrl ?? "";
    finalImg.hidden = view.finalUrl === null;
    downloadLink.hidden = view.finalUrl === null;
    if (view.finalUrl) downloadLink.href = view.finalUrl;
    if (view.banner) {
      banner.hidden = false;
      banner.textContent = view.banner.text;
      banner.dataset.kind = view.banner.kind;
    } else {
      banner.hidden = true;
      banner.textContent = "";
      delete banner.dataset.kind;
    }
  }

  function refreshPreview(): void {
    if (!canTune(view) || view.sessionId === null) return;
    const ratio = view.ratio;
    const sessionId = view.sessionId;
    void previews
      .run((signal) => client.preview(sessionId, ratio, signal))
      .then((result) => {
        if (!result) return; // superseded: last value wins
        dispatch({
          type: "preview_ready",
          url: URL.createObjectURL(result.blob),
          maskedPixels: result.maskedPixels,
          ratio,
        });
      })
      .catch(fail);
  }

  const debouncedPreview = debounce(refreshPreview, PREVIEW_DEBOUNCE_MS);

  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    dispatch({ type: "busy", value: true });
    client
      .createSession(file)
      .then((resp) => {
        dispatch({ type: "busy", value: false });
        dispatch({
          type: "session_created",
          sessionId: resp.session_id,
          landmarkStatus: resp.landmark_status,
        });
        refreshPreview();
      })
      .catch((err) => {
        dispatch({ type: "busy", value: false });
        fail(err);
      });
  });

  slider.addEventListener("input", () => {
    dispatch({ type: "ratio_changed", ratio: Number(slider.value) });
    debouncedPreview.call();
  });

  approveBtn.addEventListener("click", () => {
    if (view.sessionId === null) return;
    const ratio = view.ratio;
    client
      .approve(view.sessionId, ratio)
      .then(() => dispatch({ type: "approved", ratio }))
      .catch(fail);
  });

  function runEdit(prompt: string): void {
    if (view.sessionId === null) return;
    dispatch({ type: "busy", value: true });
    client
      .edit(view.sessionId, prompt)
      .then((blob) => {
        dispatch({ type: "busy", value: false });
        dispatch({ type: "edited", url: URL.createObjectURL(blob) });
      })
      .catch((err) => {
        dispatch({ type: "busy", value: false });
        fail(err);
      });
  }

  editBtn.addEventListener("click", () => runEdit(promptInput.value || "studio headshot"));

  repromptBtn.addEventListener("click", () => {
    // One-click follow-up using the service's suggestion text.
    if (view.repromptSuggestion) runEdit(view.repromptSuggestion);
  });

  reintegrateBtn.addEventListener("click", () => {
    if (view.sessionId === null) return;
    dispatch({ type: "busy", value: true });
    client
      .reintegrate(view.sessionId)
      .then((resp) => {
        dispatch({ type: "busy", value: false });
        dispatch({
          type: "reintegrated",
          url: URL.createObjectURL(decodeImagePayload(resp.image)),
          passed: resp.validity.passed,
          reason: resp.validity.reason,
          suggestion: resp.reprompt_suggestion ?? null,
        });
      })
      .catch((err) => {
        dispatch({ type: "busy", value: false });
        fail(err);
      });
  });

  resetBtn.addEventListener("click", () => {
    if (view.sessionId !== null) {
      client.deleteSession(view.sessionId).catch(() => undefined);
    }
    previews.cancel();
    dispatch({ type: "deleted" });
  });

  render();
}

if (typeof document !== "undefined" && document.getElementById("file-input")) {
  // Served by the local service itself: same origin by construction.
  mount(document, new ApiClient(window.location.origin));
}
