/**
 * UI state as a pure function of service responses.
 *
 * The reducer owns every transition; DOM code only dispatches events and
 * renders the resulting view, which keeps the page refresh-safe and the
 * logic unit-testable without a browser.
 */

export type Step = "idle" | "uploaded" | "masked" | "edited" | "reintegrated";

export type BannerKind = "info" | "error" | "offline" | "validity";

export interface Banner {
  kind: BannerKind;
  text: string;
}

export interface SessionView {
  sessionId: string | null;
  step: Step;
  ratio: number;
  landmarkStatus: string | null;
  maskedPixels: number | null;
  previewUrl: string | null;
  editedUrl: string | null;
  finalUrl: string | null;
  banner: Banner | null;
  repromptSuggestion: string | null;
  busy: boolean;
  offline: boolean;
}

export const initialView: SessionView = {
  sessionId: null,
  step: "idle",
  ratio: 1.0,
  landmarkStatus: null,
  maskedPixels: null,
  previewUrl: null,
  editedUrl: null,
  finalUrl: null,
  banner: null,
  repromptSuggestion: null,
  busy: false,
  offline: false,
};

export type ViewEvent =
  | { type: "session_created"; sessionId: string; landmarkStatus: string }
  | { type: "ratio_changed"; ratio: number }
  | { type: "preview_ready"; url: string; maskedPixels: number; ratio: number }
  | { type: "approved"; ratio: number }
  | { type: "edited"; url: string }
  | {
      type: "reintegrated";
      url: string;
      passed: boolean;
      reason: string | null;
      suggestion: string | null;
    }
  | { type: "request_failed"; status: number; detail: string }
  | { type: "offline" }
  | { type: "busy"; value: boolean }
  | { type: "deleted" };

export function canTune(view: SessionView): boolean {
  return (
    !view.offline &&
    view.sessionId !== null &&
    (view.step === "uploaded" || view.step === "masked" || view.step === "edited")
  );
}

export function reduce(view: SessionView, event: ViewEvent): SessionView {
  switch (event.type) {
    case "session_created":
      return {
        ...initialView,
        sessionId: event.sessionId,
        landmarkStatus: event.landmarkStatus,
        step: "uploaded",
        ratio: view.ratio,
      };
    case "ratio_changed":
      return { ...view, ratio: event.ratio };
    case "preview_ready":
      // A stale preview (ratio has moved on) must not win over the latest.
      if (event.ratio !== view.ratio) return view;
      return { ...view, previewUrl: event.url, maskedPixels: event.maskedPixels, banner: null };
    case "approved":
      return {
        ...view,
        step: "masked",
        ratio: event.ratio,
        editedUrl: null,
        finalUrl: null,
        banner: null,
        repromptSuggestion: null,
      };
    case "edited":
      return { ...view, step: "edited", editedUrl: event.url, finalUrl: null, banner: null };
    case "reintegrated":
      if (!event.passed) {
        return {
          ...view,
          banner: { kind: "validity", text: event.reason ?? "geometric validity failed" },
          repromptSuggestion: event.suggestion,
        };
      }
      return {
        ...view,
        step: "reintegrated",
        finalUrl: event.url,
        banner: null,
        repromptSuggestion: null,
      };
    case "request_failed":
      if (event.status === 409) {
        return { ...view, banner: { kind: "info", text: `Step order: ${event.detail}` } };
      }
      if (event.status === 422) {
        return { ...view, banner: { kind: "error", text: `Invalid input: ${event.detail}` } };
      }
      return { ...view, banner: { kind: "error", text: event.detail } };
    case "offline":
      return { ...view, offline: true, banner: { kind: "offline", text: "offline" } };
    case "busy":
      return { ...view, busy: event.value, offline: event.value ? false : view.offline };
    case "deleted":
      return { ...initialView, ratio: view.ratio };
    default:
      return view;
  }
}
