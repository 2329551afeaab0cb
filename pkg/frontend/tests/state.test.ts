import { describe, expect, it } from "vitest";

import { SessionView, ViewEvent, canTune, initialView, reduce } from "../src/state.js";

function play(events: ViewEvent[], from: SessionView = initialView): SessionView {
  return events.reduce(reduce, from);
}

const uploaded: ViewEvent = {
  type: "session_created",
  sessionId: "s1",
  landmarkStatus: "provided",
};

describe("reduce", () => {
  it("is pure: same inputs give equal outputs and never mutate", () => {
    const view = play([uploaded]);
    const frozen = JSON.stringify(view);
    const a = reduce(view, { type: "ratio_changed", ratio: 0.8 });
    const b = reduce(view, { type: "ratio_changed", ratio: 0.8 });
    expect(a).toEqual(b);
    expect(JSON.stringify(view)).toBe(frozen);
  });

  it("walks the happy path upload -> masked -> edited -> reintegrated", () => {
    const view = play([
      uploaded,
      { type: "preview_ready", url: "blob:p1", maskedPixels: 120, ratio: 1.0 },
      { type: "approved", ratio: 1.0 },
      { type: "edited", url: "blob:e1" },
      { type: "reintegrated", url: "blob:f1", passed: true, reason: null, suggestion: null },
    ]);
    expect(view.step).toBe("reintegrated");
    expect(view.finalUrl).toBe("blob:f1");
    expect(view.banner).toBeNull();
  });

  it("drops previews for a ratio the user has already moved past", () => {
    const view = play([
      uploaded,
      { type: "ratio_changed", ratio: 0.9 },
      { type: "preview_ready", url: "blob:old", maskedPixels: 10, ratio: 0.6 },
    ]);
    expect(view.previewUrl).toBeNull();
    const fresh = reduce(view, {
      type: "preview_ready",
      url: "blob:new",
      maskedPixels: 42,
      ratio: 0.9,
    });
    expect(fresh.previewUrl).toBe("blob:new");
    expect(fresh.maskedPixels).toBe(42);
  });

  it("renders a step-order hint on 409", () => {
    const view = play([
      uploaded,
      { type: "request_failed", status: 409, detail: "edit requires an approved mask" },
    ]);
    expect(view.banner?.kind).toBe("info");
    expect(view.banner?.text).toContain("Step order");
    expect(view.banner?.text).toContain("edit requires an approved mask");
  });

  it("renders 422 as inline validation", () => {
    const view = play([
      uploaded,
      { type: "request_failed", status: 422, detail: "ratio must lie in (0, 2]" },
    ]);
    expect(view.banner?.kind).toBe("error");
    expect(view.banner?.text).toContain("ratio must lie in (0, 2]");
  });

  it("shows the validity failure reason verbatim with the reprompt action", () => {
    const reason = "roll 30.0 deg exceeds tolerance 15.0 deg";
    const view = play([
      uploaded,
      { type: "approved", ratio: 1.0 },
      { type: "edited", url: "blob:e" },
      { type: "reintegrated", url: "blob:f", passed: false, reason, suggestion: "face forward" },
    ]);
    expect(view.step).toBe("edited"); // not advanced
    expect(view.banner?.kind).toBe("validity");
    expect(view.banner?.text).toBe(reason);
    expect(view.repromptSuggestion).toBe("face forward");
  });

  it("offline disables tuning", () => {
    const view = play([uploaded, { type: "offline" }]);
    expect(view.banner?.kind).toBe("offline");
    expect(canTune(view)).toBe(false);
  });

  it("re-approving from edited returns to masked and clears downstream urls", () => {
    const view = play([
      uploaded,
      { type: "approved", ratio: 0.8 },
      { type: "edited", url: "blob:e" },
      { type: "approved", ratio: 1.0 },
    ]);
    expect(view.step).toBe("masked");
    expect(view.editedUrl).toBeNull();
    expect(view.finalUrl).toBeNull();
  });

  it("deleted resets everything but keeps the chosen ratio", () => {
    const view = play([uploaded, { type: "ratio_changed", ratio: 0.7 }, { type: "deleted" }]);
    expect(view.sessionId).toBeNull();
    expect(view.step).toBe("idle");
    expect(view.ratio).toBe(0.7);
  });
});
