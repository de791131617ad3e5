import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, createApi, flagBadges, type ScreeningFlags } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("createApi", () => {
  it("fetches candidates with the status query", async () => {
    const fetchMock = vi.fn(async () => jsonResponse([{ id: 0 }]));
    vi.stubGlobal("fetch", fetchMock);
    const api = createApi("http://host");
    const out = await api.fetchCandidates("pending");
    expect(out).toEqual([{ id: 0 }]);
    expect(fetchMock).toHaveBeenCalledWith("http://host/api/candidates?status=pending");
  });

  it("posts verdicts as JSON", async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ id: 3, decision: "accepted" }));
    vi.stubGlobal("fetch", fetchMock);
    const api = createApi("");
    const out = await api.postVerdict(3, "accepted", "ok");
    expect(out.decision).toBe("accepted");
    const [url, init] = fetchMock.mock.calls[0] as unknown as [string, RequestInit];
    expect(url).toBe("/api/candidates/3/verdict");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body as string)).toEqual({ decision: "accepted", note: "ok" });
  });

  it("omits the note field when not given", async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ id: 1, decision: "rejected" }));
    vi.stubGlobal("fetch", fetchMock);
    await createApi("").postVerdict(1, "rejected");
    const [, init] = fetchMock.mock.calls[0] as unknown as [string, RequestInit];
    expect(JSON.parse(init.body as string)).toEqual({ decision: "rejected" });
  });

  it("raises ApiError with the server's error detail on non-2xx", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => jsonResponse({ error: "unknown candidate 9" }, 404)));
    const api = createApi("");
    await expect(api.postVerdict(9, "accepted")).rejects.toThrowError(ApiError);
    await expect(api.postVerdict(9, "accepted")).rejects.toMatchObject({
      status: 404,
      message: "unknown candidate 9",
    });
  });

  it("builds image urls with the overlay toggle", () => {
    const api = createApi("http://h");
    expect(api.imageUrl(5, true)).toBe("http://h/api/candidates/5/image?overlay=true");
    expect(api.imageUrl(5, false)).toBe("http://h/api/candidates/5/image?overlay=false");
  });

  it("fetches the export summary", async () => {
    const summary = { accepted: ["a.png"], rejected: [], pending: 2 };
    vi.stubGlobal("fetch", vi.fn(async () => jsonResponse(summary)));
    expect(await createApi("").fetchExport()).toEqual(summary);
  });
});

describe("flagBadges", () => {
  const base: ScreeningFlags = {
    overall: "clean",
    visible_shape_fraction_low: false,
    nonconverged_pixels_high: false,
    shapes: [],
  };

  it("clean candidate has no badges", () => {
    expect(flagBadges(base)).toEqual([]);
  });

  it("aggregates per-shape flags into counts", () => {
    const flags: ScreeningFlags = {
      ...base,
      overall: "flagged",
      shapes: [
        { self_intersecting: true, sub_min_area: false, aspect_blowup: false, out_of_frame_excess: false },
        { self_intersecting: true, sub_min_area: true, aspect_blowup: false, out_of_frame_excess: false },
      ],
    };
    expect(flagBadges(flags)).toEqual(["2 self-intersecting", "1 shrunk"]);
  });

  it("includes document-level flags", () => {
    const flags: ScreeningFlags = {
      ...base,
      overall: "flagged",
      visible_shape_fraction_low: true,
      nonconverged_pixels_high: true,
    };
    expect(flagBadges(flags)).toEqual(["many shapes lost", "warp unstable"]);
  });
});
