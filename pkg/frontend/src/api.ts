/** Thin typed client for the review server's JSON endpoints. */

export type Verdict = "pending" | "accepted" | "rejected";

export interface ShapeFlags {
  self_intersecting: boolean;
  sub_min_area: boolean;
  aspect_blowup: boolean;
  out_of_frame_excess: boolean;
}

export interface ScreeningFlags {
  overall: "clean" | "flagged";
  visible_shape_fraction_low: boolean;
  nonconverged_pixels_high: boolean;
  shapes: ShapeFlags[];
}

export interface Candidate {
  id: number;
  source: string;
  stem: string;
  variant: number;
  flags: ScreeningFlags;
  verdict: Verdict;
  note: string | null;
  nonconverged_fraction: number;
}

export interface ExportSummary {
  accepted: string[];
  rejected: string[];
  pending: number;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (body && typeof body.error === "string") detail = body.error;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export interface ApiClient {
  fetchCandidates(status: "pending" | "all"): Promise<Candidate[]>;
  postVerdict(id: number, decision: "accepted" | "rejected", note?: string): Promise<{ id: number; decision: string }>;
  fetchExport(): Promise<ExportSummary>;
  imageUrl(id: number, overlay: boolean): string;
}

export function createApi(baseUrl = ""): ApiClient {
  return {
    async fetchCandidates(status) {
      const resp = await fetch(`${baseUrl}/api/candidates?status=${status}`);
      return asJson<Candidate[]>(resp);
    },
    async postVerdict(id, decision, note) {
      const resp = await fetch(`${baseUrl}/api/candidates/${id}/verdict`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(note === undefined ? { decision } : { decision, note }),
      });
      return asJson<{ id: number; decision: string }>(resp);
    },
    async fetchExport() {
      const resp = await fetch(`${baseUrl}/api/export`);
      return asJson<ExportSummary>(resp);
    },
    imageUrl(id, overlay) {
      return `${baseUrl}/api/candidates/${id}/image?overlay=${overlay}`;
    },
  };
}

/** Human-readable badges for the screening flags of one candidate. */
export function flagBadges(flags: ScreeningFlags): string[] {
  const badges: string[] = [];
  if (flags.visible_shape_fraction_low) badges.push("many shapes lost");
  if (flags.nonconverged_pixels_high) badges.push("warp unstable");
  const shapeCounts = { self_intersecting: 0, sub_min_area: 0, aspect_blowup: 0, out_of_frame_excess: 0 };
  for (const s of flags.shapes ?? []) {
    if (s.self_intersecting) shapeCounts.self_intersecting++;
    if (s.sub_min_area) shapeCounts.sub_min_area++;
    if (s.aspect_blowup) shapeCounts.aspect_blowup++;
    if (s.out_of_frame_excess) shapeCounts.out_of_frame_excess++;
  }
  if (shapeCounts.self_intersecting) badges.push(`${shapeCounts.self_intersecting} self-intersecting`);
  if (shapeCounts.sub_min_area) badges.push(`${shapeCounts.sub_min_area} shrunk`);
  if (shapeCounts.aspect_blowup) badges.push(`${shapeCounts.aspect_blowup} stretched`);
  if (shapeCounts.out_of_frame_excess) badges.push(`${shapeCounts.out_of_frame_excess} off-frame`);
  return badges;
}
