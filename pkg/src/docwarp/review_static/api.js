/** Thin typed client for the review server's JSON endpoints. */
export class ApiError extends Error {
    constructor(status, message) {
        super(message);
        this.status = status;
    }
}
async function asJson(resp) {
    if (!resp.ok) {
        let detail = resp.statusText;
        try {
            const body = await resp.json();
            if (body && typeof body.error === "string")
                detail = body.error;
        }
        catch {
            /* non-JSON error body */
        }
        throw new ApiError(resp.status, detail);
    }
    return (await resp.json());
}
export function createApi(baseUrl = "") {
    return {
        async fetchCandidates(status) {
            const resp = await fetch(`${baseUrl}/api/candidates?status=${status}`);
            return asJson(resp);
        },
        async postVerdict(id, decision, note) {
            const resp = await fetch(`${baseUrl}/api/candidates/${id}/verdict`, {
                method: "POST",
                headers: { "Content-Type": "application/json" },
                body: JSON.stringify(note === undefined ? { decision } : { decision, note }),
            });
            return asJson(resp);
        },
        async fetchExport() {
            const resp = await fetch(`${baseUrl}/api/export`);
            return asJson(resp);
        },
        imageUrl(id, overlay) {
            return `${baseUrl}/api/candidates/${id}/image?overlay=${overlay}`;
        },
    };
}
/** Human-readable badges for the screening flags of one candidate. */
export function flagBadges(flags) {
    const badges = [];
    if (flags.visible_shape_fraction_low)
        badges.push("many shapes lost");
    if (flags.nonconverged_pixels_high)
        badges.push("warp unstable");
    const shapeCounts = { self_intersecting: 0, sub_min_area: 0, aspect_blowup: 0, out_of_frame_excess: 0 };
    for (const s of flags.shapes ?? []) {
        if (s.self_intersecting)
            shapeCounts.self_intersecting++;
        if (s.sub_min_area)
            shapeCounts.sub_min_area++;
        if (s.aspect_blowup)
            shapeCounts.aspect_blowup++;
        if (s.out_of_frame_excess)
            shapeCounts.out_of_frame_excess++;
    }
    if (shapeCounts.self_intersecting)
        badges.push(`${shapeCounts.self_intersecting} self-intersecting`);
    if (shapeCounts.sub_min_area)
        badges.push(`${shapeCounts.sub_min_area} shrunk`);
    if (shapeCounts.aspect_blowup)
        badges.push(`${shapeCounts.aspect_blowup} stretched`);
    if (shapeCounts.out_of_frame_excess)
        badges.push(`${shapeCounts.out_of_frame_excess} off-frame`);
    return badges;
}
