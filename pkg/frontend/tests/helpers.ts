import { vi } from "vitest";
import { AttainmentReport, AuditFeed } from "../src/api.js";

/** A report with awkward float values, as the gateway would produce them. */
export function demoReport(threshold = 0.5): AttainmentReport {
    return {
        course_id: "C101",
        threshold,
        per_student: {
            "stu.bella": { CO1: 0.8666666666666667, CO2: 0.5333333333333333, CO3: 0.62 },
            "stu.chen": { CO1: 0.39166666666666666, CO2: 0.8, CO3: 0.455 },
        },
        cohort: {
            CO1: { mean: 0.6291666666666667, fraction_above_threshold: 0.5 },
            CO2: { mean: 0.6666666666666666, fraction_above_threshold: 1.0 },
            CO3: { mean: 0.5375, fraction_above_threshold: 0.5 },
        },
        po_rollup: { PO1: 0.6479166666666667, PO2: 0.5375 },
    };
}

export function emptyFeed(): AuditFeed {
    return { events: [], flags: [] };
}

export function jsonResponse(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
        status,
        headers: { "Content-Type": "application/json" },
    });
}

/** Install a fetch mock; returns the mock for call inspection. */
export function mockFetch(
    handler: (url: string, init?: RequestInit) => Response | Promise<Response>,
) {
    const mock = vi.fn(async (input: RequestInfo | URL, init?: RequestInit) =>
        handler(String(input), init));
    vi.stubGlobal("fetch", mock);
    return mock;
}
