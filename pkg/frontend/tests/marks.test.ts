import { afterEach, describe, expect, it, vi } from "vitest";
import { GatewayClient } from "../src/api.js";
import { MarkGrid, renderMarkGrid } from "../src/views/marks.js";
import { jsonResponse, mockFetch } from "./helpers.js";

function mount(): HTMLElement {
    const root = document.createElement("div");
    document.body.appendChild(root);
    return root;
}

afterEach(() => {
    document.body.innerHTML = "";
    vi.unstubAllGlobals();
});

describe("MarkGrid", () => {
    it("batches only edited cells into gateway CSV", () => {
        const grid = new MarkGrid("C101", ["stu.bella", "stu.chen"],
            ["quiz1", "asg1"]);
        grid.edit("stu.bella", "quiz1", "8");
        grid.edit("stu.chen", "asg1", "15.5");
        expect(grid.toCsv()).toBe(
            "course_id,item_id,student_id,raw_score\n" +
            "C101,quiz1,stu.bella,8\n" +
            "C101,asg1,stu.chen,15.5\n");
    });

    it("maps a rejected CSV line number back to its cell", () => {
        const grid = new MarkGrid("C101", ["a", "b"], ["quiz1"]);
        grid.edit("a", "quiz1", "5");
        grid.edit("b", "quiz1", "99");
        expect(grid.cellForLine(3)!.studentId).toBe("b");
    });
});

describe("mark entry view", () => {
    it("saving one edit posts one CSV row and reports it accepted", async () => {
        const root = mount();
        const calls = mockFetch(() => jsonResponse({ accepted: 1, rejected: [] }));
        const grid = new MarkGrid("C101", ["stu.bella"], ["quiz1"]);
        renderMarkGrid(root, grid, new GatewayClient());

        const input = root.querySelector<HTMLInputElement>(
            'td[data-student="stu.bella"] input')!;
        input.value = "8";
        input.dispatchEvent(new Event("input"));
        root.querySelector<HTMLButtonElement>(".save-marks")!.click();

        await vi.waitFor(() => {
            expect(root.querySelector(".save-status")!.textContent)
                .toBe("1 score(s) saved.");
        });
        expect(String(calls.mock.calls[0][1]!.body))
            .toBe("course_id,item_id,student_id,raw_score\nC101,quiz1,stu.bella,8\n");
    });

    it("a server-rejected row is highlighted inline, never dropped", async () => {
        const root = mount();
        mockFetch(() => jsonResponse({
            accepted: 1,
            rejected: [{ line: 3, reason: "ValidationFailure",
                raw: "", detail: "raw 99.0 outside [0, 10.0] for item quiz1" }],
        }));
        const grid = new MarkGrid("C101", ["stu.bella", "stu.chen"], ["quiz1"]);
        renderMarkGrid(root, grid, new GatewayClient());
        for (const [sid, raw] of [["stu.bella", "8"], ["stu.chen", "99"]]) {
            const input = root.querySelector<HTMLInputElement>(
                `td[data-student="${sid}"] input`)!;
            input.value = raw;
            input.dispatchEvent(new Event("input"));
        }
        root.querySelector<HTMLButtonElement>(".save-marks")!.click();

        await vi.waitFor(() => {
            const bad = root.querySelector('td[data-student="stu.chen"]')!;
            expect(bad.classList.contains("rejected")).toBe(true);
            expect(bad.getAttribute("title")).toContain("outside [0, 10.0]");
        });
        expect(root.querySelector('td[data-student="stu.bella"]')!
            .classList.contains("rejected")).toBe(false);
    });

    it("an offline gateway shows a banner and keeps edits pending", async () => {
        const root = mount();
        vi.stubGlobal("fetch", vi.fn(() => Promise.reject(new TypeError("refused"))));
        const grid = new MarkGrid("C101", ["stu.bella"], ["quiz1"]);
        renderMarkGrid(root, grid, new GatewayClient());
        const input = root.querySelector<HTMLInputElement>("td input")!;
        input.value = "7";
        input.dispatchEvent(new Event("input"));
        root.querySelector<HTMLButtonElement>(".save-marks")!.click();

        await vi.waitFor(() => {
            const banner = root.querySelector<HTMLElement>(".banner")!;
            expect(banner.hidden).toBe(false);
            expect(banner.textContent).toContain("not saved");
        });
        // no local truth: the edit is still pending, nothing claims success
        expect(grid.editedCells().length).toBe(1);
        expect(root.querySelector(".save-status")!.textContent).toBe("");
    });
});
