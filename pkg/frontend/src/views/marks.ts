import { ApiFailure, GatewayClient, GatewayOffline, ImportResult } from "../api.js";

/** One editable cell in the mark grid. */
export interface MarkCell {
    studentId: string;
    itemId: string;
    raw: string; // kept as entered; the server is the validator
    edited: boolean;
}

export class MarkGrid {
    cells: MarkCell[] = [];

    constructor(
        public courseId: string,
        students: string[],
        items: string[],
        existing: Record<string, Record<string, number>> = {},
    ) {
        for (const sid of students) {
            for (const item of items) {
                const current = existing[sid]?.[item];
                this.cells.push({
                    studentId: sid,
                    itemId: item,
                    raw: current === undefined ? "" : String(current),
                    edited: false,
                });
            }
        }
    }

    edit(studentId: string, itemId: string, raw: string): void {
        const cell = this.cells.find(
            (c) => c.studentId === studentId && c.itemId === itemId,
        );
        if (!cell) throw new Error(`no cell ${studentId}/${itemId}`);
        cell.raw = raw;
        cell.edited = true;
    }

    editedCells(): MarkCell[] {
        return this.cells.filter((c) => c.edited && c.raw !== "");
    }

    /** CSV batch of the edited cells, matching the gateway import format. */
    toCsv(): string {
        const lines = ["course_id,item_id,student_id,raw_score"];
        for (const cell of this.editedCells()) {
            lines.push(`${this.courseId},${cell.itemId},${cell.studentId},${cell.raw}`);
        }
        return lines.join("\n") + "\n";
    }

    /** Map a 1-based rejected CSV line back to its cell. */
    cellForLine(line: number): MarkCell | undefined {
        return this.editedCells()[line - 2]; // line 1 is the header
    }

    clearEdits(): void {
        for (const cell of this.cells) cell.edited = false;
    }
}

export function renderMarkGrid(
    root: HTMLElement,
    grid: MarkGrid,
    client: GatewayClient,
): void {
    root.innerHTML = "";
    const banner = document.createElement("div");
    banner.className = "banner";
    banner.hidden = true;
    root.appendChild(banner);

    const students = [...new Set(grid.cells.map((c) => c.studentId))];
    const items = [...new Set(grid.cells.map((c) => c.itemId))];

    const table = document.createElement("table");
    table.className = "mark-grid";
    const head = document.createElement("tr");
    head.appendChild(document.createElement("th"));
    for (const item of items) {
        const th = document.createElement("th");
        th.textContent = item;
        head.appendChild(th);
    }
    table.appendChild(head);

    for (const sid of students) {
        const row = document.createElement("tr");
        const name = document.createElement("td");
        name.textContent = sid;
        row.appendChild(name);
        for (const item of items) {
            const cell = grid.cells.find(
                (c) => c.studentId === sid && c.itemId === item,
            )!;
            const td = document.createElement("td");
            td.dataset.student = sid;
            td.dataset.item = item;
            const input = document.createElement("input");
            input.type = "text";
            input.value = cell.raw;
            input.addEventListener("input", () => grid.edit(sid, item, input.value));
            td.appendChild(input);
            row.appendChild(td);
        }
        table.appendChild(row);
    }
    root.appendChild(table);

    const save = document.createElement("button");
    save.className = "save-marks";
    save.textContent = "Save marks";
    root.appendChild(save);

    const status = document.createElement("div");
    status.className = "save-status";
    root.appendChild(status);

    save.addEventListener("click", async () => {
        for (const td of root.querySelectorAll("td.rejected")) {
            td.classList.remove("rejected");
            td.removeAttribute("title");
        }
        banner.hidden = true;
        let result: ImportResult;
        try {
            result = await client.importScores(grid.toCsv());
        } catch (err) {
            if (err instanceof GatewayOffline) {
                // no local truth: nothing is marked saved, edits stay pending
                banner.hidden = false;
                banner.textContent = "Gateway unreachable — marks not saved.";
            } else if (err instanceof ApiFailure) {
                banner.hidden = false;
                banner.textContent = `Save failed: ${err.reason}`;
            } else {
                throw err;
            }
            return;
        }
        status.textContent = `${result.accepted} score(s) saved.`;
        for (const rejection of result.rejected) {
            const cell = grid.cellForLine(rejection.line);
            if (!cell) continue;
            const td = root.querySelector<HTMLElement>(
                `td[data-student="${cell.studentId}"][data-item="${cell.itemId}"]`,
            );
            if (td) {
                td.classList.add("rejected");
                td.title = rejection.detail;
            }
        }
        if (result.rejected.length === 0) grid.clearEdits();
    });
}
