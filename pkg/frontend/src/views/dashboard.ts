import { AttainmentReport } from "../api.js";

// Every number rendered here is the gateway's value verbatim: no rounding,
// no percentages, no client-side attainment arithmetic. Bar widths are
// delegated to CSS calc() so the raw value passes through untouched.

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className?: string,
    text?: string,
): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
}

function bar(value: number): HTMLElement {
    const track = el("div", "bar-track");
    const fill = el("div", "bar-fill");
    fill.style.width = `calc(${String(value)} * 100%)`;
    track.appendChild(fill);
    return track;
}

export interface DashboardHandlers {
    onThresholdChange(threshold: number): void;
}

export function renderDashboard(
    root: HTMLElement,
    report: AttainmentReport,
    handlers: DashboardHandlers,
): void {
    root.innerHTML = "";
    const heading = el("h2", "dash-heading",
        `Attainment — ${report.course_id}`);
    root.appendChild(heading);

    const sliderRow = el("div", "threshold-row");
    const label = el("label", "threshold-label", "Threshold ");
    const value = el("span", "threshold-value", String(report.threshold));
    const slider = el("input") as HTMLInputElement;
    slider.type = "range";
    slider.min = "0.05";
    slider.max = "0.95";
    slider.step = "0.05";
    slider.value = String(report.threshold);
    slider.className = "threshold-slider";
    slider.addEventListener("change", () => {
        handlers.onThresholdChange(Number(slider.value));
    });
    label.appendChild(slider);
    sliderRow.appendChild(label);
    sliderRow.appendChild(value);
    root.appendChild(sliderRow);

    const cohort = el("table", "cohort-table");
    const head = el("tr");
    for (const h of ["Outcome", "Mean", "Fraction ≥ threshold", ""]) {
        head.appendChild(el("th", undefined, h));
    }
    cohort.appendChild(head);
    for (const co of Object.keys(report.cohort)) {
        const stats = report.cohort[co];
        const row = el("tr", "cohort-row");
        row.dataset.co = co;
        row.appendChild(el("td", "co-id", co));
        row.appendChild(el("td", "co-mean", String(stats.mean)));
        row.appendChild(el("td", "co-fraction",
            String(stats.fraction_above_threshold)));
        const barCell = el("td", "co-bar");
        barCell.appendChild(bar(stats.mean));
        row.appendChild(barCell);
        cohort.appendChild(row);
    }
    root.appendChild(cohort);

    const poHeading = el("h3", undefined, "Program outcomes");
    root.appendChild(poHeading);
    const poList = el("ul", "po-list");
    for (const po of Object.keys(report.po_rollup)) {
        const item = el("li", "po-row");
        item.dataset.po = po;
        item.appendChild(el("span", "po-id", po));
        item.appendChild(el("span", "po-value", String(report.po_rollup[po])));
        item.appendChild(bar(report.po_rollup[po]));
        poList.appendChild(item);
    }
    root.appendChild(poList);

    const studentHeading = el("h3", undefined, "Per student");
    root.appendChild(studentHeading);
    const cos = Object.keys(report.cohort);
    const table = el("table", "student-table");
    const studentHead = el("tr");
    studentHead.appendChild(el("th", undefined, "Student"));
    for (const co of cos) studentHead.appendChild(el("th", undefined, co));
    table.appendChild(studentHead);
    for (const sid of Object.keys(report.per_student)) {
        const row = el("tr", "student-row");
        row.dataset.student = sid;
        row.appendChild(el("td", "student-id", sid));
        for (const co of cos) {
            row.appendChild(el("td", "student-co",
                String(report.per_student[sid][co])));
        }
        table.appendChild(row);
    }
    root.appendChild(table);
}
