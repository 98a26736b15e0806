import { ApiFailure, GatewayClient, Session } from "./api.js";
import { renderAdminPanel } from "./views/admin.js";
import { renderDashboard } from "./views/dashboard.js";
import { renderLogin } from "./views/login.js";
import { MarkGrid, renderMarkGrid } from "./views/marks.js";

const DEFAULT_COURSE = "C101";

export class App {
    session: Session | null = null;
    private stopPolling: () => void = () => {};

    constructor(
        private root: HTMLElement,
        private client: GatewayClient = new GatewayClient(),
    ) {}

    start(): void {
        renderLogin(this.root, this.client, (session) => {
            this.session = session;
            void this.home();
        });
    }

    /** The landing view for the logged-in role (D10: students see only their own results). */
    async home(courseId: string = DEFAULT_COURSE): Promise<void> {
        const session = this.session;
        if (!session) return this.start();
        this.stopPolling();
        if (session.roles.includes("Administrator")) {
            this.stopPolling = renderAdminPanel(this.root, session, this.client);
            return;
        }
        const scope = session.roles.includes("Student")
            ? { type: "StudentResult", student_id: session.principal }
            : { type: "CourseReport" };
        await this.showDashboard(courseId, scope);
    }

    async showDashboard(
        courseId: string,
        scope: { type: string; student_id?: string },
        threshold?: number,
    ): Promise<void> {
        try {
            const report = await this.client.assess(courseId, scope, threshold);
            renderDashboard(this.root, report, {
                onThresholdChange: (t) =>
                    void this.showDashboard(courseId, scope, t),
            });
        } catch (err) {
            this.root.innerHTML = "";
            const notice = document.createElement("div");
            notice.className = "error-notice";
            notice.textContent =
                err instanceof ApiFailure ? err.reason : "request failed";
            this.root.appendChild(notice);
        }
    }

    showMarkEntry(grid: MarkGrid): void {
        this.stopPolling();
        renderMarkGrid(this.root, grid, this.client);
    }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
    new App(document.getElementById("app")!).start();
}
