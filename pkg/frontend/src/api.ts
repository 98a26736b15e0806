const API_BASE = "/api/v1";

export interface Session {
    token: string;
    session_id: string;
    principal: string;
    roles: string[];
}

export interface CohortStats {
    mean: number;
    fraction_above_threshold: number;
}

export interface AttainmentReport {
    course_id: string;
    threshold: number;
    per_student: Record<string, Record<string, number>>;
    cohort: Record<string, CohortStats>;
    po_rollup: Record<string, number>;
}

export interface ImportResult {
    accepted: number;
    rejected: { line: number; reason: string; detail: string }[];
}

export interface AuditEvent {
    event_id: number;
    ts: number;
    principal: string;
    action: string;
    subject: string;
    detail: Record<string, unknown>;
}

export interface AnomalyFlag {
    principal: string;
    ts: number;
    count: number;
    window_s: number;
}

export interface AuditFeed {
    events: AuditEvent[];
    flags: AnomalyFlag[];
}

/** A 4xx/5xx from the gateway: {code, reason, correlation_id?}. */
export class ApiFailure extends Error {
    constructor(
        public status: number,
        public code: string,
        public reason: string,
        public correlationId?: string,
    ) {
        super(`${code}: ${reason}`);
    }
}

/** The gateway could not be reached at all (network failure). */
export class GatewayOffline extends Error {
    constructor() {
        super("gateway unreachable");
    }
}

async function parseOrThrow<T>(promise: Promise<Response>): Promise<T> {
    let response: Response;
    try {
        response = await promise;
    } catch {
        throw new GatewayOffline();
    }
    if (!response.ok) {
        const body = await response.json().catch(() => ({}));
        throw new ApiFailure(
            response.status,
            body.code ?? "Unknown",
            body.reason ?? response.statusText,
            body.correlation_id,
        );
    }
    return (await response.json()) as T;
}

export class GatewayClient {
    private token: string | null = null;

    constructor(private base: string = API_BASE) {}

    private headers(extra: Record<string, string> = {}): Record<string, string> {
        const h: Record<string, string> = { ...extra };
        if (this.token) h["Authorization"] = `Bearer ${this.token}`;
        return h;
    }

    async login(principal: string, secret: string): Promise<Session> {
        const session = await parseOrThrow<Session>(
            fetch(`${this.base}/login`, {
                method: "POST",
                headers: { "Content-Type": "application/json" },
                body: JSON.stringify({ principal, secret }),
            }),
        );
        this.token = session.token;
        return session;
    }

    logout(): void {
        this.token = null;
    }

    async assess(
        courseId: string,
        scope: { type: string; student_id?: string },
        threshold?: number,
    ): Promise<AttainmentReport> {
        const body: Record<string, unknown> = { course_id: courseId, scope };
        if (threshold !== undefined) body.threshold = threshold;
        return parseOrThrow<AttainmentReport>(
            fetch(`${this.base}/assess`, {
                method: "POST",
                headers: this.headers({ "Content-Type": "application/json" }),
                body: JSON.stringify(body),
            }),
        );
    }

    async importScores(csv: string): Promise<ImportResult> {
        return parseOrThrow<ImportResult>(
            fetch(`${this.base}/scores`, {
                method: "POST",
                headers: this.headers({ "Content-Type": "text/csv" }),
                body: csv,
            }),
        );
    }

    async auditFeed(action?: string): Promise<AuditFeed> {
        const query = action ? `?action=${encodeURIComponent(action)}` : "";
        return parseOrThrow<AuditFeed>(
            fetch(`${this.base}/admin/audit${query}`, { headers: this.headers() }),
        );
    }

    async manageUser(op: string, principal: string, roles?: string[], secret?: string) {
        const body: Record<string, unknown> = { op, principal };
        if (roles) body.roles = roles;
        if (secret) body.secret = secret;
        return parseOrThrow<Record<string, unknown>>(
            fetch(`${this.base}/admin/users`, {
                method: "POST",
                headers: this.headers({ "Content-Type": "application/json" }),
                body: JSON.stringify(body),
            }),
        );
    }
}
