import { ApiFailure, AuditFeed, GatewayClient, Session } from "../api.js";

export const AUDIT_POLL_MS = 2000;

function cell(text: string): HTMLTableCellElement {
    const td = document.createElement("td");
    td.textContent = text;
    return td;
}

function renderFeed(container: HTMLElement, feed: AuditFeed): void {
    container.innerHTML = "";
    const flagged = new Set(feed.flags.map((f) => f.principal));

    if (feed.flags.length > 0) {
        const strip = document.createElement("div");
        strip.className = "flag-strip";
        strip.textContent = feed.flags
            .map((f) => `⚠ ${f.principal}: ${f.count} failures in ${f.window_s}s`)
            .join("  ");
        container.appendChild(strip);
    }

    const table = document.createElement("table");
    table.className = "audit-table";
    const head = document.createElement("tr");
    for (const h of ["#", "Action", "Principal", "Subject"]) {
        const th = document.createElement("th");
        th.textContent = h;
        head.appendChild(th);
    }
    table.appendChild(head);
    for (const event of feed.events.slice().reverse()) {
        const row = document.createElement("tr");
        row.className = flagged.has(event.principal)
            ? "audit-row flagged"
            : "audit-row";
        row.appendChild(cell(String(event.event_id)));
        row.appendChild(cell(event.action));
        row.appendChild(cell(event.principal));
        row.appendChild(cell(event.subject));
        table.appendChild(row);
    }
    container.appendChild(table);
}

export function renderAccessDenied(root: HTMLElement): void {
    root.innerHTML = "";
    const notice = document.createElement("div");
    notice.className = "access-denied";
    notice.textContent = "Administrator role required.";
    root.appendChild(notice);
}

/** Account form + audit table polling the gateway every AUDIT_POLL_MS. */
export function renderAdminPanel(
    root: HTMLElement,
    session: Session,
    client: GatewayClient,
): () => void {
    if (!session.roles.includes("Administrator")) {
        renderAccessDenied(root);
        return () => {};
    }
    root.innerHTML = "";

    const form = document.createElement("form");
    form.className = "account-form";
    const principal = document.createElement("input");
    principal.name = "principal";
    principal.placeholder = "principal";
    const secret = document.createElement("input");
    secret.name = "secret";
    secret.type = "password";
    secret.placeholder = "secret";
    const role = document.createElement("select");
    role.name = "role";
    for (const r of ["Student", "Academician", "Administrator"]) {
        const option = document.createElement("option");
        option.value = r;
        option.textContent = r;
        role.appendChild(option);
    }
    const submit = document.createElement("button");
    submit.type = "submit";
    submit.textContent = "Create account";
    const formStatus = document.createElement("span");
    formStatus.className = "form-status";
    form.append(principal, secret, role, submit, formStatus);
    form.addEventListener("submit", async (ev) => {
        ev.preventDefault();
        try {
            await client.manageUser("Create", principal.value, [role.value],
                secret.value);
            formStatus.textContent = `created ${principal.value}`;
        } catch (err) {
            formStatus.textContent =
                err instanceof ApiFailure ? err.reason : "create failed";
        }
    });
    root.appendChild(form);

    const feedBox = document.createElement("div");
    feedBox.className = "audit-feed";
    root.appendChild(feedBox);

    const poll = async () => {
        try {
            renderFeed(feedBox, await client.auditFeed());
        } catch {
            // transient poll failure: keep the last rendered feed
        }
    };
    void poll();
    const timer = setInterval(poll, AUDIT_POLL_MS);
    return () => clearInterval(timer);
}
