import { ApiFailure, GatewayClient, GatewayOffline, Session } from "../api.js";

export function renderLogin(
    root: HTMLElement,
    client: GatewayClient,
    onLogin: (session: Session) => void,
): void {
    root.innerHTML = "";
    const form = document.createElement("form");
    form.className = "login-form";
    const principal = document.createElement("input");
    principal.name = "principal";
    principal.placeholder = "principal";
    const secret = document.createElement("input");
    secret.name = "secret";
    secret.type = "password";
    secret.placeholder = "secret";
    const submit = document.createElement("button");
    submit.type = "submit";
    submit.textContent = "Sign in";
    const status = document.createElement("div");
    status.className = "login-status";
    form.append(principal, secret, submit, status);

    form.addEventListener("submit", async (ev) => {
        ev.preventDefault();
        try {
            onLogin(await client.login(principal.value, secret.value));
        } catch (err) {
            if (err instanceof GatewayOffline) {
                status.textContent = "Gateway unreachable.";
            } else if (err instanceof ApiFailure) {
                status.textContent = err.reason;
            } else {
                throw err;
            }
        }
    });
    root.appendChild(form);
}
