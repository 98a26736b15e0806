"""Operator CLI: run the service, seed fixtures, and exercise the scenario.

`serve`, `seed`, and `simulate-scenario` work against the local store;
`import`, `report`, and `audit` are thin HTTP clients for a running gateway.

Exit codes: 0 ok, 1 assertion/divergence, 2 usage, 3 I/O.
"""

from __future__ import annotations

import errno
import json
import sys
from importlib import resources

import click
import httpx

from .config import Config, load_config
from .errors import ImobeError, ValidationFailure
from .protocol import canonical_trace
from .runtime import ROLE_ACADEMICIAN
from .system import System

EXIT_OK = 0
EXIT_DIVERGENCE = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _load(config_path, **overrides) -> Config:
    try:
        return load_config(config_path, overrides)
    except ValidationFailure as e:
        click.echo(f"config error: {e.reason}", err=True)
        sys.exit(EXIT_USAGE)
    except OSError as e:
        click.echo(f"cannot read config: {e}", err=True)
        sys.exit(EXIT_IO)


def _demo_fixture() -> dict:
    with resources.files("imobe.fixtures").joinpath("demo.json").open("r") as f:
        return json.load(f)


def _demo_scores() -> str:
    return resources.files("imobe.fixtures").joinpath("demo_scores.csv").read_text()


@click.group()
def main():
    """Outcome-attainment agent platform."""


_config_option = click.option("--config", "-c", "config_path", default=None,
                              type=click.Path(exists=True), help="key=value config file")


@main.command()
@_config_option
@click.option("--store-path", default=None)
@click.option("--listen-address", default=None)
def serve(config_path, store_path, listen_address):
    """Run the HTTP gateway and agent runtime until signaled."""
    import uvicorn

    from .gateway import create_app

    config = _load(config_path, store_path=store_path, listen_address=listen_address)
    try:
        system = System(config, deterministic=False)
    except OSError as e:
        click.echo(f"cannot open store: {e}", err=True)
        sys.exit(EXIT_IO)
    host, _, port = config.listen_address.partition(":")
    try:
        uvicorn.run(create_app(system), host=host or "127.0.0.1",
                    port=int(port or 8000), log_level="info")
    except OSError as e:
        if e.errno == errno.EADDRINUSE:
            click.echo(f"bind failure: {config.listen_address} in use", err=True)
        else:
            click.echo(f"bind failure: {e}", err=True)
        sys.exit(EXIT_IO)


@main.command()
@_config_option
@click.option("--store-path", default=None)
@click.argument("fixture_file", required=False, type=click.Path(exists=True))
def seed(config_path, store_path, fixture_file):
    """Load hierarchy + items + users from FIXTURE_FILE (default: bundled demo)."""
    config = _load(config_path, store_path=store_path)
    if fixture_file:
        try:
            with open(fixture_file, "r", encoding="utf-8") as f:
                fixture = json.load(f)
        except OSError as e:
            click.echo(f"cannot read fixture: {e}", err=True)
            sys.exit(EXIT_IO)
        except ValueError as e:
            click.echo(f"fixture is not valid JSON: {e}", err=True)
            sys.exit(EXIT_DIVERGENCE)
    else:
        fixture = _demo_fixture()
    system = System(config, deterministic=True)
    try:
        counts = system.seed(fixture)
    except ImobeError as e:
        click.echo(f"seed failed: {e.reason}", err=True)
        sys.exit(EXIT_DIVERGENCE)
    click.echo(json.dumps(counts, sort_keys=True))


@main.command("simulate-scenario")
@_config_option
@click.option("--store-path", default=None)
def simulate_scenario(config_path, store_path):
    """Run one assessment request deterministically and check the trace."""
    config = _load(config_path, store_path=store_path)
    system = System(config, deterministic=True)

    fixture = _demo_fixture()
    if system.store.get(f"outcome/{fixture['hierarchy'][0]['id']}") is None:
        system.seed(fixture)
    academician = next(u for u in fixture["users"]
                       if ROLE_ACADEMICIAN in u.get("roles", []))
    session = system.login(academician["principal"], academician["secret"])
    if not any(k.startswith("score/") for k in system.store._index):
        system.import_scores_csv(session.credentials, _demo_scores())

    course_id = fixture["items"][0]["course_id"]
    corr = None
    failure = None
    try:
        corr, _payload = system.submit_assessment(
            session, course_id, {"type": "CourseReport"})
    except ImobeError as e:
        failure = e
        corr = getattr(e, "correlation_id", None)

    steps = system.trace_steps(corr) if corr else []
    for sender, to, kind in steps:
        click.echo(f"{sender} -> {to} : {kind.value}")

    expected = canonical_trace()
    if failure is not None:
        click.echo(f"scenario failed: {failure.code}: {failure.reason}", err=True)
        for i, exp in enumerate(expected):
            got = steps[i] if i < len(steps) else None
            if got != exp:
                click.echo(f"divergence at step {i + 1}: expected "
                           f"{exp[0]} -> {exp[1]} : {exp[2].value}", err=True)
                break
        sys.exit(EXIT_DIVERGENCE)
    if steps != expected:
        for i in range(max(len(steps), len(expected))):
            exp = expected[i] if i < len(expected) else None
            got = steps[i] if i < len(steps) else None
            if exp != got:
                click.echo(f"divergence at step {i + 1}: expected {exp}, got {got}",
                           err=True)
                break
        sys.exit(EXIT_DIVERGENCE)
    click.echo("trace conforms (8 steps)")
    sys.exit(EXIT_OK)


def _client_login(url: str, principal: str, secret: str) -> tuple[httpx.Client, str]:
    client = httpx.Client(base_url=url, timeout=30.0)
    r = client.post("/api/v1/login", json={"principal": principal, "secret": secret})
    if r.status_code != 200:
        click.echo(f"login failed ({r.status_code}): {r.text}", err=True)
        sys.exit(EXIT_DIVERGENCE)
    return client, r.json()["token"]


_client_options = [
    click.option("--url", default="http://127.0.0.1:8000", show_default=True),
    click.option("--principal", required=True),
    click.option("--secret", required=True),
]


def _with_client_options(f):
    for opt in reversed(_client_options):
        f = opt(f)
    return f


@main.command("import")
@_with_client_options
@click.argument("csv_file", type=click.Path(exists=True))
def import_scores(url, principal, secret, csv_file):
    """Upload a score CSV (course_id,item_id,student_id,raw_score) to the gateway."""
    try:
        with open(csv_file, "r", encoding="utf-8") as f:
            body = f.read()
    except OSError as e:
        click.echo(f"cannot read CSV: {e}", err=True)
        sys.exit(EXIT_IO)
    client, token = _client_login(url, principal, secret)
    r = client.post("/api/v1/scores", content=body,
                    headers={"Authorization": f"Bearer {token}",
                             "Content-Type": "text/csv"})
    click.echo(json.dumps(r.json(), sort_keys=True))
    sys.exit(EXIT_OK if r.status_code == 200 else EXIT_DIVERGENCE)


@main.command()
@_with_client_options
@click.argument("course_id")
@click.option("--threshold", type=float, default=None)
@click.option("--pretty", is_flag=True, default=False)
def report(url, principal, secret, course_id, threshold, pretty):
    """Fetch the attainment report for COURSE_ID."""
    client, token = _client_login(url, principal, secret)
    params = {"threshold": threshold} if threshold is not None else {}
    r = client.get(f"/api/v1/courses/{course_id}/attainment", params=params,
                   headers={"Authorization": f"Bearer {token}"})
    if r.status_code != 200:
        click.echo(json.dumps(r.json(), sort_keys=True), err=True)
        sys.exit(EXIT_DIVERGENCE)
    body = r.json()
    if not pretty:
        click.echo(json.dumps(body, sort_keys=True))
        sys.exit(EXIT_OK)
    click.echo(f"course {body['course_id']}  threshold {body['threshold']}")
    click.echo(f"{'outcome':<12}{'mean':>8}{'>=thr':>8}")
    for co, stats in sorted(body["cohort"].items()):
        click.echo(f"{co:<12}{stats['mean']:>8.3f}{stats['fraction_above_threshold']:>8.3f}")
    for po, value in sorted(body["po_rollup"].items()):
        click.echo(f"{po:<12}{value:>8.3f}")
    sys.exit(EXIT_OK)


@main.command()
@_with_client_options
@click.option("--action", default=None, help="filter by audit action")
def audit(url, principal, secret, action):
    """Dump the audit trail (Administrator role required)."""
    client, token = _client_login(url, principal, secret)
    params = {"action": action} if action else {}
    r = client.get("/api/v1/admin/audit", params=params,
                   headers={"Authorization": f"Bearer {token}"})
    click.echo(json.dumps(r.json(), sort_keys=True))
    sys.exit(EXIT_OK if r.status_code == 200 else EXIT_DIVERGENCE)


if __name__ == "__main__":
    main()
