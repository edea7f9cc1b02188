"""Command line entry points.

`bench run`, `bench scenario`, and `oracle check` run in-process: the CLI
process owns the engine and the oracle runs after the workload completes.
`serve` hosts the HTTP service; the `client` group is a thin httpx wrapper
around a running server for ad-hoc poking.

Exit codes: 0 pass, 1 a verification or scenario check failed, 2 usage or
config error.
"""

from __future__ import annotations

import json as jsonlib
import sys
from typing import Optional, Tuple

import click

from .bench import parse_config, run_workload
from .errors import ConfigError, EngineError, MalformedHistory, TooLarge, UnknownScenario
from .oracle import (
    check_csr,
    check_mvsr_bruteforce,
    check_witness,
    parse_trace,
    replay_writer_digest,
)
from .scenarios import run_scenario, scenario_names

VERIFY_FAIL = 1
USAGE_ERROR = 2


@click.group()
def main() -> None:
    """Transactional KV engine: benchmarks, scenarios, oracle, service."""


# ---------------------------------------------------------------------------
# bench


@main.group()
def bench() -> None:
    """Workload driver and scripted scenarios."""


@bench.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="line-oriented key=value workload file")
@click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
              help="override a config key (repeatable)")
@click.option("--verify", is_flag=True, help="feed the trace to the oracle afterwards")
@click.option("--log-dir", type=click.Path(file_okay=False), default=None,
              help="enable durability, writing the log here")
@click.option("--json", "as_json", is_flag=True, help="emit the report as JSON")
def bench_run(config_path: Optional[str], sets: Tuple[str, ...], verify: bool,
              log_dir: Optional[str], as_json: bool) -> None:
    """Run a mixed short/long workload and report metrics."""
    overrides = {}
    for item in sets:
        if "=" not in item:
            click.echo(f"--set expects KEY=VALUE, got {item!r}", err=True)
            sys.exit(USAGE_ERROR)
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if log_dir is not None:
        overrides["log_dir"] = log_dir

    text = ""
    if config_path is not None:
        with open(config_path, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        cfg = parse_config(text, overrides)
        report = run_workload(cfg, verify=verify)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(USAGE_ERROR)

    out = report.to_dict()
    if as_json:
        click.echo(jsonlib.dumps(out, indent=2, sort_keys=True))
    else:
        for key, value in out.items():
            click.echo(f"{key}: {value}")

    if verify and not (report.witness_ok and report.replay_digest_match):
        click.echo("verification FAILED", err=True)
        sys.exit(VERIFY_FAIL)


@bench.command("scenario")
@click.argument("name", required=False)
@click.option("--list", "list_names", is_flag=True, help="list scenario names")
@click.option("--json", "as_json", is_flag=True, help="emit the result as JSON")
@click.option("--trace", "show_trace", is_flag=True, help="dump the history trace")
def bench_scenario(name: Optional[str], list_names: bool, as_json: bool,
                   show_trace: bool) -> None:
    """Run one hand-scripted deterministic interleaving."""
    if list_names:
        for n in scenario_names():
            click.echo(n)
        return
    if name is None:
        click.echo("missing scenario name (try --list)", err=True)
        sys.exit(USAGE_ERROR)
    try:
        result = run_scenario(name)
    except UnknownScenario as exc:
        click.echo(str(exc), err=True)
        sys.exit(USAGE_ERROR)

    if as_json:
        click.echo(jsonlib.dumps({
            "name": result.name,
            "passed": result.passed,
            "checks": [{"label": c.label, "ok": c.ok, "detail": c.detail}
                       for c in result.checks],
        }, indent=2))
    else:
        click.echo(result.report())
    if show_trace:
        click.echo(result.trace, nl=False)
    if not result.passed:
        sys.exit(VERIFY_FAIL)


# ---------------------------------------------------------------------------
# oracle


@main.group()
def oracle() -> None:
    """Offline history checkers."""


@oracle.command("check")
@click.argument("trace_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--mvsr-limit", default=8, show_default=True,
              help="max committed txs for the brute-force serializability scan")
def oracle_check(trace_file: str, mvsr_limit: int) -> None:
    """Check a trace file: witness, conflict graph, view-serializability."""
    with open(trace_file, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        events = parse_trace(text)
    except MalformedHistory as exc:
        click.echo(f"malformed history: {exc}", err=True)
        sys.exit(USAGE_ERROR)

    failed = False
    w = check_witness(events)
    click.echo(f"witness: {'Pass' if w.ok else 'Violation'} "
               f"({w.reads_checked} reads checked)")
    for v in w.violations[:20]:
        click.echo(f"  {v}")
    failed |= not w.ok

    csr = check_csr(events)
    click.echo(f"csr: {'Acyclic' if csr.acyclic else 'Cyclic'} ({csr.edges} edges)"
               + ("" if csr.acyclic else f", cycle {csr.cycle}"))
    # cyclic is informational: the engine accepts some non-CSR schedules

    try:
        mv = check_mvsr_bruteforce(events, limit=mvsr_limit)
        click.echo(f"mvsr: {'Pass' if mv.ok else 'Fail'} "
                   f"({mv.considered} orders considered)")
        failed |= not mv.ok
    except TooLarge:
        click.echo(f"mvsr: skipped (> {mvsr_limit} committed transactions)")

    click.echo(f"replay writer digest: {replay_writer_digest(events)}")
    if failed:
        sys.exit(VERIFY_FAIL)


# ---------------------------------------------------------------------------
# service


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--epoch-period-ms", default=40, show_default=True,
              help="0 = manual epochs via POST /epoch/advance")
@click.option("--log-dir", type=click.Path(file_okay=False), default=None)
def serve(host: str, port: int, epoch_period_ms: int, log_dir: Optional[str]) -> None:
    """Host one engine behind the HTTP API."""
    import uvicorn

    from .api import EngineConfig
    from .service import create_app

    app = create_app(EngineConfig(epoch_period_ms=epoch_period_ms, log_dir=log_dir))
    uvicorn.run(app, host=host, port=port, log_level="warning")


# ---------------------------------------------------------------------------
# thin client


@main.group()
@click.option("--url", default="http://127.0.0.1:8000", show_default=True,
              envvar="EPOCHKV_URL")
@click.pass_context
def client(ctx: click.Context, url: str) -> None:
    """Talk to a running server."""
    ctx.obj = url.rstrip("/")


def _call(method: str, url: str, **kwargs):
    import httpx

    try:
        resp = httpx.request(method, url, timeout=30.0, **kwargs)
    except httpx.HTTPError as exc:
        click.echo(f"request failed: {exc}", err=True)
        sys.exit(USAGE_ERROR)
    body = resp.text
    try:
        body = jsonlib.dumps(resp.json(), indent=2)
    except ValueError:
        pass
    click.echo(body)
    if resp.status_code >= 400:
        sys.exit(VERIFY_FAIL)


@client.command("table")
@click.argument("name")
@click.pass_obj
def client_table(url: str, name: str) -> None:
    """Create a table."""
    _call("POST", f"{url}/tables", json={"name": name})


@client.command("begin")
@click.option("--mode", default="occ", show_default=True)
@click.option("--wp", "wp_tables", multiple=True, type=int,
              help="table id to reserve for writing (repeatable, ltx only)")
@click.option("--read-area", "read_area", multiple=True, type=int)
@click.pass_obj
def client_begin(url: str, mode: str, wp_tables, read_area) -> None:
    body = {"mode": mode, "wp_tables": list(wp_tables)}
    if read_area:
        body["read_area"] = list(read_area)
    _call("POST", f"{url}/txs", json=body)


@client.command("read")
@click.argument("tx", type=int)
@click.argument("table", type=int)
@click.argument("key")
@click.pass_obj
def client_read(url: str, tx: int, table: int, key: str) -> None:
    """Read KEY (utf-8) inside transaction TX."""
    _call("POST", f"{url}/txs/{tx}/read",
          json={"table": table, "key": key.encode().hex()})


@client.command("write")
@click.argument("tx", type=int)
@click.argument("table", type=int)
@click.argument("key")
@click.argument("value")
@click.pass_obj
def client_write(url: str, tx: int, table: int, key: str, value: str) -> None:
    _call("POST", f"{url}/txs/{tx}/write",
          json={"table": table, "key": key.encode().hex(),
                "value": value.encode().hex()})


@client.command("delete")
@click.argument("tx", type=int)
@click.argument("table", type=int)
@click.argument("key")
@click.pass_obj
def client_delete(url: str, tx: int, table: int, key: str) -> None:
    _call("POST", f"{url}/txs/{tx}/delete",
          json={"table": table, "key": key.encode().hex()})


@client.command("commit")
@click.argument("tx", type=int)
@click.pass_obj
def client_commit(url: str, tx: int) -> None:
    _call("POST", f"{url}/txs/{tx}/commit")


@client.command("poll")
@click.argument("tx", type=int)
@click.pass_obj
def client_poll(url: str, tx: int) -> None:
    _call("POST", f"{url}/txs/{tx}/poll")


@client.command("abort")
@click.argument("tx", type=int)
@click.pass_obj
def client_abort(url: str, tx: int) -> None:
    _call("POST", f"{url}/txs/{tx}/abort")


@client.command("epoch")
@click.option("--advance", is_flag=True)
@click.pass_obj
def client_epoch(url: str, advance: bool) -> None:
    if advance:
        _call("POST", f"{url}/epoch/advance")
    else:
        _call("GET", f"{url}/epoch")


@client.command("digest")
@click.pass_obj
def client_digest(url: str) -> None:
    _call("GET", f"{url}/digest")


@client.command("health")
@click.pass_obj
def client_health(url: str) -> None:
    _call("GET", f"{url}/health")


if __name__ == "__main__":  # pragma: no cover
    main()
