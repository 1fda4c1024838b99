"""The ``artts`` command line: lint stations, run batches, compute coverage,
serve the bus/HMI, render reports.

Exit codes are a stable contract: 0 success/pass, 1 domain failure (test,
coverage or lint), 2 usage error, 3 environment error (I/O, load, bind).
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
from dataclasses import dataclass
from pathlib import Path

from .bus import BusServer
from .chaindsl import lint_program, parse_rung_program, parse_state_program
from .diagnostics import SourceError
from .engine import LoadError, load
from .points import Chain
from .runner import TestResult, render_report, run_batch, track_defects, write_batch
from .runner import DefectStore
from .station import StationError, load_station
from .traceability import (
    Level,
    TraceabilityError,
    build_matrix,
    coverage,
    load_links,
    load_requirements,
    load_suite,
    render_coverage,
    unit_statuses,
)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2
EXIT_ENV = 3


@dataclass(frozen=True)
class CliAction:
    verb: str
    options: argparse.Namespace


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artts",
        description="automated test platform for simulated dual-channel PLC safety interlocks",
    )
    parser.add_argument("--workspace", default=".", help="root all paths resolve against")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_parser(name: str, help_text: str) -> argparse.ArgumentParser:
        verb = sub.add_parser(name, help=help_text)
        # accepted on either side of the verb
        verb.add_argument("--workspace", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
        return verb

    lint = add_parser("lint", "parse and lint a station's chain programs")
    lint.add_argument("--station", required=True, help="station directory")

    run = add_parser("run", "execute a batch of test cases")
    run.add_argument("--suite", required=True, help="suite.json path")
    run.add_argument("--station", help="override every build's station directory")
    run.add_argument("--out", default="results", help="directory for results and report")
    run.add_argument("--select", nargs="*", help="build/run/case ids (default: whole suite)")
    run.add_argument("--batch-id", help="batch id (default: derived from the selection)")
    run.add_argument("--seed", type=int, default=0, help="recorded in the report")
    run.add_argument("--defects", help="defect store path (default: <workspace>/defects.jsonl)")

    cov = add_parser("coverage", "measure requirement coverage")
    cov.add_argument("--level", required=True, choices=["high", "intermediate", "detail"])
    cov.add_argument("--requirements", required=True)
    cov.add_argument("--links", required=True)
    cov.add_argument("--suite", required=True)
    cov.add_argument("--results", help="results .jsonl for pass-aware coverage")
    cov.add_argument("--out", help="also write the report (text + record) to this file")

    serve = add_parser("serve", "serve a station over the register bus")
    serve.add_argument("--station", required=True)
    serve.add_argument("--listen", default="127.0.0.1:7502", help="TCP bus address")
    serve.add_argument("--bridge", default="127.0.0.1:7503", help="browser bridge address")
    serve.add_argument("--mode", choices=["stepped", "realtime"], default="stepped")
    serve.add_argument("--hmi-dir", help="static HMI assets to serve from the bridge")
    serve.add_argument("--seed", type=int, default=0)

    report = add_parser("report", "render a results file")
    report.add_argument("--results", required=True, help="results .jsonl path")
    report.add_argument("--format", choices=["text", "records"], default="text")
    return parser


def parse_args(argv: list[str]) -> CliAction:
    """Parse argv into an action; argparse exits with code 2 on usage errors."""
    options = _build_parser().parse_args(argv)
    return CliAction(options.verb, options)


def dispatch(action: CliAction) -> int:
    handler = {
        "lint": _cmd_lint,
        "run": _cmd_run,
        "coverage": _cmd_coverage,
        "serve": _cmd_serve,
        "report": _cmd_report,
    }[action.verb]
    try:
        return handler(action.options)
    except (StationError, TraceabilityError, LoadError, OSError) as err:
        print(f"artts: {err}", file=sys.stderr)
        return EXIT_ENV


def _workspace(options) -> Path:
    return Path(options.workspace)


def _cmd_lint(options) -> int:
    station = load_station(_workspace(options) / options.station)
    failed = False
    for label, source, parse, chain in (
        ("chain A", station.chain_a_source, parse_state_program, Chain.A),
        ("chain B", station.chain_b_source, parse_rung_program, Chain.B),
    ):
        try:
            program = parse(source)
        except SourceError as err:
            failed = True
            for diag in err.diagnostics:
                print(f"{label}: {diag}")
            continue
        for diag in lint_program(program, station.program_points(chain)):
            print(f"{label}: {diag}")
    if failed:
        return EXIT_DOMAIN
    print(f"{station.name}: both chain programs parse clean")
    return EXIT_OK


def _cmd_run(options) -> int:
    workspace = _workspace(options)
    suite_path = workspace / options.suite
    tree = load_suite(suite_path)
    if options.station:
        import dataclasses

        tree = dataclasses.replace(
            tree,
            builds=tuple(
                dataclasses.replace(b, station=options.station) for b in tree.builds
            ),
        )
    batch = run_batch(
        tree,
        suite_path.parent,
        options.select,
        workspace=workspace,
        batch_id=options.batch_id,
        seed=options.seed,
    )
    write_batch(batch, workspace / options.out)
    defects_path = Path(options.defects) if options.defects else workspace / "defects.jsonl"
    store = DefectStore(defects_path)
    for result in batch.results:
        track_defects(result, store, batch.batch_id)
    print(render_report(batch, "text"), end="")
    return EXIT_OK if batch.all_passed else EXIT_DOMAIN


def _cmd_coverage(options) -> int:
    workspace = _workspace(options)
    reqs = load_requirements(workspace / options.requirements)
    links = load_links(workspace / options.links)
    tree = load_suite(workspace / options.suite)
    matrices = build_matrix(reqs, tree, links)
    statuses = None
    if options.results:
        verdicts = {}
        for line in (workspace / options.results).read_text(encoding="utf-8").splitlines():
            if line.strip():
                doc = json.loads(line)
                verdicts[doc["case"]] = doc["verdict"]
        statuses = unit_statuses(tree, verdicts)
    level = Level(options.level.capitalize())
    report = coverage(matrices[level], reqs, statuses)
    rendered = render_coverage(report)
    print(rendered, end="")
    if options.out:
        out_path = workspace / options.out
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(
            rendered + json.dumps(report.to_record(), sort_keys=True) + "\n", encoding="utf-8"
        )
    return EXIT_OK if report.covered == report.total else EXIT_DOMAIN


def _cmd_serve(options) -> int:
    workspace = _workspace(options)
    station = load_station(workspace / options.station)
    engine = load(station, rng_seed=options.seed)
    try:
        server = BusServer(
            engine,
            _address(options.listen),
            _address(options.bridge) if options.bridge else None,
            mode=options.mode,
            hmi_dir=(workspace / options.hmi_dir) if options.hmi_dir else None,
        )
        server.start()
    except OSError as err:
        print(f"artts: cannot bind: {err}", file=sys.stderr)
        return EXIT_ENV
    print(
        f"serving {station.name}: bus on {options.listen}, bridge on {options.bridge}, "
        f"mode {server.mode}",
        flush=True,
    )
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def _cmd_report(options) -> int:
    workspace = _workspace(options)
    path = workspace / options.results
    results = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        results.append(
            TestResult(
                case_id=doc["case"],
                title=doc.get("title", ""),
                verdict=doc["verdict"],
                started_at=doc["started_at"],
                sim_duration_ms=doc["sim_duration_ms"],
                covers=tuple(doc.get("covers", ())),
                failed_step=doc.get("failed_step"),
                message=doc.get("message"),
            )
        )
    from .runner import BatchReport

    batch = BatchReport(path.stem, (), tuple(results), wall_elapsed_ms=0)
    print(render_report(batch, options.format), end="")
    return EXIT_OK


def _address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return (host or "127.0.0.1", int(port))


def main(argv: list[str] | None = None) -> int:
    action = parse_args(sys.argv[1:] if argv is None else argv)
    return dispatch(action)


if __name__ == "__main__":
    sys.exit(main())
