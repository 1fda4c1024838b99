"""Test-script language, case and batch execution, defects, reports.

A ``.tc`` file holds one black-box test case (grammar in docs/test-dsl.md)::

    case TC-SEC-001 "permit follows beam request"
    covers DR-1.3.2 DR-4.3.1
    set DOOR_CLOSED_1 1
    wait 50ms
    expect SHUTTER_PERMIT == 1 within 30ms
    expect state ACCESS == SECURED within 20ms
    expect fault A == DISCREPANCY within 80ms
    inject fault B WATCHDOG
    reset faults
    reset station

Every expectation window is simulated time, checked at scan boundaries
from the current one; a case runs on a fresh engine (reset implied), so
batches are order-independent.  Wall-clock timestamps are reporting
metadata only and are the one non-deterministic field in results files.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Union

from .diagnostics import Diagnostic, SourceError, error
from .engine import Engine, EngineError, FaultCode, load
from .points import Chain, is_point_name
from .station import StationError, load_station
from .traceability import TestUnitTree


# -- steps and cases -----------------------------------------------------------


@dataclass(frozen=True)
class SetStep:
    point: str
    value: int
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class WaitStep:
    duration_ms: int
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ExpectStep:
    point: str
    value: int
    within_ms: int
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ExpectFaultStep:
    chain: Chain
    code: FaultCode
    within_ms: int
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ExpectStateStep:
    task: str
    state: str
    within_ms: int
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class InjectFaultStep:
    chain: Chain
    code: FaultCode
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ResetFaultsStep:
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ResetStationStep:
    line: int = field(default=0, compare=False)


TestStep = Union[
    SetStep,
    WaitStep,
    ExpectStep,
    ExpectFaultStep,
    ExpectStateStep,
    InjectFaultStep,
    ResetFaultsStep,
    ResetStationStep,
]


@dataclass(frozen=True)
class TestCase:
    id: str
    title: str
    covers: tuple[str, ...]
    steps: tuple[TestStep, ...]


@dataclass(frozen=True)
class TestResult:
    case_id: str
    title: str
    verdict: str  # Pass | Fail | Error
    started_at: str  # RFC 3339 wall clock; reporting metadata only
    sim_duration_ms: int
    covers: tuple[str, ...] = ()
    failed_step: dict | None = None
    message: str | None = None

    def to_record(self) -> dict:
        return {
            "case": self.case_id,
            "title": self.title,
            "verdict": self.verdict,
            "started_at": self.started_at,
            "sim_duration_ms": self.sim_duration_ms,
            "covers": list(self.covers),
            "failed_step": self.failed_step,
            "message": self.message,
        }


@dataclass(frozen=True)
class BatchReport:
    batch_id: str
    selection: tuple[str, ...]
    results: tuple[TestResult, ...]
    wall_elapsed_ms: int
    seed: int = 0

    @property
    def totals(self) -> dict[str, int]:
        counts = {"pass": 0, "fail": 0, "error": 0}
        for r in self.results:
            counts[r.verdict.lower()] += 1
        return counts

    @property
    def sim_elapsed_ms(self) -> int:
        return sum(r.sim_duration_ms for r in self.results)

    @property
    def mean_sim_per_case_ms(self) -> float:
        if not self.results:
            return 0.0
        return self.sim_elapsed_ms / len(self.results)

    @property
    def all_passed(self) -> bool:
        totals = self.totals
        return totals["fail"] == 0 and totals["error"] == 0


# -- script parsing ---------------------------------------------------------------


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _parse_duration(token: str) -> int | None:
    if not token.endswith("ms"):
        return None
    try:
        return int(token[:-2])
    except ValueError:
        return None


def _parse_chain(token: str) -> Chain | None:
    return {"A": Chain.A, "B": Chain.B}.get(token)


def _parse_code(token: str) -> FaultCode | None:
    for code in FaultCode:
        if code.value == token:
            return code
    return None


def parse_test_script(text: str) -> TestCase:
    """Parse one ``.tc`` source; raises SourceError with line diagnostics."""
    diags: list[Diagnostic] = []
    case_id: str | None = None
    title = ""
    covers: list[str] = []
    steps: list[TestStep] = []

    for lineno, raw in enumerate(text.replace("\r\n", "\n").split("\n"), start=1):
        cut = raw.find("#")
        line = (raw if cut < 0 else raw[:cut]).strip()
        if not line:
            continue
        verb, _, rest = line.partition(" ")
        rest = rest.strip()
        if verb == "case":
            if case_id is not None:
                diags.append(error(lineno, "one case per file"))
                continue
            ident, _, quoted = rest.partition(" ")
            quoted = quoted.strip()
            if not ident:
                diags.append(error(lineno, "expected: case ID \"title\""))
                continue
            case_id = ident
            if quoted.startswith('"') and quoted.endswith('"') and len(quoted) >= 2:
                title = quoted[1:-1]
            elif quoted:
                diags.append(error(lineno, "case title must be double-quoted"))
        elif verb == "covers":
            ids = rest.split()
            if not ids:
                diags.append(error(lineno, "expected requirement ids after covers"))
            covers.extend(ids)
        elif verb == "set":
            parts = rest.split()
            if len(parts) != 2 or parts[1] not in ("0", "1") or not is_point_name(parts[0]):
                diags.append(error(lineno, "expected: set POINT 0|1"))
                continue
            steps.append(SetStep(parts[0], int(parts[1]), lineno))
        elif verb == "wait":
            ms = _parse_duration(rest)
            if ms is None:
                diags.append(error(lineno, "expected: wait <n>ms"))
                continue
            if ms <= 0:
                diags.append(error(lineno, "duration must be positive"))
                continue
            steps.append(WaitStep(ms, lineno))
        elif verb == "expect":
            step = _parse_expect(rest, lineno, diags)
            if step is not None:
                steps.append(step)
        elif verb == "inject":
            parts = rest.split()
            if len(parts) != 3 or parts[0] != "fault":
                diags.append(error(lineno, "expected: inject fault A|B CODE"))
                continue
            chain = _parse_chain(parts[1])
            code = _parse_code(parts[2])
            if chain is None or code is None or code is FaultCode.NO_FAULT:
                diags.append(error(lineno, "expected: inject fault A|B CODE"))
                continue
            steps.append(InjectFaultStep(chain, code, lineno))
        elif verb == "reset":
            if rest == "faults":
                steps.append(ResetFaultsStep(lineno))
            elif rest == "station":
                steps.append(ResetStationStep(lineno))
            else:
                diags.append(error(lineno, "expected: reset faults|station"))
        else:
            diags.append(error(lineno, f"unknown verb {verb!r}"))

    if case_id is None:
        diags.append(error(1, "missing case declaration"))
    if not steps and not diags:
        diags.append(error(1, "a case needs at least one step"))
    if diags:
        raise SourceError(diags)
    return TestCase(case_id, title, tuple(covers), tuple(steps))


def _parse_expect(rest: str, lineno: int, diags: list[Diagnostic]) -> TestStep | None:
    parts = rest.split()
    usage = (
        "expected: expect POINT == 0|1 within <n>ms | "
        "expect fault A|B == CODE within <n>ms | "
        "expect state TASK == STATE within <n>ms"
    )
    if len(parts) < 5:
        diags.append(error(lineno, usage))
        return None
    if parts[-2] != "within":
        diags.append(error(lineno, "missing 'within <n>ms' on expect"))
        return None
    within = _parse_duration(parts[-1])
    if within is None or within <= 0:
        diags.append(error(lineno, "expect window must be a positive duration"))
        return None
    body = parts[:-2]
    if body[0] == "fault":
        if len(body) != 4 or body[2] != "==":
            diags.append(error(lineno, usage))
            return None
        chain = _parse_chain(body[1])
        code = _parse_code(body[3])
        if chain is None or code is None:
            diags.append(error(lineno, usage))
            return None
        return ExpectFaultStep(chain, code, within, lineno)
    if body[0] == "state":
        if len(body) != 4 or body[2] != "==" or not is_point_name(body[1]) or not is_point_name(body[3]):
            diags.append(error(lineno, usage))
            return None
        return ExpectStateStep(body[1], body[3], within, lineno)
    if len(body) != 3 or body[1] != "==" or body[2] not in ("0", "1") or not is_point_name(body[0]):
        diags.append(error(lineno, usage))
        return None
    return ExpectStep(body[0], int(body[2]), within, lineno)


def load_test_script(path: str | Path) -> TestCase:
    return parse_test_script(Path(path).read_text(encoding="utf-8"))


# -- case execution -----------------------------------------------------------------


class _StepError(Exception):
    pass


class _StepFailure(Exception):
    def __init__(self, detail: dict):
        self.detail = detail
        super().__init__(str(detail))


def run_case(case: TestCase, engine: Engine, *, fresh: bool = True) -> TestResult:
    """Execute one case; the engine is reset first unless ``fresh=False``."""
    started = _now()
    if fresh:
        engine.reset()
    time_base = engine.time_ms
    try:
        for index, step in enumerate(case.steps):
            _run_step(step, index, engine)
    except _StepFailure as failure:
        return TestResult(
            case.id,
            case.title,
            "Fail",
            started,
            engine.time_ms - time_base,
            case.covers,
            failed_step=failure.detail,
        )
    except (_StepError, EngineError) as err:
        return TestResult(
            case.id,
            case.title,
            "Error",
            started,
            engine.time_ms - time_base,
            case.covers,
            message=str(err),
        )
    return TestResult(case.id, case.title, "Pass", started, engine.time_ms - time_base, case.covers)


def _check_window(ms: int, engine: Engine) -> None:
    if ms % engine.scan_period_ms != 0:
        raise _StepError(
            f"duration {ms} ms is not a multiple of the {engine.scan_period_ms} ms scan period"
        )


def _await(
    engine: Engine,
    within_ms: int,
    check: Callable[[], bool],
    actual: Callable[[], object],
    detail: dict,
) -> None:
    """Step until the condition holds at a scan boundary or the window ends."""
    _check_window(within_ms, engine)
    deadline = engine.time_ms + within_ms
    while True:
        if check():
            return
        if engine.time_ms >= deadline:
            detail["actual"] = actual()
            raise _StepFailure(detail)
        engine.step()


def _run_step(step: TestStep, index: int, engine: Engine) -> None:
    if isinstance(step, SetStep):
        engine.write_point(step.point, step.value)
    elif isinstance(step, WaitStep):
        _check_window(step.duration_ms, engine)
        engine.run_for(step.duration_ms)
    elif isinstance(step, ExpectStep):
        _await(
            engine,
            step.within_ms,
            lambda: engine.read_point(step.point) == step.value,
            lambda: engine.read_point(step.point),
            {"index": index, "line": step.line, "subject": step.point, "expected": step.value},
        )
    elif isinstance(step, ExpectFaultStep):
        register = lambda: engine.fault_register(step.chain).code  # noqa: E731
        _await(
            engine,
            step.within_ms,
            lambda: register() is step.code,
            lambda: register().value,
            {
                "index": index,
                "line": step.line,
                "subject": f"fault {step.chain.value}",
                "expected": step.code.value,
            },
        )
    elif isinstance(step, ExpectStateStep):
        def state() -> str:
            states = engine.task_states()
            if step.task not in states:
                raise _StepError(f"unknown task {step.task}")
            return states[step.task]

        _await(
            engine,
            step.within_ms,
            lambda: state() == step.state,
            state,
            {
                "index": index,
                "line": step.line,
                "subject": f"state {step.task}",
                "expected": step.state,
            },
        )
    elif isinstance(step, InjectFaultStep):
        engine.inject_fault(step.chain, step.code)
    elif isinstance(step, ResetFaultsStep):
        engine.reset_faults()
    elif isinstance(step, ResetStationStep):
        engine.reset()
    else:  # pragma: no cover
        raise _StepError(f"unhandled step {step!r}")


# -- batch execution ------------------------------------------------------------------


class SuiteError(Exception):
    pass


def resolve_selection(tree: TestUnitTree, selection: Iterable[str] | None) -> list[tuple[str, str]]:
    """Expand build/run/case ids into (case_id, build_id) pairs in tree order."""
    wanted = set(selection) if selection is not None else None
    if wanted is not None:
        known = set()
        for kind in ("builds", "runs"):
            known.update(u.id for u in getattr(tree, kind))
        known.update(tree.cases)
        unknown = wanted - known
        if unknown:
            raise SuiteError(f"selection references unknown units: {sorted(unknown)}")

    picked: list[tuple[str, str]] = []
    runs = {r.id: r for r in tree.runs}
    for build in tree.builds:
        for run_id in build.runs:
            for case_id in runs[run_id].cases:
                if wanted is None or {build.id, run_id, case_id} & wanted:
                    picked.append((case_id, build.id))
    return picked


def default_batch_id(tree: TestUnitTree, selection: Iterable[str] | None) -> str:
    """Stable id for a given suite and selection, so reruns overwrite."""
    text = tree.name + "::" + ",".join(sorted(selection or []))
    return "batch-" + hashlib.sha256(text.encode()).hexdigest()[:10]


def run_batch(
    tree: TestUnitTree,
    suite_dir: str | Path,
    selection: Iterable[str] | None = None,
    *,
    workspace: str | Path = ".",
    batch_id: str | None = None,
    seed: int = 0,
) -> BatchReport:
    """Execute the selected cases sequentially, one fresh engine per case."""
    suite_dir = Path(suite_dir)
    workspace = Path(workspace)
    selection = list(selection) if selection is not None else None
    picked = resolve_selection(tree, selection)
    batch = batch_id or default_batch_id(tree, selection)

    stations: dict[str, object] = {}
    station_errors: dict[str, str] = {}
    for build in tree.builds:
        try:
            stations[build.id] = load_station(workspace / build.station)
        except StationError as err:
            station_errors[build.id] = str(err)

    wall_start = time.monotonic()
    results: list[TestResult] = []
    for case_id, build_id in picked:
        if build_id in station_errors:
            results.append(
                TestResult(
                    case_id,
                    "",
                    "Error",
                    _now(),
                    0,
                    message=f"skipped: station load failed: {station_errors[build_id]}",
                )
            )
            continue
        path = suite_dir / tree.case_dir / f"{case_id}.tc"
        try:
            case = load_test_script(path)
        except (OSError, SourceError) as err:
            results.append(
                TestResult(case_id, "", "Error", _now(), 0, message=f"script error: {err}")
            )
            continue
        if case.id != case_id:
            results.append(
                TestResult(
                    case_id,
                    case.title,
                    "Error",
                    _now(),
                    0,
                    message=f"case id {case.id} does not match file name {path.name}",
                )
            )
            continue
        engine = load(stations[build_id], rng_seed=seed)
        results.append(run_case(case, engine))

    wall_elapsed = int((time.monotonic() - wall_start) * 1000)
    return BatchReport(batch, tuple(selection or ()), tuple(results), wall_elapsed, seed)


# -- defect tracking -------------------------------------------------------------------


@dataclass(frozen=True)
class DefectRecord:
    id: str
    case_id: str
    opened_at: str
    summary: str
    signature: tuple
    status: str  # Open | Closed
    closed_by_batch: str | None = None


class DefectStore:
    """Append-only JSONL store; later records supersede earlier status.

    One Open defect per failure signature (case, step index, expected,
    actual): re-failing touches the existing defect instead of duplicating.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._records: dict[str, DefectRecord] = {}
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            record = DefectRecord(
                id=doc["defect"],
                case_id=doc["case"],
                opened_at=doc["opened_at"],
                summary=doc["summary"],
                signature=tuple(doc["signature"]),
                status=doc["status"],
                closed_by_batch=doc.get("closed_by_batch"),
            )
            self._records[record.id] = record

    def _append(self, record: DefectRecord, event: str, batch_id: str) -> None:
        doc = {
            "defect": record.id,
            "case": record.case_id,
            "opened_at": record.opened_at,
            "summary": record.summary,
            "signature": list(record.signature),
            "status": record.status,
            "closed_by_batch": record.closed_by_batch,
            "event": event,
            "batch": batch_id,
        }
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(doc, sort_keys=True) + "\n")
        self._records[record.id] = record

    def open_defects(self, case_id: str | None = None) -> list[DefectRecord]:
        return [
            r
            for r in self._records.values()
            if r.status == "Open" and (case_id is None or r.case_id == case_id)
        ]

    def all_defects(self) -> list[DefectRecord]:
        return list(self._records.values())

    def _next_id(self) -> str:
        return f"D-{len(self._records) + 1:04d}"


def failure_signature(result: TestResult) -> tuple:
    detail = result.failed_step or {}
    return (
        result.case_id,
        detail.get("index"),
        repr(detail.get("expected")),
        repr(detail.get("actual")),
    )


def track_defects(result: TestResult, store: DefectStore, batch_id: str) -> list[DefectRecord]:
    """Apply one result to the store: open/touch on Fail, close on Pass."""
    updated: list[DefectRecord] = []
    if result.verdict == "Fail":
        signature = failure_signature(result)
        for existing in store.open_defects(result.case_id):
            if existing.signature == signature:
                store._append(existing, "touched", batch_id)
                return [existing]
        detail = result.failed_step or {}
        record = DefectRecord(
            id=store._next_id(),
            case_id=result.case_id,
            opened_at=result.started_at,
            summary=(
                f"{result.case_id}: step {detail.get('index')} expected "
                f"{detail.get('subject')} == {detail.get('expected')}, got {detail.get('actual')}"
            ),
            signature=signature,
            status="Open",
        )
        store._append(record, "opened", batch_id)
        updated.append(record)
    elif result.verdict == "Pass":
        for existing in store.open_defects(result.case_id):
            closed = DefectRecord(
                id=existing.id,
                case_id=existing.case_id,
                opened_at=existing.opened_at,
                summary=existing.summary,
                signature=existing.signature,
                status="Closed",
                closed_by_batch=batch_id,
            )
            store._append(closed, "closed", batch_id)
            updated.append(closed)
    return updated


# -- reports -------------------------------------------------------------------------


def render_report(batch: BatchReport, fmt: str = "text") -> str:
    """Deterministic report of one batch; text table or line-delimited records."""
    if fmt == "records":
        lines = [json.dumps(r.to_record(), sort_keys=True) for r in batch.results]
        return "\n".join(lines) + ("\n" if lines else "")
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    width = max([len(r.case_id) for r in batch.results], default=8)
    lines = [f"batch {batch.batch_id}"]
    for r in batch.results:
        lines.append(
            f"{r.case_id:<{width}}  {r.verdict:<5}  {r.started_at}  {r.sim_duration_ms:>7} ms  {r.title}"
        )
    totals = batch.totals
    lines.append(
        f"totals: pass={totals['pass']} fail={totals['fail']} error={totals['error']} "
        f"of {len(batch.results)}"
    )
    lines.append(
        f"sim elapsed: {batch.sim_elapsed_ms} ms  wall elapsed: {batch.wall_elapsed_ms} ms  "
        f"mean sim per case: {batch.mean_sim_per_case_ms:.3f} ms"
    )
    lines.append(f"seed: {batch.seed}")
    return "\n".join(lines) + "\n"


def write_batch(batch: BatchReport, out_dir: str | Path) -> Path:
    """Persist results/<batch>.jsonl and report.txt; returns the results path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / f"{batch.batch_id}.jsonl"
    with results_path.open("w", encoding="utf-8") as handle:
        for result in batch.results:
            handle.write(json.dumps(result.to_record(), sort_keys=True) + "\n")
    (out_dir / "report.txt").write_text(render_report(batch, "text"), encoding="utf-8")
    return results_path


def case_verdicts(results: Iterable[TestResult]) -> dict[str, str]:
    return {r.case_id: r.verdict for r in results}
