"""Requirement hierarchy, test-unit tree, validation matrices and coverage.

Three requirement levels map to three testing-unit kinds: High-level
requirements are validated by builds, Intermediate by test runs, Detail by
test cases.  A validation matrix is the cross-reference between one level
and its unit kind; row coverage of the Detail matrix is the test-coverage
measure.

File formats (see docs/formats.md): requirements are line records
``id|level|parent|text``; links are ``REQ-ID -> UNIT-ID``; the test-unit
tree is ``suite.json``.  ``#`` comments and blank lines are allowed in the
line-record files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping


class Level(Enum):
    HIGH = "High"
    INTERMEDIATE = "Intermediate"
    DETAIL = "Detail"


LEVEL_PARENT = {Level.HIGH: None, Level.INTERMEDIATE: Level.HIGH, Level.DETAIL: Level.INTERMEDIATE}


class UnitKind(Enum):
    BUILD = "Build"
    RUN = "TestRun"
    CASE = "TestCase"


LEVEL_UNIT = {Level.HIGH: UnitKind.BUILD, Level.INTERMEDIATE: UnitKind.RUN, Level.DETAIL: UnitKind.CASE}


class TraceabilityError(Exception):
    pass


@dataclass(frozen=True)
class Requirement:
    id: str
    level: Level
    text: str
    parent: str | None = None


@dataclass(frozen=True)
class RequirementSet:
    requirements: tuple[Requirement, ...]

    def __post_init__(self) -> None:
        by_id: dict[str, Requirement] = {}
        for req in self.requirements:
            if req.id in by_id:
                raise TraceabilityError(f"duplicate requirement id {req.id}")
            by_id[req.id] = req
        for req in self.requirements:
            want_parent_level = LEVEL_PARENT[req.level]
            if want_parent_level is None:
                if req.parent:
                    raise TraceabilityError(f"{req.id}: High-level requirements have no parent")
                continue
            if not req.parent:
                raise TraceabilityError(f"{req.id}: {req.level.value} requirement needs a parent")
            parent = by_id.get(req.parent)
            if parent is None:
                raise TraceabilityError(f"{req.id}: dangling parent {req.parent}")
            if parent.level is not want_parent_level:
                raise TraceabilityError(
                    f"{req.id}: level/parent mismatch ({req.level.value} under {parent.level.value})"
                )

    def __len__(self) -> int:
        return len(self.requirements)

    def by_id(self) -> dict[str, Requirement]:
        return {r.id: r for r in self.requirements}

    def at_level(self, level: Level) -> tuple[Requirement, ...]:
        return tuple(r for r in self.requirements if r.level is level)

    def children_of(self, req_id: str) -> tuple[Requirement, ...]:
        return tuple(r for r in self.requirements if r.parent == req_id)


@dataclass(frozen=True)
class Build:
    id: str
    name: str
    station: str
    runs: tuple[str, ...]


@dataclass(frozen=True)
class TestRun:
    id: str
    name: str
    cases: tuple[str, ...]


@dataclass(frozen=True)
class TestUnitTree:
    builds: tuple[Build, ...]
    runs: tuple[TestRun, ...]
    case_dir: str = "cases"
    name: str = ""

    def __post_init__(self) -> None:
        run_owner: dict[str, str] = {}
        runs_by_id = {r.id: r for r in self.runs}
        if len(runs_by_id) != len(self.runs):
            raise TraceabilityError("duplicate test-run id")
        build_ids = set()
        for build in self.builds:
            if build.id in build_ids:
                raise TraceabilityError(f"duplicate build id {build.id}")
            build_ids.add(build.id)
            for run_id in build.runs:
                if run_id not in runs_by_id:
                    raise TraceabilityError(f"build {build.id} references unknown run {run_id}")
                if run_id in run_owner:
                    raise TraceabilityError(f"run {run_id} belongs to more than one build")
                run_owner[run_id] = build.id
        orphans = set(runs_by_id) - set(run_owner)
        if orphans:
            raise TraceabilityError(f"runs belong to no build: {sorted(orphans)}")
        case_owner: dict[str, str] = {}
        for run in self.runs:
            for case_id in run.cases:
                if case_id in case_owner:
                    raise TraceabilityError(f"case {case_id} belongs to more than one run")
                case_owner[case_id] = run.id

    @property
    def cases(self) -> tuple[str, ...]:
        return tuple(c for run in self.runs for c in run.cases)

    def unit_ids(self, kind: UnitKind) -> frozenset[str]:
        if kind is UnitKind.BUILD:
            return frozenset(b.id for b in self.builds)
        if kind is UnitKind.RUN:
            return frozenset(r.id for r in self.runs)
        return frozenset(self.cases)

    def kind_of(self, unit_id: str) -> UnitKind | None:
        for kind in UnitKind:
            if unit_id in self.unit_ids(kind):
                return kind
        return None


@dataclass(frozen=True)
class ValidationMatrix:
    level: Level
    links: frozenset[tuple[str, str]]

    def requirements_of(self, unit_id: str) -> frozenset[str]:
        return frozenset(r for r, u in self.links if u == unit_id)

    def units_of(self, req_id: str) -> frozenset[str]:
        return frozenset(u for r, u in self.links if r == req_id)


@dataclass(frozen=True)
class CoverageReport:
    level: Level
    total: int
    covered: int
    covered_and_passing: int
    uncovered_ids: tuple[str, ...]
    passing_applicable: bool

    def __post_init__(self) -> None:
        assert 0 <= self.covered_and_passing <= self.covered <= self.total

    @property
    def percent(self) -> float:
        return 100.0 if self.total == 0 else 100.0 * self.covered / self.total

    def to_record(self) -> dict:
        return {
            "level": self.level.value,
            "total": self.total,
            "covered": self.covered,
            "covered_and_passing": self.covered_and_passing if self.passing_applicable else None,
            "percent": self.percent,
            "uncovered": list(self.uncovered_ids),
        }


# -- file loading -------------------------------------------------------------


def _data_lines(text: str) -> Iterable[tuple[int, str]]:
    for i, raw in enumerate(text.replace("\r\n", "\n").split("\n")):
        cut = raw.find("#")
        line = (raw if cut < 0 else raw[:cut]).strip()
        if line:
            yield i + 1, line


def parse_requirements(text: str) -> RequirementSet:
    reqs = []
    for lineno, line in _data_lines(text):
        parts = line.split("|", 3)
        if len(parts) != 4:
            raise TraceabilityError(f"line {lineno}: expected id|level|parent|text")
        req_id, level_text, parent, req_text = (p.strip() for p in parts)
        try:
            level = Level(level_text)
        except ValueError:
            raise TraceabilityError(f"line {lineno}: unknown level {level_text!r}") from None
        reqs.append(Requirement(req_id, level, req_text, parent or None))
    return RequirementSet(tuple(reqs))


def load_requirements(path: str | Path) -> RequirementSet:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise TraceabilityError(f"cannot read {path}: {err}") from err
    return parse_requirements(text)


def parse_links(text: str) -> tuple[tuple[str, str], ...]:
    links = []
    for lineno, line in _data_lines(text):
        left, sep, right = line.partition("->")
        if not sep:
            raise TraceabilityError(f"line {lineno}: expected 'REQ-ID -> UNIT-ID'")
        links.append((left.strip(), right.strip()))
    return tuple(links)


def load_links(path: str | Path) -> tuple[tuple[str, str], ...]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise TraceabilityError(f"cannot read {path}: {err}") from err
    return parse_links(text)


def load_suite(path: str | Path) -> TestUnitTree:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as err:
        raise TraceabilityError(f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise TraceabilityError(f"{path}: {err}") from err
    try:
        builds = tuple(
            Build(b["id"], b.get("name", b["id"]), b["station"], tuple(b["runs"]))
            for b in doc["builds"]
        )
        runs = tuple(
            TestRun(r["id"], r.get("name", r["id"]), tuple(r["cases"])) for r in doc["runs"]
        )
    except (KeyError, TypeError) as err:
        raise TraceabilityError(f"{path}: malformed suite document: {err}") from err
    return TestUnitTree(builds, runs, case_dir=doc.get("case_dir", "cases"), name=doc.get("name", path.stem))


# -- matrices and coverage ------------------------------------------------------


def build_matrix(
    reqs: RequirementSet,
    tree: TestUnitTree,
    links: Iterable[tuple[str, str]],
) -> dict[Level, ValidationMatrix]:
    """Partition links into the three level matrices, rejecting cross-level links."""
    by_id = reqs.by_id()
    buckets: dict[Level, set[tuple[str, str]]] = {level: set() for level in Level}
    for req_id, unit_id in links:
        req = by_id.get(req_id)
        if req is None:
            raise TraceabilityError(f"link references unknown requirement {req_id}")
        kind = tree.kind_of(unit_id)
        if kind is None:
            raise TraceabilityError(f"link references unknown unit {unit_id}")
        if LEVEL_UNIT[req.level] is not kind:
            raise TraceabilityError(
                f"cross-level link: {req.level.value} requirement {req_id} "
                f"cannot be validated by {kind.value} {unit_id}"
            )
        buckets[req.level].add((req_id, unit_id))
    return {level: ValidationMatrix(level, frozenset(pairs)) for level, pairs in buckets.items()}


class UnitStatus(Enum):
    PASS = "Pass"
    FAIL = "Fail"
    ERROR = "Error"
    EMPTY = "Empty"

    @property
    def passing(self) -> bool:
        return self is UnitStatus.PASS


def unit_statuses(tree: TestUnitTree, case_verdicts: Mapping[str, str]) -> dict[str, UnitStatus]:
    """Latest status of every unit; empty runs are not-Pass by policy."""
    statuses: dict[str, UnitStatus] = {}
    for case_id in tree.cases:
        verdict = case_verdicts.get(case_id)
        if verdict == "Pass":
            statuses[case_id] = UnitStatus.PASS
        elif verdict == "Error":
            statuses[case_id] = UnitStatus.ERROR
        else:
            statuses[case_id] = UnitStatus.FAIL
    for run in tree.runs:
        if not run.cases:
            statuses[run.id] = UnitStatus.EMPTY
        elif all(statuses[c] is UnitStatus.PASS for c in run.cases):
            statuses[run.id] = UnitStatus.PASS
        elif any(statuses[c] is UnitStatus.ERROR for c in run.cases):
            statuses[run.id] = UnitStatus.ERROR
        else:
            statuses[run.id] = UnitStatus.FAIL
    for build in tree.builds:
        if not build.runs:
            statuses[build.id] = UnitStatus.EMPTY
        elif all(statuses[r] is UnitStatus.PASS for r in build.runs):
            statuses[build.id] = UnitStatus.PASS
        elif any(statuses[r] is UnitStatus.ERROR for r in build.runs):
            statuses[build.id] = UnitStatus.ERROR
        else:
            statuses[build.id] = UnitStatus.FAIL
    return statuses


def coverage(
    matrix: ValidationMatrix,
    reqs: RequirementSet,
    statuses: Mapping[str, UnitStatus] | None = None,
) -> CoverageReport:
    """Row coverage of one matrix; pass-awareness only when results are supplied."""
    level_reqs = reqs.at_level(matrix.level)
    covered = 0
    covered_and_passing = 0
    uncovered = []
    for req in level_reqs:
        units = matrix.units_of(req.id)
        if units:
            covered += 1
            if statuses is not None and any(
                statuses.get(u, UnitStatus.EMPTY).passing for u in units
            ):
                covered_and_passing += 1
        else:
            uncovered.append(req.id)
    return CoverageReport(
        level=matrix.level,
        total=len(level_reqs),
        covered=covered,
        covered_and_passing=covered_and_passing if statuses is not None else 0,
        uncovered_ids=tuple(uncovered),
        passing_applicable=statuses is not None,
    )


# -- hierarchy roll-up -----------------------------------------------------------


@dataclass(frozen=True)
class RollUpNode:
    requirement: Requirement
    units: tuple[tuple[str, UnitStatus], ...]
    children: tuple["RollUpNode", ...] = ()


@dataclass(frozen=True)
class RollUpReport:
    roots: tuple[RollUpNode, ...]

    def render(self) -> str:
        lines: list[str] = []

        def walk(node: RollUpNode, depth: int) -> None:
            indent = "  " * depth
            units = ", ".join(f"{uid}={status.value}" for uid, status in node.units) or "unlinked"
            lines.append(f"{indent}{node.requirement.id} [{units}] {node.requirement.text}")
            for child in node.children:
                walk(child, depth + 1)

        for root in self.roots:
            walk(root, 0)
        return "\n".join(lines) + ("\n" if lines else "")


def roll_up(
    reqs: RequirementSet,
    tree: TestUnitTree,
    matrices: Mapping[Level, ValidationMatrix],
    statuses: Mapping[str, UnitStatus],
) -> RollUpReport:
    """Pair every requirement with its linked units' statuses, hierarchically."""

    def units_for(req: Requirement) -> tuple[tuple[str, UnitStatus], ...]:
        matrix = matrices[req.level]
        return tuple(
            (uid, statuses.get(uid, UnitStatus.EMPTY)) for uid in sorted(matrix.units_of(req.id))
        )

    def node_for(req: Requirement) -> RollUpNode:
        children = tuple(node_for(child) for child in reqs.children_of(req.id))
        return RollUpNode(req, units_for(req), children)

    return RollUpReport(tuple(node_for(r) for r in reqs.at_level(Level.HIGH)))


def render_coverage(report: CoverageReport) -> str:
    lines = [
        f"{report.level.value} coverage: {report.covered}/{report.total} ({report.percent:.1f}%)",
    ]
    if report.passing_applicable:
        lines.append(f"covered and passing: {report.covered_and_passing}/{report.total}")
    for req_id in report.uncovered_ids:
        lines.append(f"uncovered: {req_id}")
    return "\n".join(lines) + "\n"
