"""MATPOWER case files: parsing, validation and the immutable grid model.

Only the subset of the MATPOWER format needed for AC power flow and the
switching objective is supported: ``baseMVA``, ``bus``, ``gen``, ``branch``
and (optionally) polynomial ``gencost``.  Columns follow the standard
MATPOWER ordering; extra columns are ignored.
"""
from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import CaseLoadError, DuplicateBusId, MalformedCase, MissingSection


class BusKind(IntEnum):
    PQ = 1
    PV = 2
    SLACK = 3


@dataclass(frozen=True)
class CostPolynomial:
    """Generator cost in $/h as a polynomial in MW, highest degree first."""

    coefficients: tuple[float, ...] = (0.0,)

    def __call__(self, p_mw):
        return np.polyval(self.coefficients, p_mw)


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    p_load: float
    q_load: float
    g_shunt: float
    b_shunt: float
    v_mag_init: float
    v_ang_init: float
    base_kv: float
    v_max: float
    v_min: float


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float
    rate_a: float
    tap_ratio: float
    phase_shift: float
    status_init: int


@dataclass(frozen=True)
class Generator:
    bus: int
    p_set: float
    q_set: float
    v_set: float
    p_max: float
    p_min: float
    status: int
    cost: CostPolynomial = field(default_factory=CostPolynomial)


class CaseArrays(NamedTuple):
    """Dense numpy view of a :class:`GridCase` (bus-indexed by dense position)."""

    bus_kind: np.ndarray
    p_load: np.ndarray
    q_load: np.ndarray
    g_shunt: np.ndarray
    b_shunt: np.ndarray
    v_mag_init: np.ndarray
    v_ang_init: np.ndarray  # radians
    v_max: np.ndarray
    v_min: np.ndarray
    f_bus: np.ndarray
    t_bus: np.ndarray
    r: np.ndarray
    x: np.ndarray
    b_charging: np.ndarray
    rate_a: np.ndarray
    tap: np.ndarray  # complex, includes phase shift
    status_init: np.ndarray
    gen_bus: np.ndarray
    gen_p: np.ndarray
    gen_q: np.ndarray
    gen_v: np.ndarray
    gen_p_max: np.ndarray
    gen_on: np.ndarray


@dataclass(frozen=True)
class GridCase:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    bus_index: dict[int, int] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.bus_index is None:
            object.__setattr__(self, "bus_index", {b.id: i for i, b in enumerate(self.buses)})

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @cached_property
    def arrays(self) -> CaseArrays:
        idx = self.bus_index
        br = self.branches
        gens = self.generators
        return CaseArrays(
            bus_kind=np.array([b.kind for b in self.buses], dtype=int),
            p_load=np.array([b.p_load for b in self.buses], dtype=float),
            q_load=np.array([b.q_load for b in self.buses], dtype=float),
            g_shunt=np.array([b.g_shunt for b in self.buses], dtype=float),
            b_shunt=np.array([b.b_shunt for b in self.buses], dtype=float),
            v_mag_init=np.array([b.v_mag_init for b in self.buses], dtype=float),
            v_ang_init=np.deg2rad([b.v_ang_init for b in self.buses]).astype(float),
            v_max=np.array([b.v_max for b in self.buses], dtype=float),
            v_min=np.array([b.v_min for b in self.buses], dtype=float),
            f_bus=np.array([idx[b.from_bus] for b in br], dtype=int),
            t_bus=np.array([idx[b.to_bus] for b in br], dtype=int),
            r=np.array([b.r for b in br], dtype=float),
            x=np.array([b.x for b in br], dtype=float),
            b_charging=np.array([b.b_charging for b in br], dtype=float),
            rate_a=np.array([b.rate_a for b in br], dtype=float),
            tap=np.array(
                [b.tap_ratio * np.exp(1j * np.deg2rad(b.phase_shift)) for b in br], dtype=complex
            ),
            status_init=np.array([b.status_init for b in br], dtype=int),
            gen_bus=np.array([idx[g.bus] for g in gens], dtype=int),
            gen_p=np.array([g.p_set for g in gens], dtype=float),
            gen_q=np.array([g.q_set for g in gens], dtype=float),
            gen_v=np.array([g.v_set for g in gens], dtype=float),
            gen_p_max=np.array([g.p_max for g in gens], dtype=float),
            gen_on=np.array([g.status > 0 for g in gens], dtype=bool),
        )

    @cached_property
    def slack_position(self) -> int:
        for i, b in enumerate(self.buses):
            if b.kind == BusKind.SLACK:
                return i
        raise CaseLoadError("case has no slack bus")

    def generation_cost(self, p_gen_mw) -> float:
        """Total $/h of in-service generators at the given per-generator output."""
        return float(
            sum(g.cost(p) for g, p in zip(self.generators, p_gen_mw) if g.status > 0)
        )

    def with_load_scale(self, factors) -> GridCase:
        """Copy of the case with each bus's P and Q load multiplied by ``factors[i]``."""
        factors = np.asarray(factors, dtype=float)
        buses = tuple(
            dataclasses.replace(b, p_load=b.p_load * f, q_load=b.q_load * f)
            for b, f in zip(self.buses, factors)
        )
        return dataclasses.replace(self, buses=buses, bus_index=dict(self.bus_index))

    def without_branch(self, k: int) -> GridCase:
        branches = self.branches[:k] + self.branches[k + 1:]
        return dataclasses.replace(self, branches=branches, bus_index=dict(self.bus_index))


# ---------------------------------------------------------------------------
# parsing

_MIN_COLS = {"bus": 13, "gen": 10, "branch": 13}
_IGNORED = {"version", "bus_name", "areas", "gentype", "genfuel"}
_ASSIGN = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")
_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|[+-]?(?:Inf|inf|NaN|nan)")


def _strip_comment(line: str) -> str:
    # '%' never appears inside the supported numeric sections; names may
    # contain it only within quotes, which only the ignored sections use.
    in_quote = False
    for i, ch in enumerate(line):
        if ch == "'":
            in_quote = not in_quote
        elif ch == "%" and not in_quote:
            return line[:i]
    return line


def _parse_row(text: str, lineno: int) -> list[float]:
    tokens = text.replace(",", " ").split()
    values = []
    for tok in tokens:
        if not _NUMBER.fullmatch(tok):
            raise MalformedCase(lineno, f"unparseable value {tok!r}")
        values.append(float(tok))
    return values


def _read_sections(text: str):
    """Yield ``(name, rows, lineno)`` for every ``mpc.<name> = ...`` assignment."""
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        lineno = i + 1
        line = _strip_comment(lines[i]).strip()
        i += 1
        if not line or line.startswith("function"):
            continue
        m = _ASSIGN.match(line)
        if m is None:
            raise MalformedCase(lineno, f"unexpected statement {line!r}")
        name, rest = m.group(1), m.group(2).strip()
        if rest.startswith("[") or rest.startswith("{"):
            close = "]" if rest[0] == "[" else "}"
            body = [(rest[1:], lineno)]
            while close not in body[-1][0]:
                if i >= len(lines):
                    raise MalformedCase(lineno, f"unterminated mpc.{name}")
                body.append((_strip_comment(lines[i]), i + 1))
                i += 1
            last, last_no = body[-1]
            body[-1] = (last[: last.index(close)], last_no)
            if close == "}":
                yield name, None, lineno
                continue
            rows = []
            for chunk, no in body:
                for piece in chunk.split(";"):
                    if piece.strip():
                        rows.append((_parse_row(piece, no), no))
            yield name, rows, lineno
        else:
            value = rest.rstrip(";").strip()
            if value.startswith("'"):
                yield name, None, lineno
            else:
                yield name, [(_parse_row(value, lineno), lineno)], lineno


def _check_width(rows, name, minimum):
    for values, no in rows:
        if len(values) < minimum:
            raise MalformedCase(no, f"mpc.{name} row has {len(values)} columns, need {minimum}")


def parse_case(text: str) -> GridCase:
    """Parse MATPOWER case text into a :class:`GridCase`."""
    sections = {}
    for name, rows, lineno in _read_sections(text):
        if name in _IGNORED:
            continue
        if name not in ("baseMVA", "bus", "gen", "branch", "gencost"):
            raise MalformedCase(lineno, f"unsupported section mpc.{name}")
        sections[name] = rows
    for name in ("baseMVA", "bus", "gen", "branch"):
        if name not in sections:
            raise MissingSection(name)
    for name, minimum in _MIN_COLS.items():
        _check_width(sections[name], name, minimum)

    (base_row, base_no), = sections["baseMVA"]
    if len(base_row) != 1:
        raise MalformedCase(base_no, "baseMVA must be a scalar")
    base_mva = base_row[0]

    buses = []
    index = {}
    for values, no in sections["bus"]:
        bus_id = int(values[0])
        if bus_id != values[0]:
            raise MalformedCase(no, f"non-integer bus id {values[0]}")
        if bus_id in index:
            raise DuplicateBusId(bus_id)
        try:
            kind = BusKind(int(values[1]))
        except ValueError:
            raise MalformedCase(no, f"unsupported bus type {values[1]:g}") from None
        index[bus_id] = len(buses)
        buses.append(
            Bus(
                id=bus_id, kind=kind, p_load=values[2], q_load=values[3],
                g_shunt=values[4], b_shunt=values[5], v_mag_init=values[7],
                v_ang_init=values[8], base_kv=values[9], v_max=values[11], v_min=values[12],
            )
        )

    costs = []
    if "gencost" in sections:
        for values, no in sections["gencost"]:
            if len(values) < 4 or int(values[0]) != 2:
                raise MalformedCase(no, "only polynomial (model 2) gencost rows are supported")
            n = int(values[3])
            if n < 1 or len(values) < 4 + n:
                raise MalformedCase(no, f"gencost row declares {n} coefficients")
            costs.append(CostPolynomial(tuple(values[4: 4 + n])))
        if len(costs) < len(sections["gen"]):
            raise MalformedCase(sections["gencost"][-1][1], "fewer gencost rows than generators")

    gens = []
    for k, (values, no) in enumerate(sections["gen"]):
        bus_id = int(values[0])
        if bus_id not in index:
            raise MalformedCase(no, f"generator at unknown bus {bus_id}")
        gens.append(
            Generator(
                bus=bus_id, p_set=values[1], q_set=values[2], v_set=values[5],
                p_max=values[8], p_min=values[9], status=int(values[7] > 0),
                cost=costs[k] if costs else CostPolynomial(),
            )
        )

    branches = []
    for values, no in sections["branch"]:
        f, t = int(values[0]), int(values[1])
        for b in (f, t):
            if b not in index:
                raise MalformedCase(no, f"branch endpoint at unknown bus {b}")
        branches.append(
            Branch(
                from_bus=f, to_bus=t, r=values[2], x=values[3], b_charging=values[4],
                rate_a=values[5], tap_ratio=values[8] if values[8] != 0 else 1.0,
                phase_shift=values[9], status_init=int(values[10] > 0),
            )
        )

    return GridCase(base_mva, tuple(buses), tuple(branches), tuple(gens), index)


def load_case(path) -> GridCase:
    """Read and parse a case file; bare names like ``"case14"`` resolve to bundled cases."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        bundled = resources.files("gridswitch") / "data" / f"{p.name}.m"
        if bundled.is_file():
            return parse_case(bundled.read_text())
    try:
        text = p.read_text()
    except OSError as exc:
        raise CaseLoadError(f"cannot read case file {path}: {exc}") from exc
    return parse_case(text)


def _fmt(v: float) -> str:
    return repr(float(v)) if v != int(v) or abs(v) >= 1e15 else str(int(v))


def serialize_case(case: GridCase) -> str:
    """Write the supported subset back out as MATPOWER text."""
    out = ["function mpc = case_export", "mpc.version = '2';", f"mpc.baseMVA = {_fmt(case.base_mva)};", "mpc.bus = ["]
    for b in case.buses:
        row = [b.id, int(b.kind), b.p_load, b.q_load, b.g_shunt, b.b_shunt, 1,
               b.v_mag_init, b.v_ang_init, b.base_kv, 1, b.v_max, b.v_min]
        out.append("\t" + "\t".join(_fmt(v) for v in row) + ";")
    out += ["];", "mpc.gen = ["]
    for g in case.generators:
        row = [g.bus, g.p_set, g.q_set, 0, 0, g.v_set, case.base_mva, g.status, g.p_max, g.p_min]
        out.append("\t" + "\t".join(_fmt(v) for v in row) + ";")
    out += ["];", "mpc.branch = ["]
    for br in case.branches:
        row = [br.from_bus, br.to_bus, br.r, br.x, br.b_charging, br.rate_a, 0, 0,
               br.tap_ratio, br.phase_shift, br.status_init, -360, 360]
        out.append("\t" + "\t".join(_fmt(v) for v in row) + ";")
    out += ["];", "mpc.gencost = ["]
    for g in case.generators:
        c = g.cost.coefficients
        out.append("\t" + "\t".join(_fmt(v) for v in (2, 0, 0, len(c), *c)) + ";")
    out.append("];")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Issue:
    kind: str
    index: int | None = None
    detail: str = ""


def validate(case: GridCase) -> list[Issue]:
    """Every invariant violation found in ``case``; empty when the case is usable."""
    issues = []
    slacks = [i for i, b in enumerate(case.buses) if b.kind == BusKind.SLACK]
    if not slacks:
        issues.append(Issue("NoSlack"))
    elif len(slacks) > 1:
        issues.append(Issue("MultipleSlack", None, f"slack buses at positions {slacks}"))
    for i, b in enumerate(case.buses):
        if not b.v_min < b.v_max:
            issues.append(Issue("VoltageLimits", i, f"v_min={b.v_min} v_max={b.v_max}"))
        if not b.v_mag_init > 0:
            issues.append(Issue("NonPositiveVoltage", i))
    for k, br in enumerate(case.branches):
        if br.x == 0 and br.status_init:
            issues.append(Issue("ZeroReactance", k))
        if br.r < 0:
            issues.append(Issue("NegativeResistance", k))
        if br.rate_a < 0:
            issues.append(Issue("NegativeRating", k))
    for k, g in enumerate(case.generators):
        if g.status and not g.p_min <= g.p_set <= g.p_max:
            issues.append(Issue("DispatchOutOfBounds", k, f"{g.p_min} <= {g.p_set} <= {g.p_max}"))
        if not g.cost.coefficients:
            issues.append(Issue("EmptyCost", k))
        elif g.status and not np.all(np.isfinite(g.cost(np.array([g.p_min, g.p_max])))):
            issues.append(Issue("NonFiniteCost", k))
    if len(slacks) == 1:
        on_slack = [g for g in case.generators if g.status and case.bus_index[g.bus] == slacks[0]]
        if not on_slack:
            issues.append(Issue("SlackWithoutGenerator", slacks[0]))
    return issues


def switchable_lines(case: GridCase) -> list[int]:
    """Branch positions available for switching, in file order.

    Every branch is eligible, including ones that start out of service.
    """
    return list(range(case.n_branch))
