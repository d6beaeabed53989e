"""Transmission-network model: case parsing and bus admittance assembly.

Supports two case formats:

* a subset of the widely circulated MATPOWER ``.m`` tables
  (``mpc.baseMVA``, ``mpc.bus``, ``mpc.branch``; other blocks ignored), and
* a native JSON schema (see ``network_to_json`` for the field list).

All electrical quantities are kept in per-unit.  ``base_mva`` is stored but
only used to convert the ``.m`` bus-shunt columns (Gs/Bs are in MW/MVAr at
V = 1 in that format).
"""

from __future__ import annotations

import cmath
import json
import math
import re
from dataclasses import dataclass
from enum import Enum

import scipy.sparse as sp


class CaseError(ValueError):
    """Base class for case-file problems."""


class CaseSyntaxError(CaseError):
    """Malformed case text; carries 1-based line/column when known."""

    def __init__(self, message: str, line: int | None = None,
                 column: int | None = None):
        self.line = line
        self.column = column
        if line is not None and column is not None:
            message = f"line {line}, column {column}: {message}"
        elif line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CaseSemanticError(CaseError):
    """Structurally valid case that violates a network invariant."""


class BusType(Enum):
    SLACK = "slack"
    PV = "pv"
    PQ = "pq"


_M_BUS_TYPE = {1: BusType.PQ, 2: BusType.PV, 3: BusType.SLACK}


@dataclass(frozen=True)
class Bus:
    """One network node.

    ``id`` is the external bus number from the case file; ``index`` is the
    contiguous zero-based position used everywhere else in the package.
    """

    id: int
    index: int
    bus_type: BusType
    shunt_g: float = 0.0
    shunt_b: float = 0.0
    vm_init: float = 1.0
    va_init: float = 0.0


@dataclass(frozen=True)
class Branch:
    """One transmission line or transformer between two internal bus indices.

    ``series_y`` is the per-unit series admittance 1/(r + jx); ``tap`` is the
    complex off-nominal ratio magnitude*exp(j*shift).  The raw r/x/shift
    values are kept so serialization round-trips exactly.
    """

    from_idx: int
    to_idx: int
    r: float
    x: float
    charging_b: float = 0.0
    tap_ratio: float = 1.0
    shift: float = 0.0
    in_service: bool = True

    @property
    def series_y(self) -> complex:
        return 1.0 / complex(self.r, self.x)

    @property
    def tap(self) -> complex:
        return self.tap_ratio * cmath.exp(1j * self.shift)


@dataclass(frozen=True)
class Network:
    """Immutable parsed network: buses, branches and the assembled Ybus."""

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    ybus: sp.csr_matrix
    base_mva: float
    id_to_index: dict[int, int]

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def slack_index(self) -> int:
        return next(b.index for b in self.buses if b.bus_type is BusType.SLACK)

    @property
    def index_to_id(self) -> dict[int, int]:
        return {v: k for k, v in self.id_to_index.items()}

    def in_service_branches(self) -> list[tuple[int, Branch]]:
        """(position-in-branches, branch) pairs for live branches."""
        return [(i, br) for i, br in enumerate(self.branches) if br.in_service]


def branch_stamps(branch: Branch) -> tuple[complex, complex, complex, complex]:
    """Pi-model admittance stamps (Yff, Yft, Ytf, Ytt) of one branch."""
    y = branch.series_y
    t = branch.tap
    ytt = y + 0.5j * branch.charging_b
    yff = ytt / (t * t.conjugate()).real
    yft = -y / t.conjugate()
    ytf = -y / t
    return yff, yft, ytf, ytt


def build_admittance(buses: list[Bus] | tuple[Bus, ...],
                     branches: list[Branch] | tuple[Branch, ...]) -> sp.csr_matrix:
    """Assemble the N x N bus admittance matrix from pi-model stamps.

    Out-of-service branches are skipped entirely.
    """
    n = len(buses)
    rows: list[int] = []
    cols: list[int] = []
    vals: list[complex] = []
    for br in branches:
        if not br.in_service:
            continue
        yff, yft, ytf, ytt = branch_stamps(br)
        f, t = br.from_idx, br.to_idx
        rows += [f, f, t, t]
        cols += [f, t, f, t]
        vals += [yff, yft, ytf, ytt]
    for bus in buses:
        if bus.shunt_g or bus.shunt_b:
            rows.append(bus.index)
            cols.append(bus.index)
            vals.append(complex(bus.shunt_g, bus.shunt_b))
    y = sp.coo_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex)
    return y.tocsr()


def _validate_and_build(buses: list[Bus], branches: list[Branch],
                        base_mva: float, id_to_index: dict[int, int]) -> Network:
    slack_count = sum(1 for b in buses if b.bus_type is BusType.SLACK)
    if slack_count != 1:
        raise CaseSemanticError(f"expected exactly 1 slack bus, found {slack_count}")
    n = len(buses)
    for br in branches:
        if not (0 <= br.from_idx < n and 0 <= br.to_idx < n):
            raise CaseSemanticError(f"branch references bus index out of range: "
                                    f"{br.from_idx}->{br.to_idx}")
        if br.from_idx == br.to_idx:
            raise CaseSemanticError(f"branch connects bus index {br.from_idx} to itself")
        if br.in_service and abs(complex(br.r, br.x)) == 0.0:
            raise CaseSemanticError(f"in-service branch {br.from_idx}->{br.to_idx} "
                                    "has zero series impedance")
    ybus = build_admittance(buses, branches)
    return Network(buses=tuple(buses), branches=tuple(branches), ybus=ybus,
                   base_mva=base_mva, id_to_index=id_to_index)


# ---------------------------------------------------------------------------
# MATPOWER-style .m subset
# ---------------------------------------------------------------------------

_BLOCK_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[")
_SCALAR_RE = re.compile(r"mpc\.(\w+)\s*=\s*([0-9.eE+-]+)\s*;")


def _strip_comment(line: str) -> str:
    pos = line.find("%")
    return line if pos < 0 else line[:pos]


def _parse_m_tables(text: str) -> tuple[float, list[tuple[int, list[float]]],
                                        list[tuple[int, list[float]]]]:
    """Extract baseMVA and the bus/branch numeric tables with line numbers."""
    base_mva = None
    tables: dict[str, list[tuple[int, list[float]]]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if current is None:
            m = _SCALAR_RE.search(line)
            if m and m.group(1) == "baseMVA":
                base_mva = float(m.group(2))
                continue
            m = _BLOCK_RE.search(line)
            if m:
                current = m.group(1)
                tables.setdefault(current, [])
                line = line[m.end():].strip()
                if not line:
                    continue
        if current is not None:
            if line.startswith("]"):
                current = None
                continue
            closing = line.endswith("];")
            row_text = line.rstrip(";]").strip()
            if row_text:
                row = []
                for tok in row_text.replace(",", " ").split():
                    try:
                        row.append(float(tok))
                    except ValueError:
                        raise CaseSyntaxError(
                            f"non-numeric token {tok!r} in mpc.{current} row",
                            line=lineno, column=raw.find(tok) + 1) from None
                tables[current].append((lineno, row))
            if closing:
                current = None
    if base_mva is None:
        raise CaseSyntaxError("missing 'mpc.baseMVA = <value>;'")
    if "bus" not in tables or not tables["bus"]:
        raise CaseSyntaxError("missing or empty mpc.bus table")
    if "branch" not in tables or not tables["branch"]:
        raise CaseSyntaxError("missing or empty mpc.branch table")
    return base_mva, tables["bus"], tables["branch"]


def _parse_matpower(text: str) -> Network:
    base_mva, bus_rows, branch_rows = _parse_m_tables(text)

    buses: list[Bus] = []
    id_to_index: dict[int, int] = {}
    for lineno, row in bus_rows:
        if len(row) < 9:
            raise CaseSyntaxError(f"bus row needs >= 9 columns, got {len(row)}",
                                  line=lineno)
        bus_id = int(row[0])
        if bus_id in id_to_index:
            raise CaseSemanticError(f"duplicate bus id {bus_id}")
        btype = _M_BUS_TYPE.get(int(row[1]))
        if btype is None:
            raise CaseSyntaxError(f"unknown bus type code {int(row[1])}", line=lineno)
        index = len(buses)
        id_to_index[bus_id] = index
        buses.append(Bus(id=bus_id, index=index, bus_type=btype,
                         shunt_g=row[4] / base_mva, shunt_b=row[5] / base_mva,
                         vm_init=row[7], va_init=math.radians(row[8])))

    branches: list[Branch] = []
    for lineno, row in branch_rows:
        if len(row) < 11:
            raise CaseSyntaxError(f"branch row needs >= 11 columns, got {len(row)}",
                                  line=lineno)
        f_id, t_id = int(row[0]), int(row[1])
        for bid in (f_id, t_id):
            if bid not in id_to_index:
                raise CaseSemanticError(f"branch references unknown bus {bid}")
        tap = row[8] if row[8] != 0.0 else 1.0
        branches.append(Branch(from_idx=id_to_index[f_id], to_idx=id_to_index[t_id],
                               r=row[2], x=row[3], charging_b=row[4],
                               tap_ratio=tap, shift=math.radians(row[9]),
                               in_service=bool(row[10])))
    return _validate_and_build(buses, branches, base_mva, id_to_index)


# ---------------------------------------------------------------------------
# Native JSON schema
# ---------------------------------------------------------------------------

def _parse_json(text: str) -> Network:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseSyntaxError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    try:
        base_mva = float(doc.get("base_mva", 100.0))
        buses: list[Bus] = []
        id_to_index: dict[int, int] = {}
        for entry in doc["buses"]:
            bus_id = int(entry["id"])
            if bus_id in id_to_index:
                raise CaseSemanticError(f"duplicate bus id {bus_id}")
            index = len(buses)
            id_to_index[bus_id] = index
            buses.append(Bus(id=bus_id, index=index,
                             bus_type=BusType(entry.get("type", "pq")),
                             shunt_g=float(entry.get("gs", 0.0)),
                             shunt_b=float(entry.get("bs", 0.0)),
                             vm_init=float(entry.get("vm", 1.0)),
                             va_init=float(entry.get("va", 0.0))))
        branches: list[Branch] = []
        for entry in doc["branches"]:
            f_id, t_id = int(entry["from"]), int(entry["to"])
            for bid in (f_id, t_id):
                if bid not in id_to_index:
                    raise CaseSemanticError(f"branch references unknown bus {bid}")
            tap = float(entry.get("tap", 1.0))
            branches.append(Branch(from_idx=id_to_index[f_id],
                                   to_idx=id_to_index[t_id],
                                   r=float(entry["r"]), x=float(entry["x"]),
                                   charging_b=float(entry.get("b", 0.0)),
                                   tap_ratio=tap if tap != 0.0 else 1.0,
                                   shift=float(entry.get("shift", 0.0)),
                                   in_service=bool(entry.get("status", 1))))
    except KeyError as exc:
        raise CaseSyntaxError(f"missing required field {exc}") from None
    return _validate_and_build(buses, branches, base_mva, id_to_index)


def parse_case(text: str, fmt: str = "matpower_m") -> Network:
    """Parse case text in the given format ('matpower_m' or 'json')."""
    if fmt == "matpower_m":
        return _parse_matpower(text)
    if fmt == "json":
        return _parse_json(text)
    raise ValueError(f"unknown case format {fmt!r}")


def load_case(path: str) -> Network:
    """Read a case file, picking the format from the extension."""
    fmt = "json" if str(path).endswith(".json") else "matpower_m"
    with open(path, encoding="utf-8") as fh:
        return parse_case(fh.read(), fmt)


def network_to_json(net: Network) -> str:
    """Serialize to the native JSON schema.

    Schema: ``{"base_mva": f, "buses": [...], "branches": [...]}`` with
    bus fields id/type/gs/bs/vm/va (per-unit, angle in radians) and branch
    fields from/to/r/x/b/tap/shift/status.  Re-parsing reproduces the same
    Ybus entrywise.
    """
    doc = {
        "base_mva": net.base_mva,
        "buses": [
            {"id": b.id, "type": b.bus_type.value, "gs": b.shunt_g, "bs": b.shunt_b,
             "vm": b.vm_init, "va": b.va_init}
            for b in net.buses
        ],
        "branches": [
            {"from": net.index_to_id[br.from_idx], "to": net.index_to_id[br.to_idx],
             "r": br.r, "x": br.x, "b": br.charging_b, "tap": br.tap_ratio,
             "shift": br.shift, "status": int(br.in_service)}
            for br in net.branches
        ],
    }
    return json.dumps(doc, indent=2)
