"""Sparse Hermitian measurement operators and measurement-plan handling.

Every legacy (SCADA) quantity is a quadratic form of the nodal voltage
vector: z = v^H H v + noise, with H a sparse Hermitian matrix built from the
network admittances.  PMU quantities are linear: zeta = Phi v + noise.

The per-kind H construction (with Y_n := e_n e_n^T Y and the pi-model branch
stamps Yff/Yft):

* squared voltage magnitude at n:  e_n e_n^T
* active / reactive injection at n:  (Y_n^H + Y_n)/2  /  (Y_n^H - Y_n)/(2j)
* active / reactive flow metered at the n end of branch (n, n'):
  same symmetrizations of  Yff e_n e_n^T + Yft e_n e_n'^T.

This is the standard construction for the lifted quadratic measurement
model; the flow-end convention matches S_nn' = V_n conj(I_nn').
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .network import Branch, Network, branch_stamps


class DegenerateMeasurementError(ValueError):
    """A measurement whose H matrix has zero Frobenius norm."""


class MeasurementType(Enum):
    VMAG_SQ = "vmag_sq"
    P_INJ = "p_inj"
    Q_INJ = "q_inj"
    P_FLOW = "p_flow"
    Q_FLOW = "q_flow"


@dataclass(frozen=True)
class MeasurementKind:
    """What is metered: a bus quantity or a branch flow (by branch position)."""

    mtype: MeasurementType
    bus: int | None = None
    branch: int | None = None
    from_end: bool = True

    def element_label(self, net: Network) -> str:
        if self.mtype in (MeasurementType.VMAG_SQ, MeasurementType.P_INJ,
                          MeasurementType.Q_INJ):
            return f"bus {net.index_to_id[self.bus]}"
        br = net.branches[self.branch]
        f, t = net.index_to_id[br.from_idx], net.index_to_id[br.to_idx]
        return f"branch {f}-{t}" + ("" if self.from_end else " (to end)")


@dataclass(frozen=True)
class Measurement:
    kind: MeasurementKind
    h: sp.csr_matrix
    sigma: float
    z: float | None = None
    scale: float = 1.0


@dataclass(frozen=True)
class PmuBlock:
    """One PMU installation: voltage-phasor row plus incident-current rows.

    `row_scale` records the per-row factor applied by normalize(); raw
    admittance-scale current rows would otherwise dominate the augmented
    objective by |y|^2.
    """

    bus: int
    phi: np.ndarray
    sigma: float
    zeta: np.ndarray | None = None
    row_scale: np.ndarray | None = None


@dataclass(frozen=True)
class VoltageEnvelope:
    """Operational bounds on per-unit bus voltage magnitude."""

    v_lo: float = 0.95
    v_hi: float = 1.05

    def __post_init__(self):
        if not (0.0 < self.v_lo <= self.v_hi):
            raise ValueError(f"need 0 < v_lo <= v_hi, got [{self.v_lo}, {self.v_hi}]")


@dataclass(frozen=True)
class NoiseSigmas:
    """Noise standard deviations per meter class (per-unit)."""

    flow: float = 0.02
    injection: float = 0.04
    voltage: float = 0.004
    pmu: float = 0.0004

    def for_kind(self, mtype: MeasurementType) -> float:
        if mtype is MeasurementType.VMAG_SQ:
            return self.voltage
        if mtype in (MeasurementType.P_INJ, MeasurementType.Q_INJ):
            return self.injection
        return self.flow


def _flow_row_matrix(net: Network, branch: Branch, from_end: bool) -> sp.csr_matrix:
    yff, yft, ytf, ytt = branch_stamps(branch)
    n = net.n_bus
    if from_end:
        rows = [branch.from_idx, branch.from_idx]
        cols = [branch.from_idx, branch.to_idx]
        vals = [yff, yft]
    else:
        rows = [branch.to_idx, branch.to_idx]
        cols = [branch.to_idx, branch.from_idx]
        vals = [ytt, ytf]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex)


def build_h_matrix(net: Network, kind: MeasurementKind) -> sp.csr_matrix:
    """Sparse Hermitian H with v^H H v equal to the metered quantity."""
    n = net.n_bus
    mt = kind.mtype
    if mt is MeasurementType.VMAG_SQ:
        if kind.bus is None or not 0 <= kind.bus < n:
            raise ValueError(f"invalid bus index {kind.bus}")
        return sp.csr_matrix(([1.0 + 0j], ([kind.bus], [kind.bus])),
                             shape=(n, n), dtype=complex)
    if mt in (MeasurementType.P_INJ, MeasurementType.Q_INJ):
        if kind.bus is None or not 0 <= kind.bus < n:
            raise ValueError(f"invalid bus index {kind.bus}")
        row = net.ybus.getrow(kind.bus)
        a = sp.csr_matrix((row.data, (np.full(row.nnz, kind.bus), row.indices)),
                          shape=(n, n), dtype=complex)
    else:
        if kind.branch is None or not 0 <= kind.branch < len(net.branches):
            raise ValueError(f"invalid branch index {kind.branch}")
        br = net.branches[kind.branch]
        if not br.in_service:
            raise ValueError(f"branch {kind.branch} is out of service")
        a = _flow_row_matrix(net, br, kind.from_end)
    ah = a.conjugate().transpose().tocsr()
    if mt in (MeasurementType.P_INJ, MeasurementType.P_FLOW):
        h = (ah + a) * 0.5
    else:
        h = (ah - a) * (1.0 / 2.0j)
    h.eliminate_zeros()
    return h.tocsr()


def build_pmu_matrix(net: Network, bus: int) -> np.ndarray:
    """PMU measurement matrix: selector row, then one current row per
    incident in-service branch (network branch order)."""
    if not 0 <= bus < net.n_bus:
        raise ValueError(f"invalid bus index {bus}")
    rows = [np.zeros(net.n_bus, dtype=complex)]
    rows[0][bus] = 1.0
    for _, br in net.in_service_branches():
        if br.from_idx != bus and br.to_idx != bus:
            continue
        yff, yft, ytf, ytt = branch_stamps(br)
        row = np.zeros(net.n_bus, dtype=complex)
        if br.from_idx == bus:
            row[br.from_idx] += yff
            row[br.to_idx] += yft
        else:
            row[br.to_idx] += ytt
            row[br.from_idx] += ytf
        rows.append(row)
    return np.stack(rows)


class MeasurementPlan:
    """Ordered measurement set over one network, plus optional PMU blocks.

    Immutable once built; transformations (generate/normalize/surgery) return
    new plans.  The stacked operator used by hot loops is cached lazily.
    """

    def __init__(self, network: Network, measurements: Sequence[Measurement],
                 pmu_blocks: Sequence[PmuBlock] = ()):
        if len(measurements) == 0:
            raise ValueError("plan has no measurements")
        self.network = network
        self.measurements = tuple(measurements)
        self.pmu_blocks = tuple(pmu_blocks)

    def __len__(self) -> int:
        return len(self.measurements)

    @property
    def n_bus(self) -> int:
        return self.network.n_bus

    @property
    def has_pmu(self) -> bool:
        return len(self.pmu_blocks) > 0

    @cached_property
    def _h_stack(self) -> sp.csr_matrix:
        return sp.vstack([m.h for m in self.measurements], format="csr")

    def z_vector(self) -> np.ndarray:
        if any(m.z is None for m in self.measurements):
            raise ValueError("plan has unpopulated observations; call generate()")
        return np.array([m.z for m in self.measurements])

    def sigma_vector(self) -> np.ndarray:
        return np.array([m.sigma for m in self.measurements])

    def scale_vector(self) -> np.ndarray:
        return np.array([m.scale for m in self.measurements])

    def h_times(self, u: np.ndarray) -> np.ndarray:
        """All products H_l @ u stacked: (L, N) for vector u, (L, N, r) else."""
        L, n = len(self.measurements), self.n_bus
        out = self._h_stack @ u
        if u.ndim == 1:
            return out.reshape(L, n)
        return out.reshape(L, n, u.shape[1])

    def quadratic_forms(self, u: np.ndarray) -> np.ndarray:
        """v^H H_l v per measurement; for an N x r factor, summed over columns.

        The quadratic forms of Hermitian matrices are real; the O(eps)
        imaginary residue is discarded.
        """
        hu = self.h_times(u)
        if u.ndim == 1:
            return np.einsum("n,ln->l", u.conj(), hu).real
        return np.einsum("nc,lnc->l", u.conj(), hu).real

    def with_measurements(self, measurements: Sequence[Measurement],
                          pmu_blocks: Sequence[PmuBlock] | None = None) -> "MeasurementPlan":
        pmu = self.pmu_blocks if pmu_blocks is None else pmu_blocks
        return MeasurementPlan(self.network, measurements, pmu)


def evaluate(plan: MeasurementPlan, v: np.ndarray) -> np.ndarray:
    """Noise-free measurement vector at state v (honors stored scaling)."""
    return plan.quadratic_forms(np.asarray(v, dtype=complex))


def generate(plan: MeasurementPlan, v_true: np.ndarray,
             rng_seed) -> MeasurementPlan:
    """Populate observations with seeded Gaussian noise around the true values.

    PMU blocks receive independent complex noise with std sigma/sqrt(2) per
    real/imaginary part (total variance sigma^2).
    """
    rng = np.random.default_rng(rng_seed)
    v_true = np.asarray(v_true, dtype=complex)
    clean = plan.quadratic_forms(v_true)
    sigmas = plan.sigma_vector()
    noise = rng.standard_normal(len(clean)) * sigmas
    measurements = [replace(m, z=float(z))
                    for m, z in zip(plan.measurements, clean + noise)]
    pmu_blocks = []
    for blk in plan.pmu_blocks:
        clean_zeta = blk.phi @ v_true
        s = blk.sigma / np.sqrt(2.0)
        eps = (rng.standard_normal(len(clean_zeta)) +
               1j * rng.standard_normal(len(clean_zeta))) * s
        pmu_blocks.append(replace(blk, zeta=clean_zeta + eps))
    return plan.with_measurements(measurements, pmu_blocks)


def normalize(plan: MeasurementPlan) -> MeasurementPlan:
    """Rescale each (z, H) pair by 1/||H||_F; records the factor in `scale`.
    PMU blocks get the matching treatment: each row of Phi (and its zeta
    entry) is scaled to unit norm, recorded in `row_scale`.

    Idempotent: if any measurement already carries a non-unit scale the plan
    is returned unchanged.
    """
    if any(m.scale != 1.0 for m in plan.measurements):
        return plan
    measurements = []
    for m in plan.measurements:
        fro = np.linalg.norm(m.h.data) if m.h.nnz else 0.0
        if fro == 0.0:
            raise DegenerateMeasurementError(
                f"zero-norm H for {m.kind.element_label(plan.network)}")
        z = None if m.z is None else m.z / fro
        measurements.append(replace(m, h=(m.h * (1.0 / fro)).tocsr(), z=z,
                                    scale=1.0 / fro))
    pmu_blocks = []
    for blk in plan.pmu_blocks:
        norms = np.linalg.norm(blk.phi, axis=1)
        if (norms == 0.0).any():
            raise DegenerateMeasurementError(
                f"zero PMU row at bus {plan.network.index_to_id[blk.bus]}")
        s = 1.0 / norms
        pmu_blocks.append(replace(
            blk, phi=blk.phi * s[:, None],
            zeta=None if blk.zeta is None else blk.zeta * s,
            row_scale=s))
    return plan.with_measurements(measurements, pmu_blocks)


def apply_weights(plan: MeasurementPlan) -> MeasurementPlan:
    """Fold 1/sigma weighting into (z, H); off by default in all callers."""
    measurements = []
    for m in plan.measurements:
        if m.sigma <= 0:
            raise ValueError("weighting requires positive sigma")
        w = 1.0 / m.sigma
        z = None if m.z is None else m.z * w
        measurements.append(replace(m, h=(m.h * w).tocsr(), z=z, scale=m.scale * w))
    return plan.with_measurements(measurements)


def remove_measurements(plan: MeasurementPlan, indices) -> MeasurementPlan:
    """Plan with the given measurement positions dropped (PMU blocks kept)."""
    drop = set(int(i) for i in indices)
    kept = [m for i, m in enumerate(plan.measurements) if i not in drop]
    return plan.with_measurements(kept)


def default_plan(net: Network, profile: str = "paper_legacy",
                 pmu_buses: Sequence[int] = (),
                 sigmas: NoiseSigmas = NoiseSigmas(),
                 kinds: Sequence[MeasurementKind] | None = None) -> MeasurementPlan:
    """Standard meter placements.

    * ``paper_legacy``: squared voltage magnitude at every bus plus P/Q
      from-end flows on every in-service branch.
    * ``full``: legacy plus P/Q injections at every bus.
    * ``custom``: caller supplies `kinds` explicitly.

    Buses in `pmu_buses` get a PMU block and lose their bus-attached legacy
    meters (voltage and injections; branch flows are kept).
    """
    pmu_set = {int(b) for b in pmu_buses}
    bad = [b for b in pmu_set if not 0 <= b < net.n_bus]
    if bad:
        raise ValueError(f"PMU bus indices out of range: {bad}")
    if profile == "custom":
        if kinds is None:
            raise ValueError("profile 'custom' requires explicit kinds")
        chosen = list(kinds)
    elif profile in ("paper_legacy", "full"):
        live = net.in_service_branches()
        chosen = [MeasurementKind(MeasurementType.VMAG_SQ, bus=b.index)
                  for b in net.buses if b.index not in pmu_set]
        chosen += [MeasurementKind(MeasurementType.P_FLOW, branch=i)
                   for i, _ in live]
        chosen += [MeasurementKind(MeasurementType.Q_FLOW, branch=i)
                   for i, _ in live]
        if profile == "full":
            chosen += [MeasurementKind(MeasurementType.P_INJ, bus=b.index)
                       for b in net.buses if b.index not in pmu_set]
            chosen += [MeasurementKind(MeasurementType.Q_INJ, bus=b.index)
                       for b in net.buses if b.index not in pmu_set]
    else:
        raise ValueError(f"unknown plan profile {profile!r}")

    measurements = [Measurement(kind=k, h=build_h_matrix(net, k),
                                sigma=sigmas.for_kind(k.mtype))
                    for k in chosen]
    pmu_blocks = [PmuBlock(bus=b, phi=build_pmu_matrix(net, b), sigma=sigmas.pmu)
                  for b in sorted(pmu_set)]
    return MeasurementPlan(net, measurements, pmu_blocks)


# ---------------------------------------------------------------------------
# Plan serialization (H matrices are rebuilt on load, never stored)
# ---------------------------------------------------------------------------

def plan_to_json(plan: MeasurementPlan) -> str:
    net = plan.network
    meas = []
    for m in plan.measurements:
        entry: dict = {"kind": m.kind.mtype.value, "sigma": m.sigma,
                       "z": m.z, "scale": m.scale}
        if m.kind.bus is not None:
            entry["bus"] = net.index_to_id[m.kind.bus]
        if m.kind.branch is not None:
            entry["branch"] = m.kind.branch
            entry["from_end"] = m.kind.from_end
        meas.append(entry)
    pmu = [{"bus": net.index_to_id[blk.bus], "sigma": blk.sigma,
            "zeta": None if blk.zeta is None else
            [[z.real, z.imag] for z in blk.zeta],
            "row_scale": None if blk.row_scale is None else
            list(blk.row_scale)}
           for blk in plan.pmu_blocks]
    return json.dumps({"schema": 1, "measurements": meas, "pmu": pmu}, indent=2)


def plan_from_json(net: Network, text: str) -> MeasurementPlan:
    doc = json.loads(text)
    measurements = []
    for entry in doc["measurements"]:
        mtype = MeasurementType(entry["kind"])
        if "bus" in entry:
            kind = MeasurementKind(mtype, bus=net.id_to_index[int(entry["bus"])])
        else:
            kind = MeasurementKind(mtype, branch=int(entry["branch"]),
                                   from_end=bool(entry.get("from_end", True)))
        h = build_h_matrix(net, kind)
        scale = float(entry.get("scale", 1.0))
        if scale != 1.0:
            h = (h * scale).tocsr()
        z = entry.get("z")
        measurements.append(Measurement(kind=kind, h=h, sigma=float(entry["sigma"]),
                                        z=None if z is None else float(z),
                                        scale=scale))
    pmu_blocks = []
    for entry in doc.get("pmu", []):
        bus = net.id_to_index[int(entry["bus"])]
        zeta = entry.get("zeta")
        phi = build_pmu_matrix(net, bus)
        row_scale = entry.get("row_scale")
        if row_scale is not None:
            row_scale = np.asarray(row_scale, dtype=float)
            phi = phi * row_scale[:, None]
        pmu_blocks.append(PmuBlock(
            bus=bus, phi=phi, sigma=float(entry["sigma"]),
            zeta=None if zeta is None else
            np.array([complex(re, im) for re, im in zeta]),
            row_scale=row_scale))
    return MeasurementPlan(net, measurements, pmu_blocks)
