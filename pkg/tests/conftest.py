"""Shared fixtures: tiny hand-built networks, bundled cases, random-network
and planted-instance factories used by the oracle tests."""

from __future__ import annotations

import numpy as np
import pytest

from gridse.cases import case_path
from gridse.measurements import NoiseSigmas, default_plan, generate, normalize
from gridse.network import (Branch, Bus, BusType, Network, build_admittance,
                            load_case, parse_case)
from gridse.solvers import dc_initialize

LINE2_JSON = """{
  "base_mva": 100,
  "buses": [{"id": 1, "type": "slack"}, {"id": 2, "type": "pq"}],
  "branches": [{"from": 1, "to": 2, "r": 0.0, "x": 0.1}]
}"""

TRIANGLE3_JSON = """{
  "base_mva": 100,
  "buses": [{"id": 1, "type": "slack"}, {"id": 2, "type": "pq"},
            {"id": 3, "type": "pq"}],
  "branches": [{"from": 1, "to": 2, "r": 0.0, "x": 0.1},
               {"from": 2, "to": 3, "r": 0.0, "x": 0.1},
               {"from": 1, "to": 3, "r": 0.0, "x": 0.1}]
}"""


@pytest.fixture
def line2() -> Network:
    return parse_case(LINE2_JSON, "json")


@pytest.fixture
def triangle3() -> Network:
    return parse_case(TRIANGLE3_JSON, "json")


@pytest.fixture(scope="session")
def net14() -> Network:
    return load_case(case_path("ieee14.m"))


@pytest.fixture(scope="session")
def net118() -> Network:
    return load_case(case_path("ieee118.m"))


def make_network(buses: list[Bus], branches: list[Branch],
                 base_mva: float = 100.0) -> Network:
    ybus = build_admittance(buses, branches)
    return Network(buses=tuple(buses), branches=tuple(branches), ybus=ybus,
                   base_mva=base_mva, id_to_index={b.id: b.index for b in buses})


def random_network(rng: np.random.Generator, n_bus: int,
                   lossless: bool = False, plain: bool = False) -> Network:
    """Connected random network: a random spanning tree plus extra chords,
    with optional shunts, charging, and off-nominal taps."""
    buses = []
    for i in range(n_bus):
        shunt_b = 0.0 if (plain or rng.random() < 0.7) else float(rng.uniform(-0.2, 0.2))
        buses.append(Bus(id=i + 1, index=i,
                         bus_type=BusType.SLACK if i == 0 else BusType.PQ,
                         shunt_g=0.0, shunt_b=shunt_b))
    edges = set()
    for i in range(1, n_bus):
        j = int(rng.integers(0, i))
        edges.add((j, i))
    for _ in range(rng.integers(0, n_bus)):
        a, b = rng.integers(0, n_bus, 2)
        if a != b:
            edges.add((min(a, b), max(a, b)))
    branches = []
    for f, t in sorted(edges):
        r = 0.0 if lossless else float(rng.uniform(0.005, 0.08))
        x = float(rng.uniform(0.02, 0.3))
        b = 0.0 if (plain or rng.random() < 0.5) else float(rng.uniform(0.0, 0.1))
        tap = 1.0 if (plain or rng.random() < 0.7) else float(rng.uniform(0.9, 1.1))
        shift = 0.0 if (plain or rng.random() < 0.8) else float(rng.uniform(-0.1, 0.1))
        branches.append(Branch(from_idx=f, to_idx=t, r=r, x=x, charging_b=b,
                               tap_ratio=tap, shift=shift))
    return make_network(buses, branches)


def random_state(rng: np.random.Generator, n_bus: int, slack: int = 0,
                 angle_span: float = 0.35 * np.pi) -> np.ndarray:
    mag = rng.uniform(0.95, 1.05, n_bus)
    ang = rng.uniform(-angle_span, angle_span, n_bus)
    ang[slack] = 0.0
    return mag * np.exp(1j * ang)


def planted_instance(net: Network, seed: int, noisy: bool = False,
                     profile: str = "paper_legacy"):
    """(normalized plan, true state, dc start) with optionally zeroed noise."""
    rng = np.random.default_rng([seed, 77])
    v_true = random_state(rng, net.n_bus, net.slack_index)
    sigmas = NoiseSigmas() if noisy else NoiseSigmas(0.0, 0.0, 0.0, 0.0)
    plan = default_plan(net, profile, sigmas=sigmas)
    plan = normalize(generate(plan, v_true, [seed, 78]))
    return plan, v_true, dc_initialize(plan)
