"""Built-in problem instances."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .chaplygin import (
    ChaplyginBundle,
    GroupChaplygin,
    chart_structure,
    group_chaplygin,
    so3,
    su2,
    u1,
    vector_group,
)
from .errors import UnknownScenarioError
from .geometry import ExprMetric, SRStructure

SKEW_EPSILON = 0.1


@dataclass
class Scenario:
    name: str
    description: str
    structure: SRStructure | None = None
    bundle: ChaplyginBundle | None = None
    group: GroupChaplygin | None = None
    oracles: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def require_structure(self) -> SRStructure:
        if self.structure is None:
            raise UnknownScenarioError(f"scenario {self.name!r} has no chart structure")
        return self.structure

    def require_bundle(self) -> ChaplyginBundle:
        if self.bundle is None:
            raise UnknownScenarioError(f"scenario {self.name!r} has no bundle")
        return self.bundle


def _grid(n: int, radius: float = 1.0, k: int = 3):
    axis = np.linspace(-radius, radius, k)
    return [np.array(p) for p in itertools.product(axis, repeat=n)]


def _heisenberg() -> Scenario:
    S = SRStructure([["1", "0", "-q2/2"], ["0", "1", "q1/2"]], [["0", "0", "1"]], name="heisenberg")
    # potential chosen so that the chart structure reproduces the frame above
    B = ChaplyginBundle(vector_group(1), [["q2/2", "-q1/2"]], name="heisenberg")
    return Scenario(
        "heisenberg",
        "Heisenberg group: contact distribution on R^3 as a bundle over R^2 with group R",
        S,
        B,
        oracles={
            "growth": [2, 3],
            "normal_geodesic": "v0=(1,0), multiplier c: (sin ct/c, (1-cos ct)/c, (ct - sin ct)/(2c^2))",
            "curvature": -1.0,
            "holonomy_unit_circle": np.pi,
        },
        tolerances={"coincidence": 1e-6},
    )


def _martinet() -> Scenario:
    S = SRStructure([["1", "0", "q2^2/2"], ["0", "1", "0"]], [["0", "0", "1"]], name="martinet")
    return Scenario(
        "martinet",
        "Martinet distribution; abnormal line through the origin",
        S,
        oracles={"growth_origin": [2, 2, 3], "growth_y1": [2, 3], "abnormal": "(t, 0, 0) with k constant"},
    )


def _skew_heisenberg() -> Scenario:
    eps = SKEW_EPSILON
    S = SRStructure(
        [["1", "0", "-q2/2"], ["0", "1", f"q1/2 + {eps!r}*q1^2"]],
        [["0.5", "0", "1"]],
        name="skew_heisenberg",
    )
    return Scenario(
        "skew_heisenberg",
        "perturbed Heisenberg frame with a rigging that is not a symmetry; straightest and shortest differ",
        S,
        oracles={"epsilon": eps},
        tolerances={"min_gap": 1e-3},
    )


def _hopf_su2() -> Scenario:
    base_metric = ExprMetric([["4/(1+q1^2+q2^2)^2", "0"], ["0", "4/(1+q1^2+q2^2)^2"]], 2)
    B = ChaplyginBundle(
        u1(),
        [["-q2/(1+q1^2+q2^2)", "q1/(1+q1^2+q2^2)"]],
        base_metric,
        name="hopf_su2",
    )
    return Scenario(
        "hopf_su2",
        "Hopf fibration: SU(2) with h = span(e3), and its U(1) bundle over the stereographic sphere",
        chart_structure(B, name="hopf_su2"),
        B,
        group_chaplygin(su2(), [2], [0, 1]),
        oracles={"s_geodesic_u_e1": "exp(t e1)", "base_curvature": 1.0},
        tolerances={"coincidence": 1e-6},
    )


def _ym_plane_so3() -> Scenario:
    B = ChaplyginBundle(so3(), [["0", "q1"], ["q2", "0"], ["0", "0"]], name="ym_plane_so3")
    return Scenario(
        "ym_plane_so3",
        "flat plane with an SO(3) Yang-Mills potential x dy e1 + y dx e2",
        bundle=B,
        oracles={"F12": "e1 - e2 - x y e3"},
    )


_BUILDERS = {
    "heisenberg": _heisenberg,
    "martinet": _martinet,
    "skew_heisenberg": _skew_heisenberg,
    "hopf_su2": _hopf_su2,
    "ym_plane_so3": _ym_plane_so3,
}

NAMES = tuple(_BUILDERS)


def validate(sc: Scenario) -> Scenario:
    if sc.structure is not None:
        sc.structure.validate(_grid(sc.structure.n))
    if sc.bundle is not None:
        sc.bundle.validate(_grid(sc.bundle.base_dim))
    return sc


def load(name: str) -> Scenario:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise UnknownScenarioError(f"unknown scenario {name!r}; choose from {', '.join(NAMES)}") from None
    return validate(builder())
