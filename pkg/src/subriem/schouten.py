"""Schouten partial connection of a rigged distribution: Christoffels, S-geodesics, transport, curvature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import NonHorizontalCurve
from .geometry import (
    SRStructure,
    christoffels_from_jet,
    metric_extension,
    structure_functions,
)
from .hamiltonian import normal_geodesic
from .integrate import DEFAULT_BOUND, Trajectory, relative_drift, rk4, rk4_step

HORIZONTAL_TOL = 1e-6


@dataclass
class SchoutenTable:
    """``gamma[i, j, k]``: coefficient of ``X_i`` in ``nabla_{X_j} X_k`` at ``q``."""

    q: np.ndarray
    gamma: np.ndarray
    structure: np.ndarray

    def torsion_residual(self) -> float:
        m = self.gamma.shape[0]
        c = self.structure[:m, :m, :m]
        return float(np.max(np.abs(self.gamma - self.gamma.transpose(0, 2, 1) - c)))

    def metric_residual(self, gD) -> float:
        low = np.einsum("ia,ajk->ijk", gD, self.gamma)
        return float(np.max(np.abs(low + np.einsum("kji->ijk", low))))


def _koszul(c: np.ndarray, gD: np.ndarray) -> np.ndarray:
    """Christoffels from horizontal structure functions and a constant ``gD``.

    ``2 gD(nabla_j X_k, X_i) = gD([X_j,X_k]_D, X_i) - gD(X_k, [X_j,X_i]_D) - gD(X_j, [X_k,X_i]_D)``.
    """
    m = gD.shape[0]
    ch = np.einsum("ia,ajk->ijk", gD, c[:m, :m, :m])  # ch[i, j, k] = gD(X_i, [X_j, X_k]_D)
    low = 0.5 * (ch - np.einsum("kji->ijk", ch) - np.einsum("jki->ijk", ch))
    return np.einsum("ia,ajk->ijk", np.linalg.inv(gD), low)


def schouten_christoffels(S: SRStructure, q) -> SchoutenTable:
    q = np.asarray(q, dtype=float)
    c = structure_functions(S, q)
    return SchoutenTable(q, _koszul(c, S.gD), c)


def _gamma(S: SRStructure, q) -> np.ndarray:
    return _koszul(structure_functions(S, q), S.gD)


def s_geodesic(S: SRStructure, q0, v0, T: float, h: float, bound: float = DEFAULT_BOUND) -> Trajectory:
    """Horizontal autoparallels: ``q' = u^i X_i``, ``u'^i = -Gamma^i_jk u^j u^k``."""
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    n, m = S.n, S.m
    if v0.shape != (m,):
        raise ValueError(f"need {m} velocity coefficients")

    def rhs(t, y):
        q, u = y[:n], y[n:]
        X = S.horizontal(q)
        return np.concatenate([u @ X, -np.einsum("ijk,j,k->i", _gamma(S, q), u, u)])

    times, ys = rk4(rhs, np.concatenate([q0, v0]), T, h, bound=bound, bound_slice=slice(0, n))
    q, u = ys[:, :n], ys[:, n:]
    speed = np.einsum("ti,ij,tj->t", u, S.gD, u)
    return Trajectory(times, q, u=u, diagnostics={"speed_drift": relative_drift(speed)})


def horizontal_controls(S: SRStructure, tr: Trajectory, tol: float = HORIZONTAL_TOL) -> np.ndarray:
    """Frame coefficients of the curve's velocity; rejects curves leaving D."""
    qdot = tr.interpolant("q")(tr.times, 1)
    F = S.frame_values_batch(tr.q)
    coeffs = np.linalg.solve(F.transpose(0, 2, 1), qdot[..., None])[..., 0]
    scale = 1.0 + np.linalg.norm(qdot, axis=1)
    off = np.max(np.abs(coeffs[:, S.m :]), axis=1, initial=0.0) / scale
    if np.max(off, initial=0.0) > tol:
        t = float(tr.times[int(np.argmax(off))])
        raise NonHorizontalCurve(f"curve leaves the distribution near t={t:.6g}")
    return coeffs[:, : S.m]


def parallel_transport(S: SRStructure, tr: Trajectory, w0) -> Trajectory:
    """Transport frame coefficients ``w`` along a horizontal curve: ``w' = -Gamma(u, w)``.

    The curve and its controls are interpolated by cubic splines between the
    recorded nodes; the result shares the curve's time grid.
    """
    u_nodes = horizontal_controls(S, tr)
    if tr.u is not None:
        u_nodes = np.asarray(tr.u, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (S.m,) or not np.all(np.isfinite(w0)):
        raise ValueError(f"w0 must be {S.m} finite coefficients")
    qs = tr.interpolant("q")
    us = CubicSpline(tr.times, u_nodes, axis=0)

    def rhs(t, w):
        return -np.einsum("ijk,j,k->i", _gamma(S, qs(t)), us(t), w)

    out = [w0]
    w = w0
    for i in range(len(tr.times) - 1):
        w = rk4_step(rhs, tr.times[i], w, tr.times[i + 1] - tr.times[i])
        out.append(w)
    out = np.array(out)
    norm = np.einsum("ti,ij,tj->t", out, S.gD, out)
    return Trajectory(tr.times, tr.q, u=out, diagnostics={"norm_drift": relative_drift(norm)})


def schouten_curvature(S: SRStructure, q, indices=None, h: float = 1e-5) -> np.ndarray:
    """Frame components of ``R(X_i, X_j) X_k``.

    ``R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_{[X,Y]_D} Z - [[X,Y]_V, Z]_D``,
    with derivatives of Gamma along the frame by central differences.
    Returns the full array ``R[b, i, j, k]`` when ``indices`` is None.
    """
    q = np.asarray(q, dtype=float)
    m = S.m
    c = structure_functions(S, q)
    G = _koszul(c, S.gD)
    X = S.horizontal(q)
    dG = np.empty((m,) + G.shape)  # dG[i] = X_i(Gamma)
    for i in range(m):
        dG[i] = (_gamma(S, q + h * X[i]) - _gamma(S, q - h * X[i])) / (2 * h)
    # term[b, i, j, k]
    R = np.einsum("ibjk->bijk", dG) - np.einsum("jbik->bijk", dG)
    R += np.einsum("ajk,bia->bijk", G, G) - np.einsum("aik,bja->bijk", G, G)
    R -= np.einsum("aij,bak->bijk", c[:m, :m, :m], G)
    R -= np.einsum("aij,bak->bijk", c[m:, :m, :m], c[:m, m:, :m])
    if indices is None:
        return R
    i, j, k = indices
    return R[:, i, j, k]


def compare_straightest_shortest(S: SRStructure, q0, v0, T: float, h: float):
    """``(max_t |q_S - q_H|, (times, gap))`` for the S-geodesic and the lambda = 0 normal geodesic."""
    ts = s_geodesic(S, q0, v0, T, h)
    th = normal_geodesic(S, q0, v0, None, T, h)
    gap = np.linalg.norm(ts.q - th.q, axis=1)
    return float(np.max(gap)), (ts.times, gap)


def projected_levi_civita_residual(S: SRStructure, tr: Trajectory) -> float:
    """max_t |pr_D(q'' + Gamma^g(q', q'))| for an S-geodesic, in the extended chart metric.

    ``q''`` is taken from the S-geodesic equations themselves, not from differencing.
    """
    g = metric_extension(S)
    res = 0.0
    for q, u in zip(tr.q, tr.u):
        V, J = S.frame_jet(q)
        X = V[: S.m]
        qd = u @ X
        ud = -np.einsum("ijk,j,k->i", _gamma(S, q), u, u)
        qdd = ud @ X + np.einsum("i,iak,k->a", u, J[: S.m], qd)
        Gg = christoffels_from_jet(*g.jet(q))
        acc = qdd + np.einsum("ijk,j,k->i", Gg, qd, qd)
        coeffs = np.linalg.solve(V.T, acc)
        res = max(res, float(np.max(np.abs(coeffs[: S.m]))))
    return res


__all__ = [
    "SchoutenTable",
    "schouten_christoffels",
    "s_geodesic",
    "parallel_transport",
    "schouten_curvature",
    "compare_straightest_shortest",
    "projected_levi_civita_residual",
    "horizontal_controls",
]
