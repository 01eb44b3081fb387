"""Characteristic curves of the annihilator of a distribution (abnormal geodesics).

Nothing here reads the horizontal metric: the curves depend on the frame and
rigging only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BlowUpError, KernelCollapsed, ZeroSection
from .geometry import SRStructure, structure_functions
from .integrate import DEFAULT_BOUND, Trajectory, step_count

KERNEL_TOL = 1e-8
ZERO_SECTION = 1e-12

Steer = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CodistState:
    """A point ``q`` and fibre coordinates ``k`` of ``k_a eta^a`` in the annihilator."""

    q: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        k = np.atleast_1d(np.asarray(self.k, dtype=float))
        if np.linalg.norm(k) <= ZERO_SECTION:
            raise ZeroSection("annihilator covector lies on the zero section", 0.0)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "k", k)


def _kernel_matrix(c: np.ndarray, k: np.ndarray, m: int) -> np.ndarray:
    """``M_ij = k_a c^a_ij`` with ``a`` over the rigging indices."""
    return np.einsum("a,aij->ij", k, c[m:, :m, :m])


def _kernel_basis(M: np.ndarray, tol: float, dim: int | None = None) -> np.ndarray:
    """Rows span the kernel; ``dim`` forces the dimension (smallest singular directions)."""
    _, s, vt = np.linalg.svd(M)
    m = M.shape[0]
    if dim is None:
        if s[0] == 0.0:
            dim = m
        else:
            dim = int(np.sum(s <= tol * s[0]))
    return vt[m - dim :]


def kernel_K(S: SRStructure, st: CodistState, tol: float = KERNEL_TOL) -> np.ndarray:
    """Orthonormal basis (rows, frame coefficients) of the kernel of ``k_a c^a_ij``."""
    c = structure_functions(S, st.q)
    return _kernel_basis(_kernel_matrix(c, st.k, S.m), tol)


def continuity_steer(prev: np.ndarray | None) -> Steer:
    """Project the previous direction onto the current kernel; first kernel vector otherwise."""

    def steer(q, k, basis):
        if prev is not None:
            w = basis.T @ (basis @ prev)
            nw = np.linalg.norm(w)
            if nw > 1e-12:
                return w / nw
        return basis[0]

    return steer


def _rhs(S: SRStructure, q, k, steer: Steer, dim: int | None, tol: float):
    """Velocity, covector rate, direction, ``|M w|`` and the kernel dimension found."""
    c = structure_functions(S, q)
    m = S.m
    M = _kernel_matrix(c, k, m)
    basis = _kernel_basis(M, tol, dim)
    if len(basis) == 0:
        return None, None, None, 0.0, 0
    w = np.asarray(steer(q, k, basis), dtype=float)
    w = w / np.linalg.norm(w)
    qdot = w @ S.horizontal(q)
    # k'_b = k_a c^a_{i b} w^i
    kdot = np.einsum("a,aib,i->b", k, c[m:, :m, m:], w)
    return qdot, kdot, w, float(np.linalg.norm(M @ w)), len(basis)


def abnormal_curve(S: SRStructure, st0: CodistState, T: float, h: float,
                   steer: Steer | None = None, tol: float = KERNEL_TOL,
                   bound: float = DEFAULT_BOUND) -> Trajectory:
    """Integrate a characteristic curve by RK4 with a kernel-valued direction.

    The returned trajectory carries ``k`` and the unit directions ``u``; the
    diagnostics hold the largest ``|M w|`` seen at any stage, the smallest
    ``|k|`` and the kernel dimension.  A change of kernel dimension stops the
    run early with status ``"kernel_dimension_changed"``.
    """
    n = S.n
    q = np.asarray(st0.q, dtype=float)
    k = np.asarray(st0.k, dtype=float)
    n_steps = step_count(T, h)
    dt = T / n_steps
    qs, ks, ws = [q], [k], []
    status = "ok"
    # the first stage at each node doubles as the kernel-dimension probe
    qd, kd, w, residual, dim = _rhs(S, q, k, steer or continuity_steer(None), None, tol)
    if dim == 0:
        raise KernelCollapsed("kernel is trivial at the initial point", 0.0)
    for i in range(n_steps):
        t = i * dt
        st = steer or continuity_steer(w)
        ws.append(w)
        y = np.concatenate([q, k])
        slopes = [np.concatenate([qd, kd])]
        for frac in (0.5, 0.5, 1.0):
            yy = y + frac * dt * slopes[-1]
            sq, sk, _, r, _ = _rhs(S, yy[:n], yy[n:], st, dim, tol)
            residual = max(residual, r)
            slopes.append(np.concatenate([sq, sk]))
        y = y + dt / 6 * (slopes[0] + 2 * slopes[1] + 2 * slopes[2] + slopes[3])
        q, k = y[:n], y[n:]
        if not np.all(np.isfinite(y)) or np.max(np.abs(q)) > bound:
            raise BlowUpError(f"state left the bound {bound:g} at t={t + dt:.6g}", t + dt)
        if np.linalg.norm(k) < ZERO_SECTION:
            raise ZeroSection(f"covector reached the zero section at t={t + dt:.6g}", t + dt)
        qs.append(q)
        ks.append(k)
        qd, kd, w_new, r, new_dim = _rhs(S, q, k, steer or continuity_steer(w), None, tol)
        if new_dim == 0:
            raise KernelCollapsed(f"kernel became trivial at t={t + dt:.6g}", t + dt)
        residual = max(residual, r)
        w = w_new
        if new_dim != dim:
            status = "kernel_dimension_changed"
            break
    ws.append(w)

    qs, ks = np.array(qs), np.array(ks)
    times = dt * np.arange(len(qs))
    diag = {
        "eq3_residual": residual,
        "min_k_norm": float(np.min(np.linalg.norm(ks, axis=1))),
        "kernel_dim": dim,
    }
    return Trajectory(times, qs, u=np.array(ws), k=ks, diagnostics=diag, status=status)
