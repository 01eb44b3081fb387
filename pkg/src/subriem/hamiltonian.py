"""Sub-Riemannian Hamiltonian, normal geodesics and PMP bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import MissingControls
from .geometry import SRStructure
from .integrate import DEFAULT_BOUND, Trajectory, relative_drift, rk4, rk4_floats, rk4_step


@dataclass(frozen=True)
class CotangentState:
    """A point ``q`` with a covector ``p`` in the coordinate coframe."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if q.shape != p.shape:
            raise ValueError("q and p must have the same length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("cotangent state must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)


def _qp(st) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(st, CotangentState):
        return st.q, st.p
    q, p = st
    return np.asarray(q, dtype=float), np.asarray(p, dtype=float)


def frame_pairings(S: SRStructure, q, p) -> np.ndarray:
    """``(<p, X_i(q)>)_i``."""
    return S.horizontal(q) @ np.asarray(p, dtype=float)


def sr_hamiltonian(S: SRStructure, st) -> float:
    q, p = _qp(st)
    px = frame_pairings(S, q, p)
    return 0.5 * float(px @ S.gD_inv @ px)


def hamiltonian_vector_field(S: SRStructure, st) -> tuple[np.ndarray, np.ndarray]:
    """``(dh/dp, -dh/dq)`` with frame Jacobians from automatic differentiation."""
    q, p = _qp(st)
    return _hamilton_rhs(S, q, p)


def _hamilton_rhs(S: SRStructure, q, p):
    V, J = S.frame_jet(q)
    m = S.m
    X = V[:m]
    w = S.gD_inv @ (X @ p)
    qdot = w @ X
    # J[i, a, k] = d X_i^a / dq^k
    pdot = -np.einsum("i,a,iak->k", w, p, J[:m])
    return qdot, pdot


def initial_covector(S: SRStructure, q, v, lam=None) -> np.ndarray:
    """The covector with ``<p, X_i> = (gD v)_i`` and ``<p, Y_a> = lam_a``."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    lam = np.zeros(S.n - S.m) if lam is None else np.asarray(lam, dtype=float)
    if v.shape != (S.m,) or lam.shape != (S.n - S.m,):
        raise ValueError(f"need {S.m} velocity coefficients and {S.n - S.m} multipliers")
    E = S.adapted_matrix(q)
    return np.linalg.solve(E.T, np.concatenate([S.gD @ v, lam]))


def covector_components(S: SRStructure, q, p) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`initial_covector`: returns ``(v, lam)``."""
    pe = S.adapted_matrix(q).T @ np.asarray(p, dtype=float)
    return S.gD_inv @ pe[: S.m], pe[S.m :]


def controls_from_covector(S: SRStructure, q, p) -> np.ndarray:
    return S.gD_inv @ frame_pairings(S, q, p)


def rigging_components(S: SRStructure, q, qdot) -> np.ndarray:
    """Rigging coefficients of a tangent vector in the adapted frame."""
    E = S.adapted_matrix(q)
    return np.linalg.solve(E, qdot)[S.m :]


def hamilton_rhs_floats(S: SRStructure):
    """Hamilton's equations on a flat float list ``(q, p)``, for the list-based integrator.

    The contractions are unrolled into generated straight-line code; zero
    entries of ``gD^{-1}`` are skipped.
    """
    n, m = S.n, S.m
    ginv = S.gD_inv.tolist()
    lines = ["def rhs(t, y):", f"    v, g = jet(y[:{n}])"]
    for i in range(m):
        terms = " + ".join(f"y[{n + a}] * v[{i * n + a}]" for a in range(n))
        lines.append(f"    px{i} = {terms}")
    for i in range(m):
        terms = [f"{ginv[i][j]!r} * px{j}" for j in range(m) if ginv[i][j] != 0.0]
        lines.append(f"    w{i} = {' + '.join(terms) or '0.0'}")
    qd = [" + ".join(f"w{i} * v[{i * n + a}]" for i in range(m)) for a in range(n)]
    for i in range(m):
        for a in range(n):
            lines.append(f"    c{i}_{a} = w{i} * y[{n + a}]")
    pd = []
    for k in range(n):
        pd.append("-(" + " + ".join(f"c{i}_{a} * g[{i * n + a}][{k}]" for i in range(m) for a in range(n)) + ")")
    lines.append(f"    return [{', '.join(qd + pd)}]")
    namespace = {"jet": S.horizontal_jet_raw}
    exec("\n".join(lines), namespace)
    return namespace["rhs"]


def normal_geodesic(S: SRStructure, q0, v0, lam=None, T: float = 1.0, h: float = 1e-3,
                    bound: float = DEFAULT_BOUND) -> Trajectory:
    """Projection of the Hamiltonian flow started at ``initial_covector(q0, v0, lam)``."""
    q0 = np.asarray(q0, dtype=float)
    p0 = initial_covector(S, q0, v0, lam)
    n = S.n
    times, ys = rk4_floats(hamilton_rhs_floats(S), np.concatenate([q0, p0]), T, h,
                           bound=bound, bound_count=n)
    q, p = ys[:, :n], ys[:, n:]
    return _with_diagnostics(S, Trajectory(times, q, p=p))


def _with_diagnostics(S: SRStructure, tr: Trajectory) -> Trajectory:
    """Controls from covectors plus energy, speed, horizontality and PMP records."""
    m = S.m
    F = S.frame_values_batch(tr.q)
    X = F[:, :m]
    pX = np.einsum("tia,ta->ti", X, tr.p)
    tr.u = pX @ S.gD_inv.T
    energy = 0.5 * np.einsum("ti,ti->t", pX, tr.u)
    speed = np.einsum("ti,ij,tj->t", tr.u, S.gD, tr.u)
    qdot = np.einsum("ti,tia->ta", tr.u, X)
    coeffs = np.linalg.solve(F.transpose(0, 2, 1), qdot[..., None])[..., 0]
    tr.diagnostics.update(
        energy_drift=relative_drift(energy),
        speed_drift=relative_drift(speed),
        horizontality=float(np.max(np.abs(coeffs[:, m:]), initial=0.0)),
        pmp_residual=pmp_normal_residual(S, tr),
    )
    return tr


def pmp_normal_residual(S: SRStructure, tr: Trajectory) -> float:
    """max_t ||gD u(t) - (<p(t), X_i(q(t))>)_i||."""
    if tr.u is None or tr.p is None:
        raise MissingControls("normal residual needs both covectors and controls")
    X = S.frame_values_batch(tr.q)[:, : S.m]
    pX = np.einsum("tia,ta->ti", X, tr.p)
    return float(np.max(np.linalg.norm(tr.u @ S.gD.T - pX, axis=1), initial=0.0))


def poisson_bracket(f: Callable, g: Callable, st, h_fd: float = 1e-5) -> float:
    """``{f, g} = sum_i df/dq_i dg/dp_i - df/dp_i dg/dq_i`` by central differences.

    ``f`` and ``g`` take ``(q, p)``.
    """
    q, p = _qp(st)
    n = len(q)

    def grads(fn):
        dq = np.empty(n)
        dp = np.empty(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = h_fd
            dq[i] = (fn(q + e, p) - fn(q - e, p)) / (2 * h_fd)
            dp[i] = (fn(q, p + e) - fn(q, p - e)) / (2 * h_fd)
        return dq, dp

    fq, fp = grads(f)
    gq, gp = grads(g)
    return float(fq @ gp - fp @ gq)


def _control_callable(u, m: int):
    if callable(u):
        return lambda t: np.asarray(u(t), dtype=float).reshape(m)
    const = np.asarray(u, dtype=float).reshape(m)
    return lambda t: const


def horizontal_curve_from_control(S: SRStructure, q0, u, T: float, h: float,
                                  bound: float = DEFAULT_BOUND) -> Trajectory:
    """Integrate ``q' = u^i(t) X_i(q)``; energy and length by Simpson quadrature over the steps."""
    uf = _control_callable(u, S.m)
    q0 = np.asarray(q0, dtype=float)

    def rhs(t, q):
        return uf(t) @ S.horizontal(q)

    times, q = rk4(rhs, q0, T, h, bound=bound)
    dt = times[1] - times[0]
    u_nodes = np.array([uf(t) for t in times])
    u_mid = np.array([uf(t + 0.5 * dt) for t in times[:-1]])
    quad = lambda a: np.einsum("ti,ij,tj->t", a, S.gD, a)
    e0, em = quad(u_nodes), quad(u_mid)
    energy = 0.5 * dt / 6 * float(np.sum(e0[:-1] + 4 * em + e0[1:]))
    s0, sm = np.sqrt(e0), np.sqrt(em)
    length = dt / 6 * float(np.sum(s0[:-1] + 4 * sm + s0[1:]))
    return Trajectory(times, q, u=u_nodes, diagnostics={"energy": energy, "length": length})


def flow_pullback_pairing(S: SRStructure, tr: Trajectory, w0) -> np.ndarray:
    """``<p(t), w(t)>`` with ``w`` pushed forward by the flow of ``u^i(t) X_i``.

    The control is taken from the trajectory by spline interpolation and
    ``(q, p, w)`` are integrated together, so the pairing should be constant.
    """
    if tr.p is None or tr.u is None:
        raise MissingControls("pullback check needs covectors and controls")
    n, m = S.n, S.m
    uf = tr.control_function()

    def rhs(t, y):
        q, p, w = y[:n], y[n : 2 * n], y[2 * n :]
        V, J = S.frame_jet(q)
        u = uf(t)
        qd = u @ V[:m]
        Ju = np.einsum("i,iak->ak", u, J[:m])
        return np.concatenate([qd, -p @ Ju, Ju @ w])

    times = tr.times
    y = np.concatenate([tr.q[0], tr.p[0], np.asarray(w0, dtype=float)])
    out = [float(y[n : 2 * n] @ y[2 * n :])]
    for i in range(len(times) - 1):
        y = rk4_step(rhs, times[i], y, times[i + 1] - times[i])
        out.append(float(y[n : 2 * n] @ y[2 * n :]))
    return np.array(out)


def closed_form_heisenberg(t, c: float) -> np.ndarray:
    """Normal geodesic of the symmetric Heisenberg frame from 0 with v0 = (1, 0), multiplier c."""
    t = np.asarray(t, dtype=float)
    if c == 0.0:
        return np.stack([t, 0 * t, 0 * t], axis=-1)
    return np.stack(
        [np.sin(c * t) / c, (1 - np.cos(c * t)) / c, (c * t - np.sin(c * t)) / (2 * c * c)],
        axis=-1,
    )
