"""Chaplygin structures on principal bundles with matrix structure groups.

A bundle is described over a base chart by a potential ``A^a_i(x)`` (the
pullback of the connection form along the identity section) and a matrix
Lie group.  For abelian groups a global chart of ``M x G`` is available and
feeds the chart-based solvers; nonabelian groups go through matrix ODEs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import expm, logm, polar

from .errors import (
    ConfigError,
    DegenerateMetricError,
    NotBiInvariant,
    NotBracketGenerating,
    NotReductive,
    NotSubalgebra,
    PreconditionError,
    UnsupportedGroupChart,
)
from .fieldspec import Expr, as_expr, compile_jet
from .geometry import (
    ExprMetric,
    SRStructure,
    VectorField,
    bracket,
    christoffels_from_jet,
    riemannian_geodesic,
)
from .hamiltonian import normal_geodesic, sr_hamiltonian
from .integrate import DEFAULT_BOUND, Trajectory, relative_drift, rk4, step_count
from .schouten import _koszul

ALGEBRA_TOL = 1e-12
INVARIANCE_TOL = 1e-10
REPROJECT_EVERY = 100
REPROJECT_TRIGGER = 1e-9

_GAUSS = (0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6)


# ---------------------------------------------------------------------------
# matrix groups


class MatrixLieGroup:
    """A matrix Lie group given by a basis of its Lie algebra and an algebra metric.

    ``kind`` selects the drift correction: ``"orthogonal"`` and ``"unitary"``
    use polar re-projection, ``"translation"`` restores the block shape of
    ``[[1, z], [0, I]]`` and ``"general"`` does nothing.
    """

    def __init__(self, name: str, basis: Sequence, g_alg=None, kind: str = "general"):
        self.name = name
        self.basis = [np.asarray(b) for b in basis]
        self.dim = len(self.basis)
        self.d = self.basis[0].shape[0]
        self.kind = kind
        self.complex = any(np.iscomplexobj(b) for b in self.basis)
        self.g_alg = np.eye(self.dim) if g_alg is None else np.asarray(g_alg, dtype=float)
        if self.g_alg.shape != (self.dim, self.dim) or not np.allclose(self.g_alg, self.g_alg.T):
            raise ConfigError("algebra metric must be symmetric and match the basis")
        if np.min(np.linalg.eigvalsh(self.g_alg)) <= 0:
            raise ConfigError("algebra metric must be positive definite")
        flat = np.array([self._realify(b) for b in self.basis]).T
        if np.linalg.matrix_rank(flat) != self.dim:
            raise ConfigError("algebra basis is linearly dependent")
        self._pinv = np.linalg.pinv(flat)
        self._flat = flat
        c = np.empty((self.dim, self.dim, self.dim))
        worst = 0.0
        for b in range(self.dim):
            for g in range(self.dim):
                comm = self.basis[b] @ self.basis[g] - self.basis[g] @ self.basis[b]
                coef = self._pinv @ self._realify(comm)
                worst = max(worst, float(np.max(np.abs(flat @ coef - self._realify(comm)))))
                c[:, b, g] = coef
        if worst > ALGEBRA_TOL:
            raise ConfigError("basis is not closed under the commutator")
        self.c = c
        if self.jacobi_residual() > ALGEBRA_TOL:
            raise ConfigError("structure constants violate the Jacobi identity")
        self.is_ad_invariant = self.invariance_residual() < INVARIANCE_TOL
        self.is_abelian = bool(np.all(np.abs(c) < ALGEBRA_TOL))

    def __repr__(self):
        return f"MatrixLieGroup({self.name!r}, dim={self.dim}, d={self.d})"

    @staticmethod
    def _realify(mat) -> np.ndarray:
        mat = np.asarray(mat)
        return np.concatenate([mat.real.ravel(), mat.imag.ravel()])

    # algebra ---------------------------------------------------------------
    def element(self, coeffs) -> np.ndarray:
        return np.tensordot(np.asarray(coeffs, dtype=float), np.array(self.basis), axes=1)

    def coeffs(self, mat) -> np.ndarray:
        return self._pinv @ self._realify(mat)

    def lie_bracket(self, a, b) -> np.ndarray:
        return np.einsum("abc,b,c->a", self.c, a, b)

    def ad(self, a) -> np.ndarray:
        """Matrix of ``ad_a`` in the basis."""
        return np.einsum("abc,b->ac", self.c, a)

    def jacobi_residual(self) -> float:
        c = self.c
        # [e_a, [e_b, e_c]] + cyclic
        t = np.einsum("dae,ebc->dabc", c, c)
        res = t + t.transpose(0, 2, 3, 1) + t.transpose(0, 3, 1, 2)
        return float(np.max(np.abs(res), initial=0.0))

    def invariance_residual(self) -> float:
        """max |g([a,b],c) + g(b,[a,c])| over basis triples."""
        G = self.g_alg
        low = np.einsum("xd,dab->xab", G, self.c)  # low[x, a, b] = g(e_x, [e_a, e_b])
        return float(np.max(np.abs(np.einsum("cab->abc", low) + np.einsum("bac->abc", low)), initial=0.0))

    # group -------------------------------------------------------------------
    def identity(self) -> np.ndarray:
        return np.eye(self.d, dtype=complex if self.complex else float)

    def exp(self, a) -> np.ndarray:
        return expm(self.element(a))

    def defect(self, g) -> float:
        if self.kind in ("orthogonal", "unitary"):
            return float(np.max(np.abs(g.conj().T @ g - np.eye(self.d))))
        if self.kind == "translation":
            return float(np.max(np.abs(g[1:] - np.eye(self.d)[1:])) + abs(g[0, 0] - 1))
        return 0.0

    def project(self, g) -> np.ndarray:
        if self.kind in ("orthogonal", "unitary"):
            u, _ = polar(g)
            return u
        if self.kind == "translation":
            out = np.eye(self.d, dtype=g.dtype)
            out[0, 1:] = g[0, 1:]
            return out
        return g

    # chart (abelian groups only) ------------------------------------------------
    @property
    def has_chart(self) -> bool:
        return self.is_abelian and self.kind in ("translation", "orthogonal") and not self.complex

    def chart(self, g) -> np.ndarray:
        """Exponential coordinates of ``g``: ``g = exp(z^a e_a)``."""
        self._require_chart()
        if self.kind == "translation":
            return self.coeffs(np.asarray(g) - np.eye(self.d))
        return self.coeffs(np.real(logm(g)))

    def from_chart(self, z) -> np.ndarray:
        self._require_chart()
        return self.exp(z)

    def _require_chart(self):
        if not self.has_chart:
            raise UnsupportedGroupChart(f"group {self.name!r} has no global chart here")


def su2() -> MatrixLieGroup:
    """SU(2) with ``e_k = -(i/2) sigma_k``, so ``[e1, e2] = e3``; metric identity."""
    s = [
        np.array([[0, 1], [1, 0]], dtype=complex),
        np.array([[0, -1j], [1j, 0]], dtype=complex),
        np.array([[1, 0], [0, -1]], dtype=complex),
    ]
    return MatrixLieGroup("su2", [-0.5j * m for m in s], np.eye(3), kind="unitary")


def so3() -> MatrixLieGroup:
    """SO(3) with ``(L_k)_ij = -eps_kij``; metric minus the Killing form (``2 I``)."""
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k], eps[j, i, k] = 1.0, -1.0
    basis = [-eps[k] for k in range(3)]
    return MatrixLieGroup("so3", basis, 2.0 * np.eye(3), kind="orthogonal")


def vector_group(k: int, g_alg=None) -> MatrixLieGroup:
    """``R^k`` as the translations ``[[1, z], [0, I]]``."""
    basis = []
    for a in range(k):
        e = np.zeros((k + 1, k + 1))
        e[0, a + 1] = 1.0
        basis.append(e)
    return MatrixLieGroup(f"R{k}", basis, g_alg, kind="translation")


def u1(g_alg=None) -> MatrixLieGroup:
    """U(1) as SO(2)."""
    return MatrixLieGroup("u1", [np.array([[0.0, -1.0], [1.0, 0.0]])], g_alg, kind="orthogonal")


GROUPS: dict[str, Callable[..., MatrixLieGroup]] = {
    "su2": su2,
    "so3": so3,
    "u1": u1,
    "R1": lambda: vector_group(1),
    "R2": lambda: vector_group(2),
}


# ---------------------------------------------------------------------------
# bundles


class ChaplyginBundle:
    """Base chart of dimension ``base_dim``, metric ``gM``, potential ``A[a][i]`` and a group."""

    def __init__(self, group: MatrixLieGroup, potential, gM=None, base_dim: int | None = None,
                 name: str = ""):
        if base_dim is None:
            base_dim = len(potential[0])
        self.base_dim = base_dim
        self.group = group
        if len(potential) != group.dim or any(len(row) != base_dim for row in potential):
            raise ConfigError(f"potential must be {group.dim} x {base_dim}")
        self.A = [[as_expr(e, base_dim) for e in row] for row in potential]
        if gM is None:
            gM = ExprMetric.constant(np.eye(base_dim))
        elif not isinstance(gM, ExprMetric):
            gM = ExprMetric(gM, base_dim)
        self.gM = gM
        self.name = name
        self._A = compile_jet([e for row in self.A for e in row], base_dim)

    def __repr__(self):
        return f"ChaplyginBundle({self.name!r}, base_dim={self.base_dim}, group={self.group.name})"

    def potential(self, x) -> np.ndarray:
        """``A[a, i]`` at ``x``."""
        return np.array(self._A(x)[0]).reshape(self.group.dim, self.base_dim)

    def potential_jet(self, x) -> tuple[np.ndarray, np.ndarray]:
        """``A[a, i]`` and ``dA[a, i, j] = d_j A^a_i``."""
        v, g = self._A(x)
        k, b = self.group.dim, self.base_dim
        return np.array(v).reshape(k, b), np.array(g).reshape(k, b, b)

    def validate(self, points) -> None:
        for x in points:
            if np.min(np.linalg.eigvalsh(self.gM(x))) <= 0:
                raise DegenerateMetricError(f"base metric not positive at x={list(x)}")
            self.potential(x)


def connection_eval(B: ChaplyginBundle, x, g, xdot, gdot) -> np.ndarray:
    """``g^{-1} g' + Ad_{g^{-1}} (A^a_i(x) x'^i e_a)`` in the algebra basis."""
    g = np.asarray(g)
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetricError("group element not invertible") from exc
    Ax = B.group.element(B.potential(x) @ np.asarray(xdot, dtype=float))
    return B.group.coeffs(ginv @ np.asarray(gdot) + ginv @ Ax @ g)


def curvature_F(B: ChaplyginBundle, x) -> np.ndarray:
    """``F[a, i, j] = d_i A^a_j - d_j A^a_i + c^a_bc A^b_i A^c_j``."""
    A, dA = B.potential_jet(x)
    # dA[a, j, i] = d_i A^a_j
    F = dA.transpose(0, 2, 1) - dA
    return F + np.einsum("abc,bi,cj->aij", B.group.c, A, A)


def lifted_fields(B: ChaplyginBundle) -> list[VectorField]:
    """Horizontal lifts ``(e_i, -A_i(x) g)`` as fields on ``R^base x R^{d x d}`` (real groups)."""
    G = B.group
    if G.complex:
        raise UnsupportedGroupChart("lifted matrix fields need a real representation")
    nb, d = B.base_dim, G.d
    n = nb + d * d
    gvar = [[Expr.var(nb + r * d + s, n) for s in range(d)] for r in range(d)]
    fields = []
    for i in range(nb):
        comps = [Expr.const(1.0 if j == i else 0.0, n) for j in range(nb)]
        # (A_i) = sum_a A^a_i e_a as a matrix of expressions
        Ai = [[Expr.const(0.0, n) for _ in range(d)] for _ in range(d)]
        for a in range(G.dim):
            Aai = B.A[a][i].embed(n)
            for r in range(d):
                for t in range(d):
                    coef = float(G.basis[a][r, t])
                    if coef != 0.0:
                        Ai[r][t] = Ai[r][t] + coef * Aai
        for r in range(d):
            for s in range(d):
                e = Expr.const(0.0, n)
                for t in range(d):
                    e = e - Ai[r][t] * gvar[t][s]
                comps.append(e)
        fields.append(VectorField(comps, n))
    return fields


def curvature_from_brackets(B: ChaplyginBundle, x) -> np.ndarray:
    """Curvature as ``-conn([X_i, X_j])`` of lifted fields at ``(x, identity)``."""
    G = B.group
    nb, d = B.base_dim, G.d
    fields = lifted_fields(B)
    q = np.concatenate([np.asarray(x, dtype=float), np.eye(d).ravel()])
    F = np.zeros((G.dim, nb, nb))
    for i in range(nb):
        for j in range(i + 1, nb):
            br = bracket(fields[i], fields[j], q)
            w = connection_eval(B, x, np.eye(d), br[:nb], br[nb:].reshape(d, d))
            F[:, i, j] = -w
            F[:, j, i] = w
    return F


# ---------------------------------------------------------------------------
# chart path (abelian groups)


def _metric_frame_scales(B: ChaplyginBundle):
    """Constant base metric -> (None, gM); diagonal metric -> (1/sqrt(g_ii), I)."""
    gM = B.gM
    if gM.is_constant:
        return None, gM(np.zeros(B.base_dim))
    if gM.is_diagonal:
        return [gM.components[i][i].apply("sqrt") for i in range(B.base_dim)], np.eye(B.base_dim)
    raise UnsupportedGroupChart("chart structure needs a constant or diagonal base metric")


def chart_structure(B: ChaplyginBundle, name: str = "") -> SRStructure:
    """Distribution ``X_i = d_i - A^a_i d_{z_a}`` on ``M x G`` in exponential coordinates.

    The rigging is the fundamental fields ``d_{z_a}``.  A diagonal non-constant
    base metric is absorbed by rescaling the frame to be orthonormal.
    """
    G = B.group
    if not G.has_chart:
        raise UnsupportedGroupChart(f"group {G.name!r} has no global chart; use the lift or Wong path")
    nb, k = B.base_dim, G.dim
    n = nb + k
    scales, gD = _metric_frame_scales(B)
    X = []
    for i in range(nb):
        comps = [Expr.const(1.0 if j == i else 0.0, n) for j in range(nb)]
        comps += [-B.A[a][i].embed(n) for a in range(k)]
        if scales is not None:
            s = scales[i].embed(n)
            zero = Expr.const(0.0, n)
            comps = [c if c == zero else c / s for c in comps]
        X.append(VectorField(comps, n))
    Y = [VectorField.coordinate(nb + a, n) for a in range(k)]
    return SRStructure(X, Y, gD, name=name or B.name)


def standard_extension_metric(B: ChaplyginBundle) -> ExprMetric:
    """``[[gM + A^T G A, A^T G], [G A, G]]`` on the chart ``(x, z)``; ``G`` the algebra metric."""
    G = B.group
    if not G.has_chart:
        raise UnsupportedGroupChart(f"group {G.name!r} has no global chart")
    nb, k = B.base_dim, G.dim
    n = nb + k
    Ga = G.g_alg
    A = [[B.A[a][i].embed(n) for i in range(nb)] for a in range(k)]
    GA = [[sum((float(Ga[a, b]) * A[b][i] for b in range(k)), Expr.const(0.0, n)) for i in range(nb)]
          for a in range(k)]
    comps = [[Expr.const(0.0, n) for _ in range(n)] for _ in range(n)]
    for i in range(nb):
        for j in range(i, nb):
            e = B.gM.components[i][j].embed(n)
            for a in range(k):
                e = e + A[a][i] * GA[a][j]
            comps[i][j] = comps[j][i] = e
        for a in range(k):
            comps[i][nb + a] = GA[a][i]
            comps[nb + a][i] = GA[a][i]
    for a in range(k):
        for b in range(k):
            comps[nb + a][nb + b] = Expr.const(float(Ga[a, b]), n)
    return ExprMetric(comps, n)


def chart_connection(B: ChaplyginBundle, q, v) -> np.ndarray:
    """Connection form on the abelian chart: ``z' + A(x) x'``."""
    nb = B.base_dim
    return np.asarray(v[nb:], dtype=float) + B.potential(q[:nb]) @ np.asarray(v[:nb], dtype=float)


def bundle_hamiltonians(B: ChaplyginBundle, S: SRStructure | None = None):
    """``(h_Q, h_F, h_D)`` as functions of ``(q, p)`` on the chart cotangent bundle."""
    S = chart_structure(B) if S is None else S
    gQ = standard_extension_metric(B)
    nb = B.base_dim
    Ginv = np.linalg.inv(B.group.g_alg)

    def h_Q(q, p):
        return 0.5 * float(p @ np.linalg.solve(gQ(q), p))

    def h_F(q, p):
        pz = p[nb:]
        return 0.5 * float(pz @ Ginv @ pz)

    def h_D(q, p):
        return sr_hamiltonian(S, (q, p))

    return h_Q, h_F, h_D


def charge_conservation_check(B: ChaplyginBundle, tr: Trajectory, alpha: int) -> float:
    """max_t |g^Q(e*_a, q'(t)) - g^Q(e*_a, q'(0))| along a chart geodesic of the standard extension."""
    if not B.group.is_ad_invariant:
        raise NotBiInvariant("charge conservation needs an Ad-invariant algebra metric")
    nb = B.base_dim
    G = B.group.g_alg
    vals = np.array([(G @ chart_connection(B, q, v))[alpha] for q, v in zip(tr.q, tr.v)])
    return float(np.max(np.abs(vals - vals[0])))


def bundle_geodesic(B: ChaplyginBundle, q0, w, T: float, h: float) -> Trajectory:
    """Geodesic of the standard extension in the chart."""
    return riemannian_geodesic(standard_extension_metric(B), q0, w, T, h)


def factorization_check(B: ChaplyginBundle, q0, w, a, T: float, h: float,
                        S: SRStructure | None = None) -> tuple[float, Trajectory, Trajectory]:
    """Compare ``gamma_w(t) exp(t a)`` with the normal geodesic of matching data.

    Needs ``conn(w) = -a``.  The normal geodesic starts at ``q0`` with the
    horizontal part of ``w`` and multipliers ``lam_a = -g_alg(a, e_a)``.
    Returns the maximal chart deviation and both curves.
    """
    S = chart_structure(B) if S is None else S
    q0 = np.asarray(q0, dtype=float)
    w = np.asarray(w, dtype=float)
    a = np.asarray(a, dtype=float)
    nb = B.base_dim
    if np.linalg.norm(chart_connection(B, q0, w) + a) >= 1e-10:
        raise PreconditionError("initial velocity must satisfy conn(w) = -a")
    gw = bundle_geodesic(B, q0, w, T, h)
    prod = gw.q.copy()
    prod[:, nb:] += gw.times[:, None] * a[None, :]
    horizontal = w.copy()
    horizontal[nb:] += a
    coeffs = np.linalg.solve(S.adapted_matrix(q0), horizontal)
    lam = -(B.group.g_alg @ a)
    sr = normal_geodesic(S, q0, coeffs[: S.m], lam, T, h)
    dev = float(np.max(np.linalg.norm(prod - sr.q, axis=1)))
    return dev, Trajectory(gw.times, prod), sr


# ---------------------------------------------------------------------------
# matrix-group path


@dataclass
class GroupCurve:
    """Base curve ``x(t)`` and group curve ``g(t)`` on a common time grid."""

    times: np.ndarray
    x: np.ndarray
    g: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def chart(self, group: MatrixLieGroup) -> np.ndarray:
        return np.array([group.chart(gi) for gi in self.g])

    def to_trajectory(self, group: MatrixLieGroup | None = None) -> Trajectory:
        if group is not None and group.has_chart:
            return Trajectory(self.times, np.hstack([self.x, self.chart(group)]), diagnostics=self.diagnostics)
        flat = self.g.reshape(len(self.times), -1)
        if np.iscomplexobj(flat):
            flat = np.hstack([flat.real, flat.imag])
        return Trajectory(self.times, np.hstack([self.x, flat]), diagnostics=self.diagnostics)


def base_curve_from_trajectory(tr: Trajectory):
    """Spline interpolants ``(x(t), x'(t))``; the velocity uses ``tr.v`` when recorded."""
    xs = CubicSpline(tr.times, tr.q, axis=0)
    if tr.v is not None:
        vs = CubicSpline(tr.times, tr.v, axis=0)
        return xs, vs
    return xs, xs.derivative()


def _magnus_step(omega: Callable[[float], np.ndarray], t: float, dt: float) -> np.ndarray:
    """Fourth-order Magnus exponent for ``g' = Omega(t) g`` over one step."""
    A1 = omega(t + _GAUSS[0] * dt)
    A2 = omega(t + _GAUSS[1] * dt)
    return 0.5 * dt * (A1 + A2) + (np.sqrt(3) / 12) * dt * dt * (A2 @ A1 - A1 @ A2)


def horizontal_lift(B: ChaplyginBundle, x: Callable, xdot: Callable, g0, T: float, h: float,
                    t0: float = 0.0) -> GroupCurve:
    """Solve ``g' = -(A^a_i(x) x'^i e_a) g`` by a fourth-order Magnus scheme.

    Orthogonal and unitary representations are re-projected every
    ``REPROJECT_EVERY`` steps when the defect exceeds ``REPROJECT_TRIGGER``.
    The connection residual uses the spline derivative of ``g(t)``.
    """
    G = B.group
    g = np.array(g0, dtype=complex if G.complex else float)
    n_steps = step_count(T, h)
    dt = T / n_steps

    def omega(t):
        return -G.element(B.potential(x(t)) @ np.asarray(xdot(t), dtype=float))

    times = t0 + dt * np.arange(n_steps + 1)
    gs = np.empty((n_steps + 1,) + g.shape, dtype=g.dtype)
    gs[0] = g
    reprojections = 0
    for i in range(n_steps):
        g = expm(_magnus_step(omega, times[i], dt)) @ g
        if (i + 1) % REPROJECT_EVERY == 0 and G.defect(g) > REPROJECT_TRIGGER:
            g = G.project(g)
            reprojections += 1
        gs[i + 1] = g
    xs = np.array([x(t) for t in times])
    gdot = CubicSpline(times, gs, axis=0)(times, 1)
    xds = np.array([xdot(t) for t in times])
    res = max(float(np.linalg.norm(connection_eval(B, xi, gi, vi, gdi)))
              for xi, gi, vi, gdi in zip(xs, gs, xds, gdot))
    diag = {
        "connection_residual": res,
        "group_defect": max(G.defect(gi) for gi in gs),
        "reprojections": reprojections,
    }
    return GroupCurve(times, xs, gs, diag)


def chaplygin_s_geodesic(B: ChaplyginBundle, x0, xdot0, g0, T: float, h: float) -> GroupCurve:
    """Horizontal lift of the base geodesic through ``x0`` with velocity ``xdot0``."""
    base = riemannian_geodesic(B.gM, x0, xdot0, T, h)
    xs, vs = base_curve_from_trajectory(base)
    curve = horizontal_lift(B, xs, vs, g0, T, h)
    curve.diagnostics["base_speed_drift"] = base.diagnostics["speed_drift"]
    return curve


def wong_dynamics(B: ChaplyginBundle, x0, xdot0, charge, T: float, h: float,
                  bound: float = DEFAULT_BOUND) -> Trajectory:
    """Base motion of a charged particle: ``x'' = -Gamma(x', x') + gM^{-1} charge_b F^b(., x')``.

    The charge is constant.  Diagnostics: largest ``|gM(force, x')|`` and the
    drift of ``gM(x', x')``.
    """
    if not B.group.is_ad_invariant:
        raise NotBiInvariant("Wong dynamics needs an Ad-invariant algebra metric")
    lam = np.asarray(charge, dtype=float)
    if lam.shape != (B.group.dim,) or not np.all(np.isfinite(lam)):
        raise ConfigError(f"charge must have {B.group.dim} finite components")
    nb = B.base_dim

    def force(x, v, g):
        F = np.einsum("b,bli->li", lam, curvature_F(B, x))
        return np.linalg.solve(g, F @ v)

    def rhs(t, y):
        x, v = y[:nb], y[nb:]
        g, dg = B.gM.jet(x)
        Gm = christoffels_from_jet(g, dg)
        return np.concatenate([v, -np.einsum("ijk,j,k->i", Gm, v, v) + force(x, v, g)])

    y0 = np.concatenate([np.asarray(x0, dtype=float), np.asarray(xdot0, dtype=float)])
    times, ys = rk4(rhs, y0, T, h, bound=bound, bound_slice=slice(0, nb))
    xs, vs = ys[:, :nb], ys[:, nb:]
    work, speed = 0.0, []
    for x, v in zip(xs, vs):
        g = B.gM(x)
        work = max(work, abs(float(force(x, v, g) @ g @ v)))
        speed.append(float(v @ g @ v))
    return Trajectory(times, xs, v=vs, diagnostics={"force_work": work, "speed_drift": relative_drift(speed)})


def oneill_horizontal_residual(B: ChaplyginBundle, x, z=None) -> float:
    """max |pr_D nabla^Q_{X_i} X_j - (nabla^M_i d_j)^lift| for lifted coordinate fields."""
    G = B.group
    nb, k = B.base_dim, G.dim
    n = nb + k
    q = np.concatenate([np.asarray(x, dtype=float), np.zeros(k) if z is None else np.asarray(z, dtype=float)])
    gQ = standard_extension_metric(B)
    GQ = christoffels_from_jet(*gQ.jet(q))
    GM = christoffels_from_jet(*B.gM.jet(q[:nb]))
    A = B.potential(q[:nb])
    lifts = []
    for i in range(nb):
        comps = [Expr.const(1.0 if j == i else 0.0, n) for j in range(nb)]
        comps += [-B.A[a][i].embed(n) for a in range(k)]
        lifts.append(VectorField(comps, n))
    vals = [f.value(q) for f in lifts]
    res = 0.0
    for i in range(nb):
        for j in range(nb):
            cov = lifts[j].jacobian(q) @ vals[i] + np.einsum("abc,b,c->a", GQ, vals[i], vals[j])
            horiz = cov.copy()
            horiz[nb:] = -A @ cov[:nb]  # drop the vertical part: keep the lift of the base component
            target = np.concatenate([GM[:, i, j], -A @ GM[:, i, j]])
            res = max(res, float(np.max(np.abs(horiz - target))))
    return res


def relift_check(B: ChaplyginBundle, q0, w, a, T: float, h: float) -> float:
    """Horizontal lift of the base projection of ``gamma_w`` versus the normal geodesic."""
    dev, _, sr = factorization_check(B, q0, w, a, T, h)
    gw = bundle_geodesic(B, q0, w, T, h)
    nb = B.base_dim
    base = Trajectory(gw.times, gw.q[:, :nb], v=gw.v[:, :nb])
    xs, vs = base_curve_from_trajectory(base)
    curve = horizontal_lift(B, xs, vs, B.group.from_chart(np.asarray(q0)[nb:]), T, h)
    lifted = np.hstack([curve.x, curve.chart(B.group)])
    return float(np.max(np.linalg.norm(lifted - sr.q, axis=1)))


# ---------------------------------------------------------------------------
# left-invariant Chaplygin structures on groups


class GroupChaplygin:
    """Left-invariant structure on ``G`` with ``g = h + m``, connection the projection onto ``h``."""

    def __init__(self, group: MatrixLieGroup, h_indices: Sequence[int], m_indices: Sequence[int],
                 g_m=None):
        self.group = group
        self.h = list(h_indices)
        self.m = list(m_indices)
        if sorted(self.h + self.m) != list(range(group.dim)):
            raise ConfigError("h and m indices must partition the basis")
        c = group.c
        if self.h and np.max(np.abs(c[np.ix_(self.m, self.h, self.h)]), initial=0.0) > ALGEBRA_TOL:
            raise NotSubalgebra("[h, h] leaves h")
        if self.h and np.max(np.abs(c[np.ix_(self.h, self.h, self.m)]), initial=0.0) > ALGEBRA_TOL:
            raise NotReductive("[h, m] leaves m")
        if self._generated_dim() < group.dim:
            raise NotBracketGenerating("m does not generate the algebra")
        self.g_m = group.g_alg[np.ix_(self.m, self.m)] if g_m is None else np.asarray(g_m, dtype=float)
        order = self.m + self.h
        c_ad = c[np.ix_(order, order, order)]
        self.gamma = _koszul(c_ad, self.g_m)

    def _generated_dim(self) -> int:
        eye = np.eye(self.group.dim)
        span = [eye[i] for i in self.m]
        layer = list(span)
        for _ in range(self.group.dim):
            new = [self.group.lie_bracket(a, b) for a in span[: len(self.m)] for b in layer]
            layer = new
            span = span + new
            if np.linalg.matrix_rank(np.array(span), tol=1e-9) == self.group.dim:
                break
        return int(np.linalg.matrix_rank(np.array(span), tol=1e-9))

    def _m_element(self, u) -> np.ndarray:
        full = np.zeros(self.group.dim)
        full[self.m] = u
        return full

    def _integrate(self, rhs_alg, g0, y0, T, h):
        """RK4 on ``(g, y)`` with ``g' = g X(y)``; re-projects the group part periodically."""
        G = self.group
        g = np.array(g0, dtype=complex if G.complex else float)
        y = np.asarray(y0, dtype=float)
        n_steps = step_count(T, h)
        dt = T / n_steps

        def f(g, y):
            X, yd = rhs_alg(y)
            return g @ G.element(X), yd

        gs, ys = [g], [y]
        for i in range(n_steps):
            k1 = f(g, y)
            k2 = f(g + 0.5 * dt * k1[0], y + 0.5 * dt * k1[1])
            k3 = f(g + 0.5 * dt * k2[0], y + 0.5 * dt * k2[1])
            k4 = f(g + dt * k3[0], y + dt * k3[1])
            g = g + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            y = y + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            if (i + 1) % REPROJECT_EVERY == 0 and G.defect(g) > REPROJECT_TRIGGER:
                g = G.project(g)
            gs.append(g)
            ys.append(y)
        return dt * np.arange(n_steps + 1), np.array(gs), np.array(ys)

    def s_geodesic(self, g0, u0, T: float, h: float):
        """``g' = g u^i e_i``, ``u' = -Gamma(u, u)`` with constant Christoffels."""
        u0 = np.asarray(u0, dtype=float)
        if u0.shape != (len(self.m),):
            raise ConfigError(f"need {len(self.m)} velocity coefficients")

        def rhs(u):
            return self._m_element(u), -np.einsum("ijk,j,k->i", self.gamma, u, u)

        times, gs, us = self._integrate(rhs, g0, u0, T, h)
        speed = np.einsum("ti,ij,tj->t", us, self.g_m, us)
        return times, gs, us, {"speed_drift": relative_drift(speed)}

    def hamiltonian(self, xi) -> float:
        xm = np.asarray(xi)[self.m]
        return 0.5 * float(xm @ np.linalg.solve(self.g_m, xm))

    def h_geodesic(self, g0, xi0, T: float, h: float):
        """Lie-Poisson flow ``xi'_a = xi([dh, e_a])`` with reconstruction ``g' = g dh``."""
        xi0 = np.asarray(xi0, dtype=float)
        c = self.group.c
        g_m_inv = np.linalg.inv(self.g_m)

        def rhs(xi):
            dh = self._m_element(g_m_inv @ xi[self.m])
            return dh, np.einsum("b,bxa,x->a", xi, c, dh)

        times, gs, xis = self._integrate(rhs, g0, xi0, T, h)
        energy = np.array([self.hamiltonian(x) for x in xis])
        casimir = np.einsum("ta,ab,tb->t", xis, np.linalg.inv(self.group.g_alg), xis)
        return times, gs, xis, {"energy_drift": relative_drift(energy), "casimir_drift": relative_drift(casimir)}

    def compare(self, g0, u0, T: float, h: float) -> float:
        """max_t |g_S(t) - g_H(t)| for the S-geodesic and the H-geodesic with zero h-momentum."""
        xi0 = np.zeros(self.group.dim)
        xi0[self.m] = self.g_m @ np.asarray(u0, dtype=float)
        _, gs, _, _ = self.s_geodesic(g0, u0, T, h)
        _, gh, _, _ = self.h_geodesic(g0, xi0, T, h)
        return float(np.max(np.linalg.norm(gs - gh, axis=(1, 2))))


def group_chaplygin(group: MatrixLieGroup, h_indices, m_indices, g_m=None) -> GroupChaplygin:
    return GroupChaplygin(group, h_indices, m_indices, g_m)
