"""Frames, Lie brackets, derived flags, symbol algebras and chart metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateMetricError,
    IrregularPoint,
    SingularFrameError,
)
from .fieldspec import Expr, as_expr, compile_jet, compile_values
from .integrate import DEFAULT_BOUND, Trajectory, relative_drift, rk4

DEFAULT_RANK_TOL = 1e-9
SINGULAR_COND = 1e12
REGULARITY_RADIUS = 1e-4


def fd_step(q) -> float:
    return 1e-5 * (1.0 + float(np.linalg.norm(q)))


class VectorField:
    """A vector field whose components are expressions on an ``n``-chart."""

    def __init__(self, components: Sequence, n: int | None = None):
        if n is None:
            n = len(components)
        if len(components) != n:
            raise ConfigError(f"vector field needs {n} components, got {len(components)}")
        self.n = n
        self.components = tuple(as_expr(c, n) for c in components)

    @cached_property
    def _jet(self):
        return compile_jet(self.components, self.n)

    def value(self, q) -> np.ndarray:
        return np.array(self._jet(q)[0])

    def jacobian(self, q) -> np.ndarray:
        """``J[a, b] = dF^a / dq^b``."""
        return np.array(self._jet(q)[1])

    def jet(self, q) -> tuple[np.ndarray, np.ndarray]:
        v, g = self._jet(q)
        return np.array(v), np.array(g)

    def combine(self, coeffs: Sequence[float], others: Sequence["VectorField"]) -> "VectorField":
        """Constant linear combination ``sum_j coeffs[j] * others[j]`` (self ignored)."""
        comps = []
        for a in range(self.n):
            e = Expr.const(0.0, self.n)
            for c, f in zip(coeffs, others):
                if c != 0.0:
                    e = e + float(c) * f.components[a]
            comps.append(e)
        return VectorField(comps, self.n)

    def __repr__(self):
        return "VectorField(" + ", ".join(str(c) for c in self.components) + ")"

    @classmethod
    def coordinate(cls, k: int, n: int) -> "VectorField":
        return cls([1.0 if i == k else 0.0 for i in range(n)], n)


def linear_combination(fields: Sequence[VectorField], coeffs: Sequence[float]) -> VectorField:
    return fields[0].combine(coeffs, fields)


class BracketField:
    """The Lie bracket ``[F, G]`` of two fields, as a field in its own right.

    Values are exact whenever the children have exact Jacobians; the
    Jacobian of the bracket itself is a central difference of the value.
    """

    def __init__(self, F, G):
        self.F = F
        self.G = G
        self.n = F.n

    def value(self, q) -> np.ndarray:
        fv, fj = self.F.jet(q)
        gv, gj = self.G.jet(q)
        return gj @ fv - fj @ gv

    def jacobian(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        h = fd_step(q)
        J = np.empty((self.n, self.n))
        for k in range(self.n):
            e = np.zeros(self.n)
            e[k] = h
            J[:, k] = (self.value(q + e) - self.value(q - e)) / (2 * h)
        return J

    def jet(self, q):
        return self.value(q), self.jacobian(q)


def bracket(F, G, q) -> np.ndarray:
    """``[F, G](q) = J_G(q) F(q) - J_F(q) G(q)`` with AD Jacobians."""
    fv, fj = F.jet(q)
    gv, gj = G.jet(q)
    return gj @ fv - fj @ gv


# ---------------------------------------------------------------------------
# sub-Riemannian structure


def _as_spd(matrix, m: int) -> np.ndarray:
    g = np.eye(m) if matrix is None else np.array(matrix, dtype=float)
    if g.shape != (m, m):
        raise ConfigError(f"horizontal metric must be {m}x{m}")
    if not np.allclose(g, g.T, atol=1e-14):
        raise ConfigError("horizontal metric must be symmetric")
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise ConfigError("horizontal metric must be positive definite") from exc
    return g


class SRStructure:
    """A distribution with frame ``X``, rigging ``Y`` and constant metric ``gD``.

    ``gD[i, j]`` is the inner product of ``X_i`` and ``X_j``.  Adapted-frame
    indices run over ``X_1..X_m`` followed by ``Y_1..Y_{n-m}``.
    """

    def __init__(self, frame, rigging=(), gD=None, name: str = ""):
        frame = list(frame)
        if not frame:
            raise ConfigError("at least one horizontal field is required")
        n = frame[0].n if isinstance(frame[0], VectorField) else len(frame[0])
        self.X = tuple(f if isinstance(f, VectorField) else VectorField(f, n) for f in frame)
        self.Y = tuple(f if isinstance(f, VectorField) else VectorField(f, n) for f in rigging)
        self.n = n
        self.m = len(self.X)
        if self.m + len(self.Y) != n:
            raise ConfigError(
                f"frame ({self.m}) plus rigging ({len(self.Y)}) must span dimension {n}"
            )
        if any(f.n != n for f in self.X + self.Y):
            raise ConfigError("all fields must live on the same chart")
        self.gD = _as_spd(gD, self.m)
        self.gD_inv = np.linalg.inv(self.gD)
        self.name = name

    def __repr__(self):
        return f"SRStructure(name={self.name!r}, n={self.n}, m={self.m})"

    @cached_property
    def _jet(self):
        comps = [c for f in self.X + self.Y for c in f.components]
        return compile_jet(comps, self.n)

    @cached_property
    def horizontal_jet_raw(self):
        """Compiled ``q -> (values, gradients)`` for the horizontal fields, as float lists."""
        return compile_jet([c for f in self.X for c in f.components], self.n)

    @cached_property
    def _values(self):
        return compile_values([c for f in self.X + self.Y for c in f.components], self.n)

    def frame_values_batch(self, qs) -> np.ndarray:
        """Adapted-frame values at many points, shape ``(N, n, n)`` (row = field)."""
        n = self.n
        return np.array([self._values(q) for q in qs]).reshape(len(qs), n, n)

    def frame_jet(self, q) -> tuple[np.ndarray, np.ndarray]:
        """Values ``(n, n)`` and Jacobians ``(n, n, n)`` of all adapted fields.

        Row ``f`` of the values is field ``f``; ``J[f, a, b] = d e_f^a / dq^b``.
        """
        v, g = self._jet(q)
        n = self.n
        return np.array(v).reshape(n, n), np.array(g).reshape(n, n, n)

    def horizontal(self, q) -> np.ndarray:
        """Horizontal frame values, shape ``(m, n)``."""
        return self.frame_jet(q)[0][: self.m]

    def adapted_matrix(self, q, check: bool = True) -> np.ndarray:
        """``E = [X | Y]`` with the fields as columns."""
        E = self.frame_jet(q)[0].T
        if check:
            check_frame(E, q)
        return E

    def fields(self) -> tuple[VectorField, ...]:
        return self.X + self.Y

    # derived structures ---------------------------------------------------
    def reframed(self, M) -> "SRStructure":
        """New horizontal frame ``X'_a = sum_j M[j, a] X_j``; metric transformed to match."""
        M = np.asarray(M, dtype=float)
        if M.shape != (self.m, self.m) or abs(np.linalg.det(M)) < 1e-14:
            raise ConfigError("re-framing matrix must be invertible m x m")
        X = [linear_combination(self.X, M[:, a]) for a in range(self.m)]
        gD = M.T @ self.gD @ M
        return SRStructure(X, self.Y, 0.5 * (gD + gD.T), name=self.name)

    @cached_property
    def cholesky_factor(self) -> np.ndarray:
        """Lower ``L`` with ``gD = L L^T``."""
        return np.linalg.cholesky(self.gD)

    @cached_property
    def orthonormal(self) -> "SRStructure":
        """Equivalent structure whose horizontal frame is ``gD``-orthonormal."""
        if np.array_equal(self.gD, np.eye(self.m)):
            return self
        C = np.linalg.inv(self.cholesky_factor).T
        out = self.reframed(C)
        out.gD = np.eye(self.m)
        out.gD_inv = np.eye(self.m)
        return out

    def to_orthonormal_coeffs(self, v) -> np.ndarray:
        """Frame coefficients w.r.t. ``X`` -> coefficients w.r.t. the orthonormal frame."""
        return self.cholesky_factor.T @ np.asarray(v, dtype=float)

    def from_orthonormal_coeffs(self, w) -> np.ndarray:
        return np.linalg.solve(self.cholesky_factor.T, np.asarray(w, dtype=float).T).T

    def with_rigging(self, rigging) -> "SRStructure":
        return SRStructure(self.X, rigging, self.gD, name=self.name)

    def with_metric(self, gD) -> "SRStructure":
        return SRStructure(self.X, self.Y, gD, name=self.name)

    def validate(self, points) -> float:
        """Check frame invertibility on sample points; return the worst condition number."""
        worst = 0.0
        for q in points:
            worst = max(worst, check_frame(self.adapted_matrix(q, check=False), q))
        return worst


def check_frame(E: np.ndarray, q=None) -> float:
    """1-norm condition number of the adapted frame; raises when singular."""
    return frame_inverse(E, q)[1]


def frame_inverse(E: np.ndarray, q=None) -> tuple[np.ndarray, float]:
    try:
        Einv = np.linalg.inv(E)
        cond = float(np.abs(E).sum(axis=0).max() * np.abs(Einv).sum(axis=0).max())
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise SingularFrameError(f"adapted frame singular at q={np.asarray(q).tolist()} (cond={cond:.3g})")
    return Einv, cond


def structure_functions(S: SRStructure, q) -> np.ndarray:
    """``c[a, b, c]`` with ``[e_b, e_c](q) = c[a, b, c] e_a(q)`` over the adapted frame."""
    V, J = S.frame_jet(q)
    Einv, _ = frame_inverse(V.T, q)
    n = S.n
    # A[c, i, b] = (J_c e_b)^i ;  B[b, c] = J_c e_b - J_b e_c
    A = J @ V.T
    B = A.transpose(2, 0, 1) - A.transpose(0, 2, 1)
    return (Einv @ B.reshape(n * n, n).T).reshape(n, n, n)


# ---------------------------------------------------------------------------
# derived flag and symbol algebra


@dataclass
class SymbolProfile:
    growth: list[int]
    depth: int
    bracket_generating: bool
    graded_basis: list[list[np.ndarray]] = field(default_factory=list)
    bracket_table: np.ndarray | None = None
    grade_residual: float = 0.0
    generation_residual: float = 0.0

    @property
    def dimension(self) -> int:
        return self.growth[-1]


def _rank(A: np.ndarray, tol: float, scale: float | None = None) -> int:
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    ref = s[0] if scale is None else scale
    if ref == 0.0:
        return 0
    return int(np.sum(s > tol * ref))


def _flag_levels(S: SRStructure, q, max_depth: int, tol: float):
    """Generators of each derived-flag module and the pointwise ranks."""
    q = np.asarray(q, dtype=float)
    gens = [(1, f) for f in S.X]
    values = [f.value(q) for f in S.X]
    ranks = [_rank(np.array(values), tol)]
    levels = [list(gens)]
    depth = 1
    while depth < max_depth and ranks[-1] < S.n:
        new = []
        for a in range(len(gens)):
            for b in range(a + 1, len(gens)):
                if gens[a][0] < depth and gens[b][0] < depth:
                    continue  # already bracketed at a lower level
                new.append((depth + 1, BracketField(gens[a][1], gens[b][1])))
        gens = gens + new
        values = values + [f.value(q) for _, f in new]
        depth += 1
        ranks.append(_rank(np.array(values), tol))
        levels.append(list(gens))
    return ranks, levels, depth


def growth_vector(S: SRStructure, q, max_depth: int | None = None, tol: float = DEFAULT_RANK_TOL) -> SymbolProfile:
    """Ranks of the derived flag ``D^{-i-1} = D^{-i} + [D^{-i}, D^{-i}]`` at ``q``.

    Iterated brackets are built as fields, so points where a bracket vanishes
    (Martinet surface) still see higher brackets.  When ``max_depth`` is
    reached short of full rank the trailing repeated ranks are dropped and the
    profile is flagged as not bracket generating.
    """
    if max_depth is None:
        max_depth = S.n
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    ranks, _, depth = _flag_levels(S, q, max_depth, tol)
    generating = ranks[-1] == S.n
    if not generating:
        while len(ranks) > 1 and ranks[-1] == ranks[-2]:
            ranks.pop()
    return SymbolProfile(growth=list(ranks), depth=len(ranks), bracket_generating=generating)


def symbol_algebra(S: SRStructure, q, tol: float = DEFAULT_RANK_TOL, max_depth: int | None = None) -> SymbolProfile:
    """Graded nilpotent algebra induced by the bracket on the derived flag at ``q``."""
    q = np.asarray(q, dtype=float)
    if max_depth is None:
        max_depth = S.n
    base = growth_vector(S, q, max_depth, tol)
    for k in range(S.n):
        for sign in (1.0, -1.0):
            qp = q.copy()
            qp[k] += sign * REGULARITY_RADIUS
            other = growth_vector(S, qp, max_depth, tol)
            if other.growth != base.growth:
                raise IrregularPoint(
                    f"growth vector {base.growth} at q differs from {other.growth} at a perturbed point"
                )
    ranks, levels, _ = _flag_levels(S, q, base.depth, tol)
    ranks = ranks[: base.depth]
    scale = max(np.linalg.norm(f.value(q)) for f in S.X)

    basis_fields, basis_vecs, grades = [], [], []
    for level, gens in enumerate(levels[: base.depth], start=1):
        for g_level, f in gens:
            if g_level != level:
                continue
            v = f.value(q)
            trial = np.array(basis_vecs + [v])
            if _rank(trial, tol, scale) > len(basis_vecs):
                basis_fields.append(f)
                basis_vecs.append(v)
                grades.append(level)
        if len(basis_vecs) != ranks[level - 1]:
            raise IrregularPoint("could not build an adapted graded basis at q")

    dim = len(basis_vecs)
    Bmat = np.array(basis_vecs).T
    table = np.zeros((dim, dim, dim))
    residual = 0.0
    for a in range(dim):
        for b in range(a + 1, dim):
            w = bracket(basis_fields[a], basis_fields[b], q)
            coef, *_ = np.linalg.lstsq(Bmat, w, rcond=None)
            outside = float(np.linalg.norm(Bmat @ coef - w))
            target = grades[a] + grades[b]
            for c in range(dim):
                if grades[c] == target:
                    table[a, b, c] = coef[c]
                    table[b, a, c] = -coef[c]
                elif grades[c] > target:
                    outside = max(outside, abs(coef[c]))
            residual = max(residual, outside)

    graded = [[basis_vecs[i] for i in range(dim) if grades[i] == g] for g in range(1, base.depth + 1)]
    generation = _generated_growth(table, grades, base.depth, tol)
    gen_res = float(max(abs(x - y) for x, y in zip(generation, ranks)))
    return SymbolProfile(
        growth=base.growth,
        depth=base.depth,
        bracket_generating=base.bracket_generating,
        graded_basis=graded,
        bracket_table=table,
        grade_residual=residual,
        generation_residual=gen_res,
    )


def _generated_growth(table: np.ndarray, grades: list[int], depth: int, tol: float) -> list[int]:
    """Cumulative dimensions of the subalgebra generated by grade one."""
    dim = len(grades)
    eye = np.eye(dim)
    first = [eye[i] for i in range(dim) if grades[i] == 1]
    layers = [first]
    ranks = [_rank(np.array(first), tol)]
    for _ in range(1, depth):
        new = []
        for x in first:
            for y in layers[-1]:
                new.append(np.einsum("a,b,abc->c", x, y, table))
        layers.append(new)
        span = [v for layer in layers for v in layer]
        ranks.append(_rank(np.array(span), tol, 1.0))
    return ranks


# ---------------------------------------------------------------------------
# chart metrics


class ChartMetric:
    """A Riemannian metric field on a chart: ``g(q)`` and, optionally, its exact jet."""

    n: int

    def __call__(self, q) -> np.ndarray:
        raise NotImplementedError

    def jet(self, q) -> tuple[np.ndarray, np.ndarray]:
        """``(g, dg)`` with ``dg[k, a, b] = d g_ab / dq^k``; default by central differences."""
        return self(q), metric_derivative_fd(self, q)


class ExprMetric(ChartMetric):
    """Metric with expression components (symmetrised)."""

    def __init__(self, components, n: int | None = None):
        if n is None:
            n = len(components)
        self.n = n
        comps = [[as_expr(components[i][j], n) for j in range(n)] for i in range(n)]
        for i in range(n):
            for j in range(i):
                if comps[i][j] != comps[j][i]:
                    raise ConfigError("metric components must be symmetric")
        self.components = comps
        self._f = compile_jet([c for row in comps for c in row], n)

    @classmethod
    def constant(cls, matrix) -> "ExprMetric":
        matrix = np.asarray(matrix, dtype=float)
        return cls(matrix.tolist(), matrix.shape[0])

    @property
    def is_constant(self) -> bool:
        return all(c.is_constant for row in self.components for c in row)

    @property
    def is_diagonal(self) -> bool:
        n = self.n
        return all(self.components[i][j] == Expr.const(0.0, n) for i in range(n) for j in range(n) if i != j)

    def __call__(self, q) -> np.ndarray:
        return np.array(self._f(q)[0]).reshape(self.n, self.n)

    def jet(self, q):
        v, g = self._f(q)
        n = self.n
        return np.array(v).reshape(n, n), np.array(g).reshape(n, n, n).transpose(2, 0, 1)


class FrameMetric(ChartMetric):
    """``g = E^{-T} blockdiag(gD, I) E^{-1}``: frame orthonormal-with-gD, rigging orthonormal and normal to D."""

    def __init__(self, S: SRStructure):
        self.S = S
        self.n = S.n
        k = S.n - S.m
        self.B = np.block([[S.gD, np.zeros((S.m, k))], [np.zeros((k, S.m)), np.eye(k)]])

    def __call__(self, q) -> np.ndarray:
        Einv, _ = frame_inverse(self.S.adapted_matrix(q, check=False), q)
        return Einv.T @ self.B @ Einv

    def jet(self, q):
        V, J = self.S.frame_jet(q)
        E = V.T
        Einv, _ = frame_inverse(E, q)
        g = Einv.T @ self.B @ Einv
        # dE_k[a, f] = d e_f^a / dq^k
        dE = J.transpose(2, 1, 0)
        dEinv = -np.einsum("ab,kbc,cd->kad", Einv, dE, Einv)
        BE = self.B @ Einv
        dg = np.einsum("kba,bc->kac", dEinv, BE)
        dg = dg + dg.transpose(0, 2, 1)
        return g, dg


def metric_extension(S: SRStructure) -> FrameMetric:
    """Riemannian extension declaring ``X`` orthonormal-with-``gD`` and the rigging orthonormal and orthogonal to D."""
    return FrameMetric(S)


def metric_derivative_fd(metric, q, h: float | None = None) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    h = fd_step(q) if h is None else h
    n = len(q)
    out = np.empty((n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        out[k] = (metric(q + e) - metric(q - e)) / (2 * h)
    return out


def christoffels_from_jet(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """``G[i, j, k] = 1/2 g^{il} (d_j g_lk + d_k g_lj - d_l g_jk)``."""
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetricError("metric not invertible") from exc
    # dg[k, a, b] = d_k g_ab
    lower = 0.5 * (dg.transpose(1, 0, 2) + dg.transpose(1, 2, 0) - dg)  # [l, j, k]
    return np.einsum("il,ljk->ijk", ginv, lower)


def levi_civita_christoffels(g: ChartMetric, q, exact: bool = True) -> np.ndarray:
    """Christoffel symbols of a chart metric; ``exact=False`` forces finite differences."""
    if exact:
        gq, dg = g.jet(q)
    else:
        gq, dg = g(q), metric_derivative_fd(g, q)
    if np.any(np.linalg.eigvalsh(0.5 * (gq + gq.T)) <= 0):
        raise DegenerateMetricError(f"metric not positive definite at q={np.asarray(q).tolist()}")
    return christoffels_from_jet(gq, dg)


def geodesic_rhs(g: ChartMetric):
    def rhs(t, y):
        n = len(y) // 2
        q, v = y[:n], y[n:]
        G = christoffels_from_jet(*g.jet(q))
        return np.concatenate([v, -np.einsum("ijk,j,k->i", G, v, v)])

    return rhs


def riemannian_geodesic(g: ChartMetric, q0, v0, T: float, h: float, bound: float = DEFAULT_BOUND) -> Trajectory:
    """Integrate ``q'' + Gamma(q', q') = 0`` by RK4; diagnostics report the speed drift."""
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    n = len(q0)
    times, ys = rk4(geodesic_rhs(g), np.concatenate([q0, v0]), T, h, bound=bound, bound_slice=slice(0, n))
    q, v = ys[:, :n], ys[:, n:]
    speed = np.array([vi @ g(qi) @ vi for qi, vi in zip(q, v)])
    return Trajectory(times, q, v=v, diagnostics={"speed_drift": relative_drift(speed)})
