"""Set arithmetic on intervals, boxes, zonotopes and strips.

Every filter phase is built from these primitives. All types are frozen
values; operations return new objects and never mutate their inputs.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve
from scipy.optimize import linprog

CONTAINMENT_TOL = 1e-9
GAIN_JITTER = 1e-9


class SingularGainWarning(RuntimeWarning):
    """Innovation matrix of a strip intersection needed jitter."""


def _vec(x) -> np.ndarray:
    a = np.atleast_1d(np.asarray(x, dtype=float))
    if a.ndim != 1:
        raise ValueError(f"expected a vector, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def rad(self) -> float:
        return 0.5 * (self.hi - self.lo)

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned interval vector ``[center +- radius]``."""

    center: np.ndarray
    radius: np.ndarray

    def __post_init__(self):
        c = _vec(self.center)
        r = _vec(self.radius)
        if r.shape != c.shape:
            raise ValueError(f"center {c.shape} and radius {r.shape} differ")
        if np.any(r < 0) or np.any(np.isnan(r)):
            raise ValueError("box radius must be non-negative")
        c.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)

    @classmethod
    def zero_centered(cls, radius) -> "Box":
        r = _vec(radius)
        return cls(np.zeros_like(r), r)

    @classmethod
    def from_bounds(cls, lo, hi) -> "Box":
        lo, hi = _vec(lo), _vec(hi)
        return cls(0.5 * (lo + hi), 0.5 * (hi - lo))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.radius

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.radius

    def intervals(self) -> list[Interval]:
        return [Interval(float(a), float(b)) for a, b in zip(self.lo, self.hi)]

    def contains(self, p, tol: float = CONTAINMENT_TOL) -> bool:
        p = _vec(p)
        return bool(np.all(np.abs(p - self.center) <= self.radius + tol))

    def contains_box(self, other: "Box", tol: float = CONTAINMENT_TOL) -> bool:
        return bool(np.all(other.lo >= self.lo - tol) and np.all(other.hi <= self.hi + tol))

    def intersect(self, other: "Box") -> "Box":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(lo > hi):
            raise ValueError("boxes do not intersect")
        return Box.from_bounds(lo, hi)

    def __repr__(self):
        return f"Box(center={self.center.tolist()}, radius={self.radius.tolist()})"


@dataclass(frozen=True, eq=False)
class Zonotope:
    """``{center + generators @ xi : ||xi||_inf <= 1}``."""

    center: np.ndarray
    generators: np.ndarray = field(default=None)

    def __post_init__(self):
        c = _vec(self.center)
        if self.generators is None:
            G = np.zeros((c.shape[0], 0))
        else:
            G = np.asarray(self.generators, dtype=float)
            if G.ndim == 1:
                G = G.reshape(-1, 1)
            if G.size == 0:
                G = np.zeros((c.shape[0], 0))
        if G.ndim != 2 or G.shape[0] != c.shape[0]:
            raise ValueError(f"generators {G.shape} do not match center {c.shape}")
        c.setflags(write=False)
        G = np.array(G)
        G.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "generators", G)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def n_generators(self) -> int:
        return self.generators.shape[1]

    def covariation(self) -> np.ndarray:
        """``G G^T``, the zonotope analogue of a covariance matrix."""
        return self.generators @ self.generators.T

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` points drawn uniformly in generator space (returns ``(n, dim)``)."""
        xi = rng.uniform(-1.0, 1.0, size=(n, self.n_generators))
        return self.center + xi @ self.generators.T

    def vertices(self) -> np.ndarray:
        """Images of all cube corners. Exponential in the generator count."""
        if self.n_generators > 16:
            raise ValueError("too many generators for vertex enumeration")
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=self.n_generators)))
        if signs.size == 0:
            return self.center.reshape(1, -1)
        return self.center + signs @ self.generators.T

    def __repr__(self):
        return f"Zonotope(center={self.center.tolist()}, generators={self.generators.tolist()})"


@dataclass(frozen=True, eq=False)
class Strip:
    """``{x : map @ x - offset in bound}``."""

    map: np.ndarray
    offset: np.ndarray
    bound: Box

    def __post_init__(self):
        J = np.atleast_2d(np.asarray(self.map, dtype=float))
        o = _vec(self.offset)
        if J.shape[0] != o.shape[0] or self.bound.dim != o.shape[0]:
            raise ValueError("strip map, offset and bound rows disagree")
        J = np.array(J)
        J.setflags(write=False)
        o.setflags(write=False)
        object.__setattr__(self, "map", J)
        object.__setattr__(self, "offset", o)

    @property
    def dim(self) -> int:
        return self.map.shape[1]

    def contains(self, points, tol: float = CONTAINMENT_TOL) -> np.ndarray:
        """Vectorised membership test for rows of ``points``."""
        P = np.atleast_2d(points)
        resid = P @ self.map.T - self.offset - self.bound.center
        return np.all(np.abs(resid) <= self.bound.radius + tol, axis=1)


def point(x) -> Zonotope:
    return Zonotope(_vec(x), None)


def affine_map(Z: Zonotope, A, b=None) -> Zonotope:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != Z.dim:
        raise ValueError(f"matrix with {A.shape[1]} columns applied to {Z.dim}-d zonotope")
    b = np.zeros(A.shape[0]) if b is None else _vec(b)
    if b.shape[0] != A.shape[0]:
        raise ValueError("offset length does not match matrix rows")
    return Zonotope(b + A @ Z.center, A @ Z.generators)


def minkowski_sum(Z1: Zonotope, Z2: Zonotope) -> Zonotope:
    if Z1.dim != Z2.dim:
        raise ValueError(f"dimension mismatch: {Z1.dim} vs {Z2.dim}")
    return Zonotope(Z1.center + Z2.center, np.hstack([Z1.generators, Z2.generators]))


def box_to_zonotope(B: Box) -> Zonotope:
    return Zonotope(B.center, np.diag(B.radius))


def zonotope_interval_hull(Z: Zonotope) -> Box:
    return Box(Z.center, np.abs(Z.generators).sum(axis=1))


def zonotope_norm(Z: Zonotope, xbar, method: str = "generators") -> float:
    """Upper bound on ``max_{x in Z} ||x - xbar||_2``.

    ``"generators"``: ``||c - xbar|| + sum_k ||G[:, k]||`` (triangle inequality).
    ``"hull"``: distance from ``xbar`` to the farthest corner of the interval hull.
    ``"min"``: the smaller of the two, still a valid bound.
    """
    xbar = _vec(xbar)
    if xbar.shape[0] != Z.dim:
        raise ValueError("reference point dimension mismatch")
    gen = float(np.linalg.norm(Z.center - xbar) + np.linalg.norm(Z.generators, axis=0).sum())
    if method == "generators":
        return gen
    hull = float(np.linalg.norm(np.abs(Z.center - xbar) + np.abs(Z.generators).sum(axis=1)))
    if method == "hull":
        return hull
    if method == "min":
        return min(gen, hull)
    raise ValueError(f"unknown norm method {method!r}")


def _linf_lp(G: np.ndarray, d: np.ndarray, slack: float = 0.0) -> float | None:
    """min ||xi||_inf s.t. |G xi - d| <= slack; None when infeasible."""
    n, k = G.shape
    if k == 0:
        return 0.0 if np.all(np.abs(d) <= max(slack, CONTAINMENT_TOL)) else None
    # variables: xi (k), t
    cost = np.zeros(k + 1)
    cost[-1] = 1.0
    eye = np.eye(k)
    ones = np.ones((k, 1))
    box_rows = np.vstack([np.hstack([eye, -ones]), np.hstack([-eye, -ones])])
    Gt = np.hstack([G, np.zeros((n, 1))])
    if slack > 0:
        res = linprog(
            cost,
            A_ub=np.vstack([box_rows, Gt, -Gt]),
            b_ub=np.concatenate([np.zeros(2 * k), d + slack, slack - d]),
            bounds=[(None, None)] * k + [(0, None)],
            method="highs",
        )
    else:
        res = linprog(
            cost, A_ub=box_rows, b_ub=np.zeros(2 * k), A_eq=Gt, b_eq=d,
            bounds=[(None, None)] * k + [(0, None)], method="highs",
        )
    if res.status != 0:
        return None
    return float(res.fun)


def _roundoff(Z: Zonotope, p: np.ndarray) -> float:
    """Absolute slack covering floating-point error in ``c + G xi``."""
    mag = max(1.0, float(np.max(np.abs(Z.center), initial=0.0)), float(np.max(np.abs(p), initial=0.0)))
    return 1e-12 * mag


def contains_point(Z: Zonotope, p, tol: float = CONTAINMENT_TOL) -> bool:
    """Exact membership by a small LP on the generator coefficients.

    The equality ``G xi = p - c`` is relaxed by a round-off slack relative to
    the coordinate magnitudes, so degenerate (thin) zonotopes behave.
    """
    p = _vec(p)
    if p.shape[0] != Z.dim:
        raise ValueError("point dimension mismatch")
    opt = _linf_lp(Z.generators, p - Z.center, _roundoff(Z, p))
    return opt is not None and opt <= 1.0 + tol


def _facet_normals(G: np.ndarray) -> np.ndarray | None:
    """Facet normals of a full-dimensional zonotope, or None if degenerate."""
    n, k = G.shape
    if n == 1:
        return np.ones((1, 1)) if np.any(G != 0) else None
    if np.linalg.matrix_rank(G) < n:
        return None
    normals = []
    for idx in itertools.combinations(range(k), n - 1):
        sub = G[:, idx]
        # null-space direction of the (n-1) chosen generators
        _, s, vt = np.linalg.svd(sub.T)
        if s.size and s[-1] < 1e-12 * max(s[0], 1.0):
            continue
        nrm = vt[-1]
        normals.append(nrm / np.linalg.norm(nrm))
    if not normals:
        return None
    return np.array(normals)


_FACET_LIMIT = 4000


def contains_points(Z: Zonotope, points, tol: float = CONTAINMENT_TOL) -> np.ndarray:
    """Batched membership. Uses the halfspace form when it is small enough,
    falling back to one LP per point otherwise."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[1] != Z.dim:
        raise ValueError("point dimension mismatch")
    G = Z.generators[:, np.any(Z.generators != 0, axis=0)]
    n, k = G.shape
    normals = None
    if k >= n and _n_choose(k, n - 1) <= _FACET_LIMIT:
        normals = _facet_normals(G)
    if normals is None:
        return np.array([contains_point(Z, p, tol) for p in P], dtype=bool)
    bound = np.abs(normals @ G).sum(axis=1)
    proj = np.abs((P - Z.center) @ normals.T)
    scale = np.maximum(bound, 1.0)
    slack = _roundoff(Z, P.ravel())
    return np.all(proj <= bound + tol * scale + slack, axis=1)


def _n_choose(k: int, r: int) -> int:
    return math.comb(k, r)


def reduce_order(Z: Zonotope, max_generators: int) -> Zonotope:
    """Box the smallest generators so that at most ``max_generators`` remain.

    The interval hull of the result equals that of ``Z``.
    """
    n = Z.dim
    if max_generators < n:
        raise ValueError(f"max_generators={max_generators} below dimension {n}")
    G = Z.generators
    if G.shape[1] <= max_generators:
        return Z
    order = np.argsort(np.linalg.norm(G, axis=0), kind="stable")
    n_box = G.shape[1] - (max_generators - n)
    boxed = G[:, order[:n_box]]
    kept = G[:, np.sort(order[n_box:])]
    return Zonotope(Z.center, np.hstack([kept, np.diag(np.abs(boxed).sum(axis=1))]))


def strip_gain(Z: Zonotope, S: Strip) -> np.ndarray:
    """Gain minimising the Frobenius norm of the intersected generators."""
    if S.dim != Z.dim:
        raise ValueError("strip map columns do not match zonotope dimension")
    P = Z.covariation()
    J = S.map
    innov = J @ P @ J.T + np.diag(S.bound.radius**2)
    PJt = P @ J.T
    try:
        low = np.linalg.cholesky(innov)
        if np.min(np.diag(low)) <= 1e-12 * max(1.0, np.max(np.diag(low))):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        warnings.warn("singular strip innovation matrix; added jitter", SingularGainWarning, stacklevel=3)
        innov = innov + GAIN_JITTER * np.eye(innov.shape[0])
        low = np.linalg.cholesky(innov)
    # solve gain @ innov = PJt
    return cho_solve((low, True), PJt.T).T


def intersect_strip(Z: Zonotope, S: Strip, gain=None) -> tuple[Zonotope, np.ndarray]:
    """Zonotope containing ``Z ∩ S``, parameterised by ``gain``.

    With ``gain=None`` the Frobenius-optimal gain is used. Any gain gives a
    valid outer approximation.
    """
    if S.dim != Z.dim:
        raise ValueError("strip map columns do not match zonotope dimension")
    lam = strip_gain(Z, S) if gain is None else np.asarray(gain, dtype=float)
    J = S.map
    c = Z.center + lam @ (S.offset + S.bound.center - J @ Z.center)
    G = np.hstack([(np.eye(Z.dim) - lam @ J) @ Z.generators, lam * S.bound.radius])
    return Zonotope(c, G), lam

