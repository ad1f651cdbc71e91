"""Discounted optimal-control distances and the barrier sandwich for boundary regularity.

``L^delta_sigma(x0, y)`` is the least discounted cost
``int_0^T (sigma + L(xi')) e^{-delta (T - s)} ds`` over curves from ``x0`` to
``y``, with ``L`` the Legendre transform of ``H``. Curves are restricted to
chains of grid segments along a fixed direction set. A single segment of
displacement ``d`` traversed in time ``t`` then costs
``(sigma + L(d/t)) (1 - e^{-delta t}) / delta`` and discounts the value it
extends by ``e^{-delta t}``.

For ``delta = 0`` the optimal time gives ``inf_t t (sigma + L(d/t)) = C_sigma(d)``,
the generalized cone, so the distance is a shortest path with edge weights
``C_sigma(h e)``. It is computed with Dijkstra. For ``delta > 0`` every
direction gets a table of travel times, and value iteration runs from the
undiscounted distance, which is a supersolution. The iterates then decrease
monotonically.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .errors import ConfigError, InputError, NumericalError
from .grid import Grid, GridField
from .hamiltonian import ConeSpec, HamiltonianModel, cone, legendre, reflect

TIME_SAMPLES = 400
LN_SQRT2 = 0.5 * math.log(2.0)


def direction_set(n: int) -> np.ndarray:
    """Integer step directions: 2 in 1D, 16 in 2D (axes, diagonals, knight moves), 26 in 3D."""
    if n == 1:
        return np.array([[1], [-1]])
    if n == 2:
        dirs = [d for d in itertools.product(range(-2, 3), repeat=2) if d != (0, 0) and math.gcd(*d) == 1]
        return np.array(dirs)
    if n == 3:
        return np.array([d for d in itertools.product((-1, 0, 1), repeat=3) if d != (0, 0, 0)])
    raise InputError("direction sets exist for n <= 3")


def lipschitz_constant(grid: Grid, values: np.ndarray, mask: np.ndarray | None = None, chunk: int = 2048) -> float:
    """``max |g(x) - g(y)| / |x - y|`` over pairs of nodes selected by ``mask`` (default: boundary)."""
    mask = grid.boundary_mask() if mask is None else mask
    X = grid.coords()[mask]
    g = np.asarray(values, dtype=float)
    g = g[mask] if g.shape == grid.shape else g
    best = 0.0
    for start in range(0, len(X), chunk):
        d = np.linalg.norm(X[start : start + chunk, None, :] - X[None, :, :], axis=-1)
        dg = np.abs(g[start : start + chunk, None] - g[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(d > 0, dg / d, 0.0)
        best = max(best, float(q.max()))
    return best


def admissible_discount(model: HamiltonianModel, sigma: float, grid: Grid) -> float:
    """``sigma / (2 sup C_sigma(y - x))`` over node pairs of ``grid``.

    ``C_sigma`` is convex, so the sup over the difference box is attained at one
    of its vertices, the corner-to-corner differences.
    """
    widths = np.asarray(grid.upper) - np.asarray(grid.lower)
    corners = np.array(list(itertools.product((-1.0, 1.0), repeat=grid.n))) * widths
    return sigma / (2.0 * float(cone(ConeSpec(sigma, model), corners).max()))


def segment_cost(model: HamiltonianModel, sigma: float, delta: float, d: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``(sigma + L(d/t)) (1 - e^{-delta t}) / delta`` (``t (sigma + L(d/t))`` at ``delta = 0``)."""
    t = np.asarray(t, dtype=float)
    L, _ = legendre(model, np.asarray(d, dtype=float)[None, :] / t[:, None])
    factor = t if delta == 0 else -np.expm1(-delta * t) / delta
    return (sigma + L) * factor


def _time_bounds(model: HamiltonianModel, sigma: float, length: float, diam: float) -> tuple[float, float]:
    lo = length / (10.0 * math.sqrt(2 * sigma / model.lam))
    hi = 10.0 * max(diam, length) / math.sqrt(2 * sigma / model.Lam)
    return lo, hi


def straight_line_cost(model: HamiltonianModel, sigma: float, delta: float, x, y) -> float:
    """Cost of the single straight segment from ``x`` to ``y`` at the best travel time.

    ``delta = 0`` uses the closed form ``C_sigma(y - x)``. Otherwise the time is
    found by golden-section search in ``log t`` and polished with Newton steps
    on finite-difference derivatives.
    """
    if sigma <= 0 or delta < 0:
        raise InputError("need sigma > 0 and delta >= 0")
    d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    length = float(np.linalg.norm(d))
    if length == 0:
        return 0.0
    if delta == 0:
        return float(cone(ConeSpec(sigma, model), d))
    f = lambda s: float(segment_cost(model, sigma, delta, d, np.array([math.exp(s)]))[0])  # noqa: E731
    lo, hi = (math.log(v) for v in _time_bounds(model, sigma, length, length))
    grid_s = np.linspace(lo, hi, 64)
    vals = segment_cost(model, sigma, delta, d, np.exp(grid_s))
    k = int(np.argmin(vals))
    a, b = grid_s[max(k - 1, 0)], grid_s[min(k + 1, len(grid_s) - 1)]
    ratio = (math.sqrt(5) - 1) / 2
    c1, c2 = b - ratio * (b - a), a + ratio * (b - a)
    f1, f2 = f(c1), f(c2)
    while b - a > 1e-7:
        if f1 < f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - ratio * (b - a)
            f1 = f(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + ratio * (b - a)
            f2 = f(c2)
    s = 0.5 * (a + b)
    best = f(s)
    step = 1e-4
    for _ in range(5):
        fp, fm = f(s + step), f(s - step)
        curv = (fp - 2 * best + fm) / step**2
        if curv <= 0:
            break
        s_new = s - (fp - fm) / (2 * step) / curv
        f_new = f(s_new)
        if f_new >= best:
            break
        s, best = s_new, f_new
    return min(best, float(vals.min()))


@dataclass(frozen=True)
class BarrierField:
    """``L^delta_sigma(x0, .)`` on a grid; ``reflected`` marks the distance of ``H(-p)``."""

    model: HamiltonianModel
    x0: tuple
    index: tuple
    sigma: float
    delta: float
    field: GridField
    log: tuple = ()
    reflected: bool = False

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @property
    def iterations(self) -> int:
        return len(self.log)

    def cone_values(self) -> np.ndarray:
        """``C_sigma(y - x0)`` at every node for the model the distance was computed with."""
        g = self.field.grid
        model = reflect(self.model) if self.reflected else self.model
        return cone(ConeSpec(self.sigma, model), g.coords() - np.asarray(self.x0))

    def semiconcavity_proxy(self) -> float:
        """Largest axis second difference of the field over interior nodes."""
        v = self.values
        g = self.field.grid
        best = -math.inf
        for axis in range(g.n):
            hi = [slice(1, -1)] * g.n
            lo = list(hi)
            hi[axis] = slice(2, None)
            lo[axis] = slice(None, -2)
            sec = (v[tuple(hi)] + v[tuple(lo)] - 2 * v[g.interior]) / g.h**2
            best = max(best, float(sec.max()))
        return best


def _edges(grid: Grid, dirs: np.ndarray):
    """Per direction: flat indices of sources ``z`` and targets ``z + h d`` inside the grid."""
    idx = np.indices(grid.shape).reshape(grid.n, -1).T
    shape = np.asarray(grid.shape)
    out = []
    for d in dirs:
        tgt = idx + d
        ok = np.all((tgt >= 0) & (tgt < shape), axis=1)
        out.append((np.ravel_multi_index(idx[ok].T, grid.shape), np.ravel_multi_index(tgt[ok].T, grid.shape)))
    return out


def _lower_envelope(A: np.ndarray, B: np.ndarray):
    """Hull of lines ``A_j + B_j v`` for a pointwise minimum; returns (A, B, breakpoints)."""
    order = np.lexsort((A, -B))
    A, B = A[order], B[order]
    keep_a, keep_b = [], []
    for a, b in zip(A, B):
        if keep_b and b == keep_b[-1]:
            continue
        while len(keep_a) >= 2:
            a1, b1, a2, b2 = keep_a[-2], keep_b[-2], keep_a[-1], keep_b[-1]
            if (a - a1) / (b1 - b) <= (a2 - a1) / (b1 - b2):
                keep_a.pop()
                keep_b.pop()
            else:
                break
        keep_a.append(a)
        keep_b.append(b)
    A, B = np.array(keep_a), np.array(keep_b)
    breaks = (A[1:] - A[:-1]) / (B[:-1] - B[1:])
    return A, B, breaks


def control_distance(
    model: HamiltonianModel,
    sigma: float,
    delta: float,
    grid: Grid,
    x0,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    reflected: bool = False,
) -> BarrierField:
    """``L^delta_sigma(x0, .)`` at every node of ``grid``.

    With ``reflected`` the distance is computed for ``H(-p)``; its negative is
    the lower barrier ``-L^delta_sigma(., x0)`` (exactly so at ``delta = 0``).
    """
    if sigma <= 0:
        raise InputError("sigma must be positive")
    if delta < 0:
        raise InputError("delta must be nonnegative")
    mod = reflect(model) if reflected else model
    idx = grid.node_index(x0)
    source = int(np.ravel_multi_index(idx, grid.shape))
    dirs = direction_set(grid.n)
    h = grid.h
    diam = float(np.linalg.norm(np.asarray(grid.upper) - np.asarray(grid.lower)))
    edges = _edges(grid, dirs)
    steps = h * dirs.astype(float)

    if delta == 0:
        costs = cone(ConeSpec(sigma, mod), steps)
    else:
        tables = []
        costs = np.empty(len(dirs))
        for k, d in enumerate(steps):
            lo, hi = _time_bounds(mod, sigma, float(np.linalg.norm(d)), diam)
            t = np.geomspace(lo, hi, TIME_SAMPLES)
            tables.append(_lower_envelope(segment_cost(mod, sigma, delta, d, t), np.exp(-delta * t)))
            costs[k] = float(segment_cost(mod, sigma, 0.0, d, t).min())

    rows = np.concatenate([s for s, _ in edges])
    cols = np.concatenate([t for _, t in edges])
    w = np.concatenate([np.full(len(s), c) for (s, _), c in zip(edges, costs)])
    graph = sp.csr_matrix((w, (rows, cols)), shape=(grid.size, grid.size))
    V = dijkstra(graph, directed=True, indices=source)
    log = []
    if delta > 0:
        for it in range(max_iter):
            new = V.copy()
            for (src, tgt), (A, B, breaks) in zip(edges, tables):
                v = V[src]
                j = np.searchsorted(breaks, v)
                np.minimum.at(new, tgt, A[j] + B[j] * v)
            new[source] = 0.0
            change = float(np.abs(new - V).max())
            V = new
            log.append(change)
            if change < tol:
                break
        else:
            raise NumericalError("barrier value iteration did not converge", history=log)
    if not np.all(np.isfinite(V)):
        raise NumericalError("barrier has unreachable nodes")
    point = tuple(float(grid.lower[k] + idx[k] * h) for k in range(grid.n))
    return BarrierField(model, point, idx, float(sigma), float(delta), GridField(grid, V.reshape(grid.shape), "barrier"), tuple(log), reflected)


@dataclass(frozen=True)
class SandwichReport:
    lower_violations: tuple
    upper_violations: tuple
    reverse_violations: tuple
    not_applicable: int
    slack_upper: float
    slack_reverse: float
    max_upper_ratio: float

    @property
    def passed(self) -> bool:
        return not (self.lower_violations or self.upper_violations or self.reverse_violations)

    def to_dict(self) -> dict:
        return {
            "lower_violations": [list(v) for v in self.lower_violations],
            "upper_violations": [list(v) for v in self.upper_violations],
            "reverse_violations": [list(v) for v in self.reverse_violations],
            "not_applicable": self.not_applicable,
            "slack_upper": self.slack_upper,
            "slack_reverse": self.slack_reverse,
            "max_upper_ratio": self.max_upper_ratio,
            "passed": self.passed,
        }


def cone_sandwich_check(barrier: BarrierField, slack_upper: float = 0.05, slack_reverse: float = 0.1) -> SandwichReport:
    """``0 <= L <= C_sigma(y - x0) (1 + slack_upper)`` everywhere, and
    ``C_sigma(y - x0) <= e^{4 delta L / sigma} L (1 + slack_reverse)`` where
    ``(delta / sigma) L < ln sqrt 2``; other nodes count as not applicable.

    ``slack_upper`` absorbs the direction-set anisotropy, which can only raise ``L``.
    """
    L = barrier.values
    C = barrier.cone_values()
    grid = barrier.field.grid

    def where(mask):
        return tuple(tuple(int(i) for i in k) for k in np.argwhere(mask))

    lower = where(L < 0)
    upper = where(L > C * (1 + slack_upper) + 1e-12)
    admissible = barrier.delta / barrier.sigma * L < LN_SQRT2
    reverse = where(admissible & (C > np.exp(4 * barrier.delta * L / barrier.sigma) * L * (1 + slack_reverse) + 1e-12))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(C > 0, L / C, 1.0)
    return SandwichReport(lower, upper, reverse, int((~admissible).sum()), slack_upper, slack_reverse, float(ratio.max()))


@dataclass(frozen=True)
class BoundaryPointCheck:
    x0: tuple
    upper_violations: int
    lower_violations: int
    ratio: float

    @property
    def passed(self) -> bool:
        return self.upper_violations == 0 and self.lower_violations == 0

    def to_dict(self) -> dict:
        return {"x0": list(self.x0), "upper_violations": self.upper_violations, "lower_violations": self.lower_violations, "ratio": self.ratio, "passed": self.passed}


@dataclass(frozen=True)
class BoundaryLipschitzReport:
    sigma: float
    delta: float
    lipschitz: float
    points: tuple

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.points)

    @property
    def ratio(self) -> float:
        return max(p.ratio for p in self.points)

    @property
    def failing(self) -> tuple:
        return tuple(p.x0 for p in self.points if not p.passed)

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "delta": self.delta,
            "lipschitz": self.lipschitz,
            "ratio": self.ratio,
            "passed": self.passed,
            "points": [p.to_dict() for p in self.points],
        }


def minimal_sigma(model: HamiltonianModel, lipschitz: float) -> float:
    """``8 Lam Lip(g)^2``, the least admissible barrier level."""
    return 8.0 * model.Lam * lipschitz**2


def boundary_lipschitz_check(
    u: GridField,
    model: HamiltonianModel,
    sigma: float | str = "auto",
    delta: float = 0.0,
    samples: int = 8,
    points=None,
    tol: float = 1e-9,
) -> BoundaryLipschitzReport:
    """Barrier sandwich ``-L(., x0) <= u - g(x0) <= L(x0, .)`` at sampled boundary nodes.

    ``g`` is the boundary trace of ``u``. ``sigma='auto'`` uses
    ``1.01 * 8 Lam Lip(g)^2``. Boundary nodes are sampled evenly along the C-order
    boundary list unless ``points`` is given. The report also holds the
    empirical ratio ``max |u(x) - g(x0)| / |x - x0|``.
    """
    grid = u.grid
    lip = lipschitz_constant(grid, u.values)
    floor = minimal_sigma(model, lip)
    sigma = 1.01 * floor if sigma == "auto" else float(sigma)
    if sigma < floor:
        raise ConfigError(f"sigma={sigma!r} is below 8*Lam*Lip(g)^2={floor!r}")
    if delta > 0 and delta >= admissible_discount(model, sigma, grid):
        raise ConfigError(f"delta={delta!r} is not below the admissible discount for sigma={sigma!r}")
    X = grid.coords()
    if points is None:
        bidx = np.flatnonzero(grid.boundary_mask().ravel())
        pick = bidx[np.linspace(0, len(bidx) - 1, samples).round().astype(int)]
        points = [X.reshape(-1, grid.n)[k] for k in pick]
    checks = []
    for x0 in points:
        up = control_distance(model, sigma, delta, grid, x0)
        down = control_distance(model, sigma, delta, grid, x0, reflected=True)
        gx0 = float(u.values[up.index])
        diff = u.values - gx0
        dist = np.linalg.norm(X - np.asarray(up.x0), axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = float(np.max(np.where(dist > 0, np.abs(diff) / dist, 0.0)))
        checks.append(
            BoundaryPointCheck(
                up.x0,
                int(np.sum(diff > up.values + tol)),
                int(np.sum(diff < -down.values - tol)),
                ratio,
            )
        )
    return BoundaryLipschitzReport(sigma, float(delta), lip, tuple(checks))
