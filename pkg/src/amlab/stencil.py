"""Monotone finite-difference stencils for ``-tr(a D^2 v) - b . Dv``.

The second-order part uses Selling's decomposition: every symmetric positive
definite ``a`` (n <= 3) is written as ``sum_k rho_k e_k e_k^T`` with
``rho_k >= 0`` and integer offsets ``e_k``. Each term becomes a second
difference along ``h e_k``, so the assembled matrix has a positive diagonal,
nonpositive off-diagonal entries and zero row sums, whatever the anisotropy
of ``a``. The drift is upwinded per axis.

Offsets that leave the box are shortened to the point where they cross the
boundary, and the value there is interpolated multilinearly from the boundary
nodes of that face. That keeps the stencil monotone up to the boundary at the
price of first-order consistency on those arms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import Grid

_SUPERBASE = {
    2: np.array([[1, 0], [0, 1], [-1, -1]]),
    3: np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [-1, -1, -1]]),
}


def selling(a: np.ndarray, max_iter: int = 10_000, return_superbase: bool = False):
    """Selling decomposition of a stack of SPD matrices.

    Parameters
    ----------
    a : ndarray, shape (m, n, n)

    Returns
    -------
    weights : ndarray, shape (m, K)
        Nonnegative; ``K = 1, 3, 6`` for ``n = 1, 2, 3``.
    offsets : ndarray of int, shape (m, K, n)
        ``sum_k weights[:, k] * outer(offsets[:, k], offsets[:, k]) == a``.
    superbase : ndarray of int, shape (m, n + 1, n)
        Only with ``return_superbase``; the reduced superbase the weights come from.
    """
    a = np.asarray(a, dtype=float)
    m, n = a.shape[0], a.shape[-1]
    if n == 1:
        out = (a[:, :, 0].copy(), np.ones((m, 1, 1), dtype=np.int64))
        return out + (np.ones((m, 2, 1), dtype=np.int64) * np.array([[1], [-1]]),) if return_superbase else out
    base = _SUPERBASE[n]
    E = np.broadcast_to(base, (m,) + base.shape).copy()
    tol = 1e-13 * np.trace(a, axis1=1, axis2=2)
    pairs = list(itertools.combinations(range(n + 1), 2))

    def dot(i, j, sel=slice(None)):
        return np.einsum("mk,mkl,ml->m", E[sel, i], a[sel], E[sel, j])

    active = np.arange(m)
    for _ in range(max_iter):
        if active.size == 0:
            break
        changed = np.zeros(active.size, dtype=bool)
        for i, j in pairs:
            hit = dot(i, j, active) > tol[active]
            if not hit.any():
                continue
            changed |= hit
            rows = active[hit]
            rest = [k for k in range(n + 1) if k not in (i, j)]
            ei = E[rows, i].copy()
            if n == 2:
                (k,) = rest
                E[rows, k] = ei - E[rows, j]
            else:
                for k in rest:
                    E[rows, k] = E[rows, k] + ei
            E[rows, i] = -ei
        active = active[changed]
    else:
        raise RuntimeError("Selling reduction did not terminate")

    weights = np.empty((m, len(pairs)))
    offsets = np.empty((m, len(pairs), n), dtype=np.int64)
    for idx, (i, j) in enumerate(pairs):
        rest = [k for k in range(n + 1) if k not in (i, j)]
        weights[:, idx] = -dot(i, j)
        if n == 2:
            ek = E[:, rest[0]]
            offsets[:, idx] = np.stack([-ek[:, 1], ek[:, 0]], axis=-1)
        else:
            offsets[:, idx] = np.cross(E[:, rest[0]], E[:, rest[1]])
    weights[weights < 0] = 0.0
    if return_superbase:
        return weights, offsets, E
    return weights, offsets


def pair_index(n: int) -> list[tuple[int, int]]:
    """Superbase index pairs in the order used for the weight/offset slots."""
    if n == 1:
        return [(0, 1)]
    return list(itertools.combinations(range(n + 1), 2))


def node_indices(grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Interior multi-indices (C order) and the flat indices of interior and boundary nodes."""
    inner = np.stack(np.meshgrid(*[np.arange(1, c - 1) for c in grid.shape], indexing="ij"), axis=-1)
    inner = inner.reshape(-1, grid.n)
    mask = grid.boundary_mask().ravel()
    flat = np.arange(grid.size)
    return inner, flat[~mask], flat[mask]


def _arm(points, steps, shape):
    """Where ``points + s*steps`` stops inside the index box, ``s in (0, 1]``.

    Returns the fraction ``s`` and a list of (mask, flat index, weight) arrays for
    the multilinear interpolation at the end point.
    """
    shape_arr = np.asarray(shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        room_hi = np.where(steps > 0, (shape_arr - 1 - points) / steps, np.inf)
        room_lo = np.where(steps < 0, points / -steps, np.inf)
    s = np.minimum(1.0, np.minimum(room_hi, room_lo).min(axis=1))
    end = points + s[:, None] * steps
    exact = np.rint(end)
    end = np.where(np.abs(end - exact) < 1e-9, exact, end)
    base = np.minimum(np.floor(end).astype(np.int64), shape_arr - 1)
    frac = end - base
    terms = []
    for corner in itertools.product((0, 1), repeat=points.shape[1]):
        corner = np.asarray(corner)
        w = np.prod(np.where(corner == 1, frac, 1.0 - frac), axis=1)
        idx = np.minimum(base + corner, shape_arr - 1)
        terms.append((w > 0, np.ravel_multi_index(idx.T, shape), w))
    return s, terms


def second_differences(grid: Grid, offsets: np.ndarray) -> tuple[list[sp.csr_matrix], int]:
    """One sparse operator per offset slot approximating ``e^T D^2 v e``.

    ``offsets`` has shape ``(m, K, n)``. Row ``i`` of operator ``k`` is the
    (possibly shortened) three-point second difference along ``h * offsets[i, k]``.
    Returns the operators (shape ``(m, grid.size)``) and the number of shortened arms.
    """
    h = grid.h
    pts, interior_index, _ = node_indices(grid)
    m = len(pts)
    ar = np.arange(m)
    ops = []
    truncated = 0
    for k in range(offsets.shape[1]):
        v = offsets[:, k].astype(float)
        p = pts.astype(float)
        s_plus, t_plus = _arm(p, v, grid.shape)
        s_minus, t_minus = _arm(p, -v, grid.shape)
        truncated += int(np.sum(s_plus < 1) + np.sum(s_minus < 1))
        span = s_plus + s_minus
        c_plus = 2.0 / (s_plus * span * h**2)
        c_minus = 2.0 / (s_minus * span * h**2)
        rows, cols, vals = [ar], [interior_index], [-(c_plus + c_minus)]
        for coef, terms in ((c_plus, t_plus), (c_minus, t_minus)):
            for keep, flat, w in terms:
                rows.append(ar[keep])
                cols.append(flat[keep])
                vals.append(coef[keep] * w[keep])
        op = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, grid.size))
        op.sum_duplicates()
        ops.append(op)
    return ops, truncated


def first_differences(grid: Grid, kind: str = "central") -> list[sp.csr_matrix]:
    """Per-axis difference operators at interior nodes, shape ``(m, grid.size)``.

    ``kind`` is ``'central'``, ``'forward'`` or ``'backward'``.
    """
    pts, interior_index, _ = node_indices(grid)
    m = len(pts)
    ar = np.arange(m)
    ops = []
    for axis in range(grid.n):
        step = np.zeros(grid.n, dtype=np.int64)
        step[axis] = 1
        fwd = np.ravel_multi_index((pts + step).T, grid.shape)
        bwd = np.ravel_multi_index((pts - step).T, grid.shape)
        if kind == "central":
            rows, cols, vals = [ar, ar], [fwd, bwd], [np.full(m, 0.5), np.full(m, -0.5)]
        elif kind == "forward":
            rows, cols, vals = [ar, ar], [fwd, interior_index], [np.ones(m), -np.ones(m)]
        elif kind == "backward":
            rows, cols, vals = [ar, ar], [interior_index, bwd], [np.ones(m), -np.ones(m)]
        else:
            raise ValueError(f"unknown difference kind {kind!r}")
        ops.append(
            sp.csr_matrix((np.concatenate(vals) / grid.h, (np.concatenate(rows), np.concatenate(cols))), shape=(m, grid.size))
        )
    return ops


@dataclass(frozen=True)
class Stencil:
    """Sparse operator rows for the interior nodes of ``grid``.

    ``matrix`` has shape ``(n_interior, grid.size)``: columns index every node in
    C order, so boundary columns carry the coupling to Dirichlet values.
    """

    grid: Grid
    matrix: sp.csr_matrix
    interior_index: np.ndarray
    boundary_index: np.ndarray
    truncated_arms: int = 0
    max_offset: int = 1

    @property
    def interior_block(self) -> sp.csc_matrix:
        return self.matrix[:, self.interior_index].tocsc()

    @property
    def boundary_block(self) -> sp.csr_matrix:
        return self.matrix[:, self.boundary_index].tocsr()

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Operator applied to a full-grid array; returns interior values, shape ``interior``."""
        out = self.matrix @ np.asarray(values, dtype=float).ravel()
        return out.reshape(tuple(c - 2 for c in self.grid.shape))


def upwind_drift(grid: Grid, drift: np.ndarray) -> sp.csr_matrix:
    """``-drift . Dv`` with one-sided differences taken in the direction of ``drift``."""
    fwd = first_differences(grid, "forward")
    bwd = first_differences(grid, "backward")
    out = sp.csr_matrix((len(drift), grid.size))
    for axis in range(grid.n):
        b = drift[:, axis]
        out = out - sp.diags(np.maximum(b, 0.0)) @ fwd[axis] - sp.diags(np.minimum(b, 0.0)) @ bwd[axis]
    return out


def assemble(grid: Grid, a: np.ndarray, drift: np.ndarray | None = None) -> Stencil:
    """Assemble ``-tr(a D^2 v) - drift . Dv`` on the interior nodes of ``grid``.

    ``a`` has shape ``(m, n, n)`` and ``drift`` shape ``(m, n)``, one entry per
    interior node in C order.
    """
    weights, offsets = selling(a)
    ops, truncated = second_differences(grid, offsets)
    matrix = sp.csr_matrix((weights.shape[0], grid.size))
    for k, op in enumerate(ops):
        matrix = matrix - sp.diags(weights[:, k]) @ op
    if drift is not None:
        matrix = matrix + upwind_drift(grid, np.asarray(drift, dtype=float))
    matrix = matrix.tocsr()
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    _, interior_index, boundary_index = node_indices(grid)
    return Stencil(grid, matrix, interior_index, boundary_index, truncated, int(np.abs(offsets).max()))
