"""Regularized Aronsson equation ``sum_ij H_pi H_pj u_ij + eps * Lap u = 0`` with Dirichlet data.

The operator is written as ``tr(a(Du) D^2 u)`` with
``a = DH(Du) DH(Du)^T + eps I`` and discretized monotonically: ``a`` is split
with Selling's decomposition (see :mod:`amlab.stencil`) so that every frozen
coefficient system is an M-matrix.

Coefficient estimate
--------------------
Off-diagonal entries of ``DH DH^T`` use the centered gradient. Diagonal entries
use the mean of the squares obtained with the one-sided slope in that axis:
``a_ii = max(v_i^2, ((v_i^+)^2 + (v_i^-)^2) / 2)`` where ``v_i^+`` is
``H_pi`` evaluated at the centered gradient with its ``i``-th entry replaced by
the forward difference (``v_i^-``: backward). For smooth ``u`` this differs from
``v_i^2`` by ``O(h^2)``; at a kink across the ``x_i`` axis it keeps ``a_ii``
from collapsing to ``eps``, which would otherwise force second differences of
size ``1/eps`` there.

Iteration
---------
Damped frozen-coefficient Picard iterations are run first. When
``newton_finish`` is set, the solve switches to semismooth Newton steps on the
exact Jacobian of the discrete residual once Picard stops making progress.
Each Newton step is stabilized by a pseudo-time shift ``I/dt`` whose step
``dt`` grows as the residual falls (switched evolution relaxation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, InputError, NumericalError
from .grid import Grid, GridField, gradient, hessian
from .hamiltonian import HamiltonianModel
from .stencil import (
    Stencil,
    assemble,
    first_differences,
    node_indices,
    pair_index,
    second_differences,
    selling,
    upwind_drift,
)

DIRECT_SOLVE_LIMIT = 200_000
AMG_LIMIT = 20_000


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-9
    max_iterations: int = 500
    damping: float = 0.7
    newton_finish: bool = True
    picard_patience: int = 5

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigError("solver tolerance must be positive")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be at least 1")
        if not 0 < self.damping <= 1:
            raise ConfigError("damping must lie in (0, 1]")


@dataclass(frozen=True)
class SolverProblem:
    """Dirichlet problem on ``grid``; ``boundary`` holds one value per boundary node (C order)."""

    model: HamiltonianModel
    grid: Grid
    boundary: np.ndarray
    eps: float
    config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.eps == 0:
            raise ConfigError("eps = 0 is the unregularized problem, which is not solved directly")
        if not 0 < self.eps <= 1:
            raise ConfigError("eps must lie in (0, 1]")
        if self.model.n != self.grid.n:
            raise InputError("model and grid dimensions differ")
        g = np.array(self.boundary, dtype=float).ravel()
        if g.size != int(self.grid.boundary_mask().sum()):
            raise InputError("boundary data must have one value per boundary node")
        if not np.all(np.isfinite(g)):
            raise InputError("boundary data must be finite")
        g.setflags(write=False)
        object.__setattr__(self, "boundary", g)

    @classmethod
    def from_function(cls, model, grid, fn, eps, config: SolverConfig | None = None) -> "SolverProblem":
        """Boundary data sampled from ``fn(x)`` with ``x`` of shape ``(..., n)``."""
        g = np.asarray(fn(grid.coords()), dtype=float)[grid.boundary_mask()]
        return cls(model, grid, g, eps, config or SolverConfig())


@dataclass(frozen=True)
class SolveResult:
    field: GridField
    residual: float
    history: tuple
    picard_iterations: int
    newton_iterations: int

    @property
    def iterations(self) -> int:
        return self.picard_iterations + self.newton_iterations


class _Discretization:
    """Grid operators shared by every iteration of one solve."""

    def __init__(self, grid: Grid, model: HamiltonianModel, eps: float):
        self.grid, self.model, self.eps = grid, model, eps
        self.pts, self.interior, self.boundary = node_indices(grid)
        self.central = first_differences(grid, "central")
        self.forward = first_differences(grid, "forward")
        self.backward = first_differences(grid, "backward")
        self.pairs = pair_index(grid.n)

    def coefficients(self, u: np.ndarray) -> dict:
        """Diffusion matrix ``a`` at interior nodes plus the pieces its derivative needs."""
        n, model = self.grid.n, self.model
        pc = np.stack([c @ u for c in self.central], axis=-1)
        pf = np.stack([c @ u for c in self.forward], axis=-1)
        pb = np.stack([c @ u for c in self.backward], axis=-1)
        v = model._grad(pc)
        a = v[:, :, None] * v[:, None, :]
        side = []
        for i in range(n):
            plus, minus = pc.copy(), pc.copy()
            plus[:, i], minus[:, i] = pf[:, i], pb[:, i]
            vp, vm = model._grad(plus)[:, i], model._grad(minus)[:, i]
            mean_sq = 0.5 * (vp * vp + vm * vm)
            use = mean_sq >= a[:, i, i]
            a[:, i, i] = np.where(use, mean_sq, a[:, i, i])
            side.append((plus, minus, vp, vm, use))
        a = a + self.eps * np.eye(n)
        return {"pc": pc, "v": v, "a": a, "side": side}

    def residual(self, u: np.ndarray, coef: dict | None = None):
        """``-sum_k w_k S_k u`` at interior nodes (the negated discrete operator)."""
        coef = coef or self.coefficients(u)
        w, o, E = selling(coef["a"], return_superbase=True)
        ops, _ = second_differences(self.grid, o)
        Su = np.stack([op @ u for op in ops], axis=-1)
        return -(w * Su).sum(axis=1), (w, o, E, ops, Su)

    def matrix(self, w, ops) -> sp.csr_matrix:
        A = sp.csr_matrix((len(w), self.grid.size))
        for k, op in enumerate(ops):
            A = A - sp.diags(w[:, k]) @ op
        return A.tocsr()

    def jacobian(self, u: np.ndarray, coef: dict, parts) -> sp.csr_matrix:
        """Exact (semismooth) Jacobian of :meth:`residual` with respect to all node values."""
        n, model = self.grid.n, self.model
        w, o, E, ops, Su = parts
        J = self.matrix(w, ops)
        # d rho_k = -sym(e_i e_j^T) : da, so dF = A du + sum_rs G_rs da_rs
        G = np.zeros((len(w), n, n))
        for k, (i, j) in enumerate(self.pairs):
            if n == 1:
                G[:, 0, 0] += Su[:, k]
                continue
            outer = E[:, i, :, None] * E[:, j, None, :]
            G += Su[:, k, None, None] * 0.5 * (outer + outer.transpose(0, 2, 1))
        if n == 1:
            # the single weight is a itself: dF = A du - (S u) da
            G = -G
        v, pc = coef["v"], coef["pc"]
        Hc = model._hess(pc)
        weights = {("c", l): np.zeros(len(w)) for l in range(n)}
        for l in range(n):
            weights[("f", l)] = np.zeros(len(w))
            weights[("b", l)] = np.zeros(len(w))
        for r in range(n):
            for s in range(n):
                if r == s:
                    continue
                # G_rs (v_r dv_s + v_s dv_r), summed over ordered pairs
                for l in range(n):
                    weights[("c", l)] += 2.0 * G[:, r, s] * v[:, r] * Hc[:, s, l]
        for r in range(n):
            plus, minus, vp, vm, use = coef["side"][r]
            Hp, Hm = model._hess(plus), model._hess(minus)
            g = G[:, r, r]
            for l in range(n):
                centered = 2.0 * v[:, r] * Hc[:, r, l]
                if l == r:
                    weights[("f", r)] += np.where(use, g * vp * Hp[:, r, r], 0.0)
                    weights[("b", r)] += np.where(use, g * vm * Hm[:, r, r], 0.0)
                    weights[("c", r)] += np.where(use, 0.0, g * centered)
                else:
                    side_term = vp * Hp[:, r, l] + vm * Hm[:, r, l]
                    weights[("c", l)] += g * np.where(use, side_term, centered)
        ops_by_kind = {"c": self.central, "f": self.forward, "b": self.backward}
        for (kind, l), wt in weights.items():
            if np.any(wt):
                J = J + sp.diags(wt) @ ops_by_kind[kind][l]
        return J.tocsr()


def _solve(matrix: sp.spmatrix, rhs: np.ndarray, dim: int = 2, atol: float = 1e-12) -> np.ndarray:
    """Direct sparse solve, or AMG-preconditioned GMRES for large 3D systems.

    Direct factorization of 3D stencils fills in badly (tens of millions of
    entries already at 40^3 nodes), so 3D systems above ``AMG_LIMIT`` unknowns
    and every system above ``DIRECT_SOLVE_LIMIT`` go to the iterative path.
    It falls back to a direct solve if GMRES does not converge.
    """
    size = matrix.shape[0]
    if size <= DIRECT_SOLVE_LIMIT and (dim < 3 or size <= AMG_LIMIT):
        return spla.spsolve(matrix.tocsc(), rhs)
    A = matrix.tocsr()
    prec = pyamg.ruge_stuben_solver(A).aspreconditioner()
    x, info = spla.gmres(A, rhs, M=prec, rtol=1e-13, atol=atol, restart=60, maxiter=40)
    if info == 0:
        return x
    if size > DIRECT_SOLVE_LIMIT:
        raise NumericalError(f"iterative linear solve failed (info={info})")
    return spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A").solve(rhs)


def harmonic_extension(grid: Grid, boundary: np.ndarray) -> np.ndarray:
    """Discrete harmonic extension of boundary values; returns the full node vector."""
    pts, interior, bnd = node_indices(grid)
    u = np.zeros(grid.size)
    u[bnd] = boundary
    lap = assemble(grid, np.broadcast_to(np.eye(grid.n), (len(pts), grid.n, grid.n)).copy())
    u[interior] = _solve(lap.interior_block, -(lap.boundary_block @ boundary), grid.n)
    return u


def solve_regularized(problem: SolverProblem) -> SolveResult:
    """Solve the regularized Dirichlet problem; raises :class:`NumericalError` on non-convergence."""
    cfg = problem.config
    disc = _Discretization(problem.grid, problem.model, problem.eps)
    interior, bnd = disc.interior, disc.boundary
    u = harmonic_extension(problem.grid, problem.boundary)
    history: list[float] = []
    omega = cfg.damping
    picard = newton = 0

    coef = disc.coefficients(u)
    F, parts = disc.residual(u, coef)
    res = float(np.abs(F).max())
    history.append(res)
    # Picard phase
    while res >= cfg.tolerance and picard + newton < cfg.max_iterations:
        w, _, _, ops, _ = parts
        A = disc.matrix(w, ops)
        target = u.copy()
        target[interior] = _solve(A[:, interior], -(A[:, bnd] @ u[bnd]), disc.grid.n, 1e-3 * cfg.tolerance)
        trial = (1 - omega) * u + omega * target
        coef_t = disc.coefficients(trial)
        F_t, parts_t = disc.residual(trial, coef_t)
        res_t = float(np.abs(F_t).max())
        picard += 1
        if res_t > res:
            omega = max(0.5 * omega, 1e-3)
        u, coef, F, parts, res = trial, coef_t, F_t, parts_t, res_t
        history.append(res)
        # hand over to Newton once Picard contracts by less than half per patience window
        k = cfg.picard_patience
        if cfg.newton_finish and len(history) > k and history[-1] > 0.5 * min(history[: -k]):
            break

    # Newton phase with pseudo-time stabilization
    if cfg.newton_finish and res >= cfg.tolerance:
        diag = disc.matrix(parts[0], parts[3])[:, interior].diagonal()
        inv_dt = 0.25 * float(np.median(diag))
        norm = float(np.linalg.norm(F))
        J = None
        while res >= cfg.tolerance and picard + newton < cfg.max_iterations:
            if J is None:
                J = disc.jacobian(u, coef, parts)
            M = J[:, interior] + inv_dt * sp.eye(len(interior), format="csr")
            step = _solve(M, -F, disc.grid.n, 1e-3 * cfg.tolerance)
            trial = u.copy()
            trial[interior] += step
            coef_t = disc.coefficients(trial)
            F_t, parts_t = disc.residual(trial, coef_t)
            res_t = float(np.abs(F_t).max())
            norm_t = float(np.linalg.norm(F_t))
            newton += 1
            if not (np.isfinite(norm_t) and norm_t < norm):
                # reject: shorten the pseudo-time step and retry from the same iterate
                inv_dt = max(4.0 * inv_dt, 1e-12 * float(np.median(diag)))
                history.append(res)
                continue
            inv_dt = inv_dt * norm_t / norm
            u, coef, F, parts, res, norm = trial, coef_t, F_t, parts_t, res_t, norm_t
            J = None
            history.append(res)

    if not res < cfg.tolerance:
        raise NumericalError(
            f"regularized solve did not reach tolerance {cfg.tolerance!r} "
            f"(residual {res!r} after {picard + newton} iterations)",
            history=history,
        )
    field_ = GridField(problem.grid, u.reshape(problem.grid.shape), f"u_eps={problem.eps!r}")
    return SolveResult(field_, res, tuple(history), picard, newton)


def residual_field(u: GridField, model: HamiltonianModel, eps: float) -> np.ndarray:
    """Discrete residual of the regularized equation at interior nodes, shape of the interior."""
    disc = _Discretization(u.grid, model, eps)
    F, _ = disc.residual(u.values.ravel())
    return (-F).reshape(tuple(c - 2 for c in u.grid.shape))


# --------------------------------------------------------------- linearized operator


@dataclass(frozen=True)
class LinearizedStencil:
    """Frozen-coefficient linearization ``L v = -a : D^2 v - b . Dv`` at a solved field.

    ``stencil.matrix`` maps all node values to interior rows. ``upwind`` holds the
    sign of each drift component per interior node.
    """

    stencil: Stencil
    a: np.ndarray
    b: np.ndarray
    upwind: np.ndarray
    violations: tuple
    u: GridField
    model: HamiltonianModel
    eps: float

    @property
    def grid(self) -> Grid:
        return self.stencil.grid

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.stencil.apply(v)


def drift_field(u: GridField, model: HamiltonianModel) -> np.ndarray:
    """``b_l = 2 H_{p_i p_l}(Du) u_{x_i x_j} H_{p_j}(Du)`` at interior nodes, shape ``(m, n)``."""
    n = u.grid.n
    p = gradient(u)[u.grid.interior].reshape(-1, n)
    D2u = hessian(u).reshape(-1, n, n)
    v = model._grad(p)
    return 2.0 * np.einsum("mli,mij,mj->ml", model._hess(p), D2u, v)


def monotonicity_violations(stencil: Stencil, tol: float = 1e-9) -> np.ndarray:
    """Interior rows with a positive off-diagonal, a nonpositive diagonal or a nonzero row sum."""
    A = stencil.matrix.tocoo()
    rows = np.arange(A.shape[0])
    diag = np.zeros(A.shape[0])
    on_diag = A.col == stencil.interior_index[A.row]
    np.add.at(diag, A.row[on_diag], A.data[on_diag])
    scale = np.maximum(np.abs(diag), 1.0)
    bad = np.zeros(A.shape[0], dtype=bool)
    off = ~on_diag
    pos = A.data[off] > tol * scale[A.row[off]]
    bad[A.row[off][pos]] = True
    bad |= diag <= 0
    rowsum = np.asarray(stencil.matrix.sum(axis=1)).ravel()
    bad |= np.abs(rowsum) > tol * scale
    return rows[bad]


def assemble_linearized(u: GridField, model: HamiltonianModel, eps: float, max_violation_fraction: float = 0.0) -> LinearizedStencil:
    """Monotone discretization of the linearized operator at ``u``.

    The second-order part uses the same diffusion estimate as the nonlinear
    solver; the drift is upwinded per component. Rows breaking the M-matrix
    sign pattern are listed in ``violations``; more than
    ``max_violation_fraction`` of them raises :class:`NumericalError`.
    """
    disc = _Discretization(u.grid, model, eps)
    a = disc.coefficients(u.values.ravel())["a"]
    b = drift_field(u, model)
    stencil = assemble(u.grid, a, b)
    bad = monotonicity_violations(stencil)
    if len(bad) > max_violation_fraction * len(a):
        raise NumericalError(f"linearized stencil breaks monotonicity at {len(bad)} of {len(a)} nodes")
    return LinearizedStencil(stencil, a, b, np.sign(b).astype(np.int8), tuple(int(i) for i in bad), u, model, eps)


# ----------------------------------------------------------------------------- checks


@dataclass(frozen=True)
class MaxPrincipleReport:
    max_abs_u: float
    max_abs_g: float
    tol: float = 1e-10

    @property
    def passed(self) -> bool:
        return self.max_abs_u <= self.max_abs_g + self.tol

    def to_dict(self) -> dict:
        return {"max_abs_u": self.max_abs_u, "max_abs_g": self.max_abs_g, "tol": self.tol, "passed": self.passed}


def check_max_principle(u: GridField, boundary: np.ndarray | None = None) -> MaxPrincipleReport:
    """Compare ``max |u|`` with the largest boundary value (defaults to the trace of ``u``)."""
    g = u.boundary_values() if boundary is None else np.asarray(boundary, dtype=float)
    return MaxPrincipleReport(float(np.abs(u.values).max()), float(np.abs(g).max()))


@dataclass(frozen=True)
class GradientBoundReport:
    eps: tuple
    max_gradient: tuple

    @property
    def spread(self) -> float:
        g = np.asarray(self.max_gradient)
        return float(g.max() / g.min() - 1.0) if g.min() > 0 else 0.0

    @property
    def passed(self) -> bool:
        g = np.asarray(self.max_gradient)
        return bool(g.max() <= 2.0 * np.median(g))

    def to_dict(self) -> dict:
        return {"eps": list(self.eps), "max_gradient": list(self.max_gradient), "spread": self.spread, "passed": self.passed}


def interior_gradient_bound(fields, eps, lower, upper) -> GradientBoundReport:
    """``max |Du|`` over the sub-box ``[lower, upper]`` for each solved field of an eps sweep."""
    values = []
    for f in fields:
        sub, slices = f.grid.subgrid(lower, upper)
        Du = gradient(f)[slices]
        values.append(float(np.linalg.norm(Du, axis=-1).max()))
    return GradientBoundReport(tuple(float(e) for e in eps), tuple(values))
