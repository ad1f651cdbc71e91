"""Scenario harnesses: flatness of nearly affine solutions, stability under mollification, blow-ups.

Flatness runs solve on ``[-3, 3]^n`` with data ``x_n + tau * psi``, where
``psi`` is a product of one-dimensional bumps ``(1 - s^2)^3`` (C^2, sup 1).
The bump in ``x_n`` is centred on the bottom face and spans the whole box, so
``psi`` decreases in ``x_n`` across the inner box ``[-1, 1]^n``. That keeps
``H(Du)`` below ``H(e_n)`` there and the defect ``delta`` positive. The
tangential bumps have seeded centres in ``[-1, 1]`` and widths in ``[4, 6]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .barriers import lipschitz_constant
from .errors import InputError
from .grid import Grid, GridField, build_grid, gradient
from .hamiltonian import HamiltonianModel, mollify
from .pde_solver import SolverConfig, SolverProblem, solve_regularized


def bump(s: np.ndarray) -> np.ndarray:
    """``(1 - s^2)^3`` on ``|s| < 1``, zero outside."""
    return np.clip(1.0 - s * s, 0.0, None) ** 3


@dataclass(frozen=True)
class Perturbation:
    """``psi(x) = prod_i bump((x_i - c_i) / w_i)``."""

    centers: tuple
    widths: tuple

    @classmethod
    def seeded(cls, n: int, seed: int) -> "Perturbation":
        rng = np.random.default_rng(seed)
        centers = [float(c) for c in rng.uniform(-1.0, 1.0, n - 1)] + [-3.0]
        widths = [float(w) for w in rng.uniform(4.0, 6.0, n - 1)] + [6.0]
        return cls(tuple(centers), tuple(widths))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        out = np.ones(x.shape[:-1])
        for i, (c, w) in enumerate(zip(self.centers, self.widths)):
            out = out * bump((x[..., i] - c) / w)
        return out


# ------------------------------------------------------------------------- flatness


@dataclass(frozen=True)
class FlatnessReport:
    n: int
    h: float
    tau_target: float
    tau_measured: float
    eps: float
    mu: float
    x0: tuple
    delta: float
    lhs: float
    rhs_tau: float
    rhs_delta: float
    rhs_tail: float
    c_emp: float | None
    seed: int
    valid: bool
    note: str = ""

    @property
    def rhs(self) -> float:
        return self.rhs_tau + self.rhs_delta + self.rhs_tail

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else math.inf

    @property
    def passed(self) -> bool:
        if not self.valid or self.c_emp is None:
            return False
        return self.lhs <= self.c_emp * self.rhs

    @property
    def status(self) -> str:
        if not self.valid:
            return "invalid"
        return "pass" if self.passed else "fail"

    def with_constant(self, c_emp: float) -> "FlatnessReport":
        return FlatnessReport(**{**self.__dict__, "c_emp": float(c_emp)})

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "h": self.h,
            "tau_target": self.tau_target,
            "tau_measured": self.tau_measured,
            "eps": self.eps,
            "mu": self.mu,
            "x0": list(self.x0),
            "delta": self.delta,
            "lhs": self.lhs,
            "rhs_tau": self.rhs_tau,
            "rhs_delta": self.rhs_delta,
            "rhs_tail": self.rhs_tail,
            "rhs": self.rhs,
            "c_emp": self.c_emp,
            "seed": self.seed,
            "valid": self.valid,
            "status": self.status,
            "note": self.note,
        }


def flatness_experiment(
    model: HamiltonianModel,
    tau: float,
    eps: float,
    seed: int = 0,
    nodes: int = 61,
    mu: float | None = None,
    c_emp: float | None = None,
    config: SolverConfig | None = None,
) -> FlatnessReport:
    """One flatness run on ``[-3, 3]^n`` with ``nodes`` per axis.

    ``x0`` is the node in ``[-1, 1]^n`` where ``H(Du)`` is largest;
    ``delta = H(e_n) - H(Du(x0))`` and ``LHS = |Du(x0) - e_n|^2``. The run is
    valid only if ``0 < delta < H(e_n) / 2``.
    """
    if not 0 <= tau < 1:
        raise InputError("tau must lie in [0, 1)")
    n = model.n
    mu = model.lam / (16.0 * n) if mu is None else float(mu)
    grid = build_grid([(-3.0, 3.0)] * n, nodes)
    psi = Perturbation.seeded(n, seed)
    data = lambda x: x[..., -1] + tau * psi(x)  # noqa: E731
    sol = solve_regularized(SolverProblem.from_function(model, grid, data, eps, config or SolverConfig())).field
    X = grid.coords()
    tau_measured = float(np.abs(sol.values - X[..., -1]).max())
    inner = np.all(np.abs(X) <= 1.0 + 1e-9, axis=-1)
    Du = gradient(sol)[inner]
    H = model.value(Du)
    k = int(np.argmax(H))
    x0 = tuple(float(v) for v in X[inner][k])
    e_n = np.zeros(n)
    e_n[-1] = 1.0
    H_en = float(model.value(e_n))
    delta = H_en - float(H[k])
    lhs = float(np.sum((Du[k] - e_n) ** 2))
    valid = 0.0 < delta < 0.5 * H_en
    note = "" if valid else f"delta={delta!r} outside (0, H(e_n)/2={0.5 * H_en!r})"
    tail = math.exp(-mu * delta / eps) / eps if valid else math.inf
    return FlatnessReport(
        n, grid.h, float(tau), tau_measured, float(eps), mu, x0, delta, lhs,
        tau_measured, delta, tail, c_emp, int(seed), valid, note,
    )


@dataclass(frozen=True)
class FlatnessSweep:
    calibration: tuple
    reports: tuple
    c_emp: float
    margin: float

    @property
    def monotone(self) -> bool:
        """LHS non-increasing as tau decreases, at each fixed eps and seed."""
        groups: dict[tuple, list] = {}
        for r in self.reports:
            groups.setdefault((r.eps, r.seed), []).append(r)
        for runs in groups.values():
            runs = sorted(runs, key=lambda r: -r.tau_target)
            lhs = [r.lhs for r in runs]
            if any(b > a for a, b in zip(lhs, lhs[1:])):
                return False
        return True

    @property
    def passed(self) -> bool:
        return self.monotone and all(r.passed for r in self.reports)

    def to_dict(self) -> dict:
        return {
            "c_emp": self.c_emp,
            "margin": self.margin,
            "monotone": self.monotone,
            "passed": self.passed,
            "calibration": [r.to_dict() for r in self.calibration],
            "reports": [r.to_dict() for r in self.reports],
        }


def calibrate_constant(reports, margin: float = 2.0) -> float:
    """``margin * max LHS/RHS`` over valid runs; NaN if no run is valid."""
    ratios = [r.ratio for r in reports if r.valid]
    if not ratios:
        return math.nan
    return margin * max(ratios)


def flatness_sweep(
    model: HamiltonianModel,
    taus,
    epss,
    seeds=(0,),
    coarse_nodes: int = 31,
    nodes: int = 61,
    margin: float = 2.0,
    mu: float | None = None,
    config: SolverConfig | None = None,
) -> FlatnessSweep:
    """Calibrate ``C_emp`` on the coarse grid over the whole sweep, freeze it, rerun at ``nodes``.

    ``seeds`` is one seed or a sequence of seeds; each selects a perturbation.
    """
    seeds = (seeds,) if isinstance(seeds, (int, np.integer)) else tuple(seeds)
    points = [(t, e, s) for s in seeds for e in epss for t in taus]
    coarse = [flatness_experiment(model, t, e, s, coarse_nodes, mu, None, config) for t, e, s in points]
    c = calibrate_constant(coarse, margin)
    fine = [flatness_experiment(model, t, e, s, nodes, mu, c, config) for t, e, s in points]
    return FlatnessSweep(tuple(r.with_constant(c) for r in coarse), tuple(fine), c, margin)


# ------------------------------------------------------------------------ stability


@dataclass(frozen=True)
class StabilityReport:
    gammas: tuple
    max_H: tuple
    distances: tuple
    lipschitz: float
    Lam: float
    c_emp: float

    @property
    def bound(self) -> float:
        return self.c_emp * self.Lam * self.lipschitz**2

    @property
    def bounded(self) -> bool:
        return all(m <= self.bound for m in self.max_H)

    @property
    def decreasing(self) -> bool:
        d = self.distances
        return all(b <= a + 1e-10 for a, b in zip(d, d[1:]))

    @property
    def passed(self) -> bool:
        return self.bounded and self.decreasing

    def to_dict(self) -> dict:
        return {
            "gammas": list(self.gammas),
            "max_H": list(self.max_H),
            "distances": list(self.distances),
            "lipschitz": self.lipschitz,
            "Lam": self.Lam,
            "c_emp": self.c_emp,
            "bound": self.bound,
            "bounded": self.bounded,
            "decreasing": self.decreasing,
            "passed": self.passed,
        }


def stability_check(
    model: HamiltonianModel,
    gammas,
    grid: Grid,
    data,
    eps: float = 0.05,
    c_emp: float = 1.0,
    config: SolverConfig | None = None,
) -> StabilityReport:
    """Solve with ``H^gamma`` for a decreasing ``gammas`` sweep and fixed data.

    Records ``max H^gamma(Du)`` over the grid and the sup distance between
    consecutive solutions. ``data`` is a callable on coordinates.
    """
    gammas = tuple(float(g) for g in gammas)
    if any(b >= a for a, b in zip(gammas, gammas[1:])):
        raise InputError("gamma sweep must be strictly decreasing")
    g_values = np.asarray(data(grid.coords()), dtype=float)
    fields, max_H = [], []
    for gamma in gammas:
        mod = mollify(model, gamma)
        sol = solve_regularized(SolverProblem(mod, grid, g_values[grid.boundary_mask()], eps, config or SolverConfig())).field
        fields.append(sol)
        max_H.append(float(mod.value(gradient(sol)).max()))
    dist = tuple(float(np.abs(a.values - b.values).max()) for a, b in zip(fields, fields[1:]))
    return StabilityReport(gammas, tuple(max_H), dist, lipschitz_constant(grid, g_values), float(model.Lam), float(c_emp))


# -------------------------------------------------------------------------- blow-up


@dataclass(frozen=True)
class BlowupReport:
    center: tuple
    radii: tuple
    slopes: tuple
    deviations: tuple
    H_slope: tuple
    H_max: tuple
    samples_per_axis: int

    @property
    def dispersion(self) -> float:
        """Largest pairwise distance among the slopes of the last three radii."""
        s = np.asarray(self.slopes[-3:])
        return float(max(np.linalg.norm(a - b) for a in s for b in s))

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "radii": list(self.radii),
            "slopes": [list(s) for s in self.slopes],
            "deviations": list(self.deviations),
            "H_slope": list(self.H_slope),
            "H_max": list(self.H_max),
            "dispersion": self.dispersion,
            "samples_per_axis": self.samples_per_axis,
        }


def blowup_probe(u: GridField, center, radii, model: HamiltonianModel | None = None, samples: int = 21) -> BlowupReport:
    """Rescalings ``v_r(y) = (u(center + r y) - u(center)) / r`` on ``[-1, 1]^n``.

    ``u`` is interpolated multilinearly. Each ``v_r`` gets a least-squares affine
    fit over ``samples^n`` points; the slope and the sup deviation from the fit
    are recorded. With a model, ``H(slope)`` and ``max H(Du)`` over the box
    ``center + r [-1, 1]^n`` are recorded too.
    """
    radii = tuple(float(r) for r in radii)
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise InputError("radii must be strictly decreasing")
    if samples < 5:
        raise InputError("need at least 5 samples per axis")
    g = u.grid
    n = g.n
    center = np.asarray(center, dtype=float)
    lo, hi = np.asarray(g.lower), np.asarray(g.upper)
    if np.any(center - radii[0] < lo - 1e-12) or np.any(center + radii[0] > hi + 1e-12):
        raise InputError("the largest blow-up box leaves the field's domain")
    interp = RegularGridInterpolator(tuple(g.axes()), u.values, method="linear")
    Du = gradient(u) if model is not None else None
    y = np.stack(np.meshgrid(*[np.linspace(-1, 1, samples)] * n, indexing="ij"), axis=-1).reshape(-1, n)
    design = np.hstack([y, np.ones((len(y), 1))])
    u0 = float(interp(center[None, :])[0])
    slopes, devs, Hs, Hmax = [], [], [], []
    coords = g.coords()
    for r in radii:
        v = (interp(center + r * y) - u0) / r
        coef, *_ = np.linalg.lstsq(design, v, rcond=None)
        slopes.append(tuple(float(c) for c in coef[:n]))
        devs.append(float(np.abs(design @ coef - v).max()))
        if model is not None:
            inside = np.all(np.abs(coords - center) <= r + 1e-12, axis=-1)
            Hs.append(float(model.value(coef[:n])))
            Hmax.append(float(model.value(Du[inside]).max()))
    return BlowupReport(tuple(float(c) for c in center), radii, tuple(slopes), tuple(devs), tuple(Hs), tuple(Hmax), samples)
