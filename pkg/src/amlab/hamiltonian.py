"""Convex Hamiltonians, their mollification, Legendre transform and cones.

Every model maps momenta ``p`` of shape ``(..., n)`` to values of shape ``(...)``
and provides the gradient and Hessian in closed form. Models are frozen
dataclasses and safe to share between threads.

The stated constants ``lam <= Lam`` bound the Hessian eigenvalues. For the
separable-power family the Hessian is unbounded (``alpha > 2``) or degenerate
(``alpha < 2``) at infinity, so its constants refer to the box
``|p_i| <= radius``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import NdBSpline, make_interp_spline
from scipy.special import roots_jacobi

from .errors import DomainError, InputError, NumericalError

INNER_TOL = 1e-12
INNER_MAXITER = 100


def _as_batch(p, n):
    p = np.asarray(p, dtype=float)
    if p.shape[-1:] != (n,):
        raise InputError(f"expected trailing dimension {n}, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InputError("momentum must be finite")
    return p.reshape(-1, n), p.shape[:-1]


class HamiltonianModel:
    """Base class: subclasses implement ``_value``, ``_grad`` and ``_hess`` on ``(m, n)`` batches."""

    family: str = "abstract"
    n: int
    lam: float
    Lam: float
    even: bool = False

    def _value(self, P: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _grad(self, P: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _hess(self, P: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_constants(self):
        if not (0.0 < self.lam <= self.Lam < math.inf):
            raise InputError(f"need 0 < lam <= Lam < inf, got lam={self.lam}, Lam={self.Lam}")

    def value(self, p) -> np.ndarray:
        P, shape = _as_batch(p, self.n)
        return self._value(P).reshape(shape)

    def grad(self, p) -> np.ndarray:
        P, shape = _as_batch(p, self.n)
        return self._grad(P).reshape(shape + (self.n,))

    def hess(self, p) -> np.ndarray:
        P, shape = _as_batch(p, self.n)
        return self._hess(P).reshape(shape + (self.n, self.n))

    def eval(self, p):
        """Value, gradient and Hessian at ``p``."""
        P, shape = _as_batch(p, self.n)
        return (
            self._value(P).reshape(shape),
            self._grad(P).reshape(shape + (self.n,)),
            self._hess(P).reshape(shape + (self.n, self.n)),
        )

    def params(self) -> dict:
        return {"family": self.family, "n": self.n, "lam": self.lam, "Lam": self.Lam}


@dataclass(frozen=True)
class Quadratic(HamiltonianModel):
    """``H(p) = |p|^2 / 2``."""

    n: int
    lam: float = 1.0
    Lam: float = 1.0
    family = "quadratic"
    even = True

    def __post_init__(self):
        self._check_constants()

    def _value(self, P):
        return 0.5 * np.einsum("mi,mi->m", P, P)

    def _grad(self, P):
        return P.copy()

    def _hess(self, P):
        return np.broadcast_to(np.eye(self.n), (len(P), self.n, self.n)).copy()


@dataclass(frozen=True)
class AnisotropicQuadratic(HamiltonianModel):
    """``H(p) = <A p, p> / 2`` for a symmetric positive definite ``A``."""

    A: np.ndarray
    lam: float | None = None
    Lam: float | None = None
    family = "anisotropic-quadratic"
    even = True

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, A.T, rtol=0, atol=1e-14):
            raise InputError("A must be a symmetric square matrix")
        eig = np.linalg.eigvalsh(A)
        if eig[0] <= 0:
            raise InputError("A must be positive definite")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        if self.lam is None:
            object.__setattr__(self, "lam", float(eig[0]))
        if self.Lam is None:
            object.__setattr__(self, "Lam", float(eig[-1]))
        self._check_constants()

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def _value(self, P):
        return 0.5 * np.einsum("mi,ij,mj->m", P, self.A, P)

    def _grad(self, P):
        return P @ self.A

    def _hess(self, P):
        return np.broadcast_to(self.A, (len(P), self.n, self.n)).copy()

    def params(self) -> dict:
        return super().params() | {"A": self.A.tolist()}


def separable_power_curvature_range(alpha: float, radius: float) -> tuple[float, float]:
    """Exact range of ``f''`` on ``[-radius, radius]`` for ``f(t) = ((1+t^2)^(alpha/2) - 1)/alpha``.

    ``f''(t) = (1+t^2)^(alpha/2-2) (1 + (alpha-1) t^2)`` is monotone in ``t^2``
    (its only critical point in ``s = t^2`` is ``s = -3/(alpha-1) < 0``), so the
    extremes are ``f''(0) = 1`` and ``f''(radius)``.
    """
    s = radius * radius
    edge = (1.0 + s) ** (alpha / 2 - 2) * (1.0 + (alpha - 1.0) * s)
    return min(1.0, edge), max(1.0, edge)


@dataclass(frozen=True)
class SeparablePower(HamiltonianModel):
    """``H(p) = sum_i ((1 + p_i^2)^(alpha/2) - 1) / alpha`` with ``alpha`` in (1,2) or (2,inf).

    ``lam`` and ``Lam`` default to the exact curvature range on ``|p_i| <= radius``.
    """

    n: int
    alpha: float
    radius: float = 2.0
    lam: float | None = None
    Lam: float | None = None
    family = "separable-power"
    even = True

    def __post_init__(self):
        if not (self.alpha > 1.0 and self.alpha != 2.0):
            raise InputError("alpha must lie in (1, 2) or (2, inf)")
        lo, hi = separable_power_curvature_range(self.alpha, self.radius)
        if self.lam is None:
            object.__setattr__(self, "lam", lo)
        if self.Lam is None:
            object.__setattr__(self, "Lam", hi)
        self._check_constants()

    def f(self, t):
        return ((1.0 + t * t) ** (self.alpha / 2) - 1.0) / self.alpha

    def df(self, t):
        return t * (1.0 + t * t) ** (self.alpha / 2 - 1)

    def d2f(self, t):
        return (1.0 + t * t) ** (self.alpha / 2 - 2) * (1.0 + (self.alpha - 1.0) * t * t)

    def _value(self, P):
        return self.f(P).sum(axis=1)

    def _grad(self, P):
        return self.df(P)

    def _hess(self, P):
        out = np.zeros((len(P), self.n, self.n))
        idx = np.arange(self.n)
        out[:, idx, idx] = self.d2f(P)
        return out

    def params(self) -> dict:
        return super().params() | {"alpha": self.alpha, "radius": self.radius}


@dataclass(frozen=True)
class Tabulated(HamiltonianModel):
    """Tensor-product cubic spline through tabulated values of ``H``.

    ``axes`` are increasing node vectors (at least 4 per axis) and ``values`` has
    shape ``tuple(len(a) for a in axes)``. Queries outside the table raise
    :class:`DomainError`; nothing is extrapolated.
    """

    axes: tuple
    values: np.ndarray
    lam: float
    Lam: float
    family = "tabulated"
    _spline: NdBSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != tuple(len(a) for a in axes):
            raise InputError("values shape does not match the table axes")
        if any(len(a) < 4 or np.any(np.diff(a) <= 0) for a in axes):
            raise InputError("each table axis needs at least 4 increasing nodes")
        if not np.all(np.isfinite(vals)):
            raise InputError("table values must be finite")
        coef = vals
        knots = []
        for ax, a in enumerate(axes):
            spl = make_interp_spline(a, coef, k=3, axis=ax)
            coef = np.moveaxis(spl.c, 0, ax)
            knots.append(spl.t)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "_spline", NdBSpline(tuple(knots), coef, 3))
        self._check_constants()
        origin = np.zeros((1, self.n))
        self._inside(origin)
        # the spline must reproduce the (H2) normalization of the table
        if abs(self._value(origin)[0]) > 1e-8 or np.abs(self._grad(origin)).max() > 1e-6:
            raise InputError("tabulated H must satisfy H(0) = 0 and DH(0) = 0")

    @property
    def n(self) -> int:
        return len(self.axes)

    def _inside(self, P):
        for k, a in enumerate(self.axes):
            if np.any(P[:, k] < a[0] - 1e-12) or np.any(P[:, k] > a[-1] + 1e-12):
                raise DomainError(f"momentum outside the table along axis {k}: [{a[0]}, {a[-1]}]")

    def _eval(self, P, nu):
        self._inside(P)
        return self._spline(P, nu=nu)

    def _value(self, P):
        return self._eval(P, (0,) * self.n)

    def _grad(self, P):
        out = np.empty_like(P)
        for i in range(self.n):
            nu = [0] * self.n
            nu[i] = 1
            out[:, i] = self._eval(P, tuple(nu))
        return out

    def _hess(self, P):
        out = np.empty((len(P), self.n, self.n))
        for i in range(self.n):
            for j in range(i, self.n):
                nu = [0] * self.n
                nu[i] += 1
                nu[j] += 1
                out[:, i, j] = out[:, j, i] = self._eval(P, tuple(nu))
        return out

    def params(self) -> dict:
        return super().params() | {"axes": [a.tolist() for a in self.axes]}


@dataclass(frozen=True)
class Reflected(HamiltonianModel):
    """``H(-p)``: the model seen by time-reversed trajectories."""

    base: HamiltonianModel

    @property
    def n(self):
        return self.base.n

    @property
    def lam(self):
        return self.base.lam

    @property
    def Lam(self):
        return self.base.Lam

    @property
    def family(self):
        return f"reflected-{self.base.family}"

    def _value(self, P):
        return self.base._value(-P)

    def _grad(self, P):
        return -self.base._grad(-P)

    def _hess(self, P):
        return self.base._hess(-P)


def reflect(model: HamiltonianModel) -> HamiltonianModel:
    """``p -> H(-p)``; even models are returned unchanged."""
    return model if model.even else Reflected(model)


# ----------------------------------------------------------------------- mollification


def bump_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[-1, 1]`` for the normalized bump ``(1 - s^2)^4 * 315/256``.

    Gauss-Jacobi with ``alpha = beta = 4`` integrates the weight exactly, so the
    rule is exact for polynomials of degree ``2 * order - 1``.
    """
    s, w = roots_jacobi(order, 4.0, 4.0)
    return s, w / w.sum()


@dataclass(frozen=True)
class Mollified(HamiltonianModel):
    """``H^g(p) = (eta_g * H)(p + shift) - (eta_g * H)(shift)`` with ``shift`` the minimizer.

    ``eta_g`` is the tensor product of 1D bumps ``(1 - (z/g)^2)^4`` (normalized).
    Quadratic families are handled analytically: the convolution only adds a
    constant, so ``H^g`` equals the base model. The separable-power family
    convolves coordinate by coordinate; every other family uses a tensor rule
    with ``order`` points per axis.
    """

    base: HamiltonianModel
    gamma: float
    order: int | None = None
    shift: np.ndarray = field(init=False)
    offset: float = field(init=False)
    log: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise InputError("mollification radius must lie in (0, 1]")
        if self.order is None:
            object.__setattr__(self, "order", max(8, math.ceil(4.0 / self.gamma)))
        s, w = bump_rule(self.order)
        object.__setattr__(self, "_s", s * self.gamma)
        object.__setattr__(self, "_w", w)
        if isinstance(self.base, (Quadratic, AnisotropicQuadratic)):
            object.__setattr__(self, "shift", np.zeros(self.n))
            object.__setattr__(self, "offset", 0.0)
            object.__setattr__(self, "log", ())
            return
        if self.n > 1 and not isinstance(self.base, SeparablePower):
            grids = np.meshgrid(*([self._s] * self.n), indexing="ij")
            nodes = np.stack([g.ravel() for g in grids], axis=-1)
            weights = np.prod(np.stack(np.meshgrid(*([w] * self.n), indexing="ij"), -1).reshape(-1, self.n), axis=1)
            object.__setattr__(self, "_nodes", nodes)
            object.__setattr__(self, "_weights", weights)
        shift, log = self._minimize()
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "log", tuple(log))
        object.__setattr__(self, "offset", float(self._conv(shift[None, :], 0)[0]))

    @property
    def n(self):
        return self.base.n

    @property
    def lam(self):
        return self.base.lam

    @property
    def Lam(self):
        return self.base.Lam

    @property
    def even(self):
        return self.base.even

    family = "mollified"

    def _analytic(self):
        return isinstance(self.base, (Quadratic, AnisotropicQuadratic))

    def _conv(self, P, order):
        """Convolution of the base value (0), gradient (1) or Hessian (2) at ``P``."""
        base = self.base
        if isinstance(base, SeparablePower):
            T = P[:, :, None] - self._s[None, None, :]
            fn = (base.f, base.df, base.d2f)[order]
            vals = fn(T) @ self._w
            if order == 0:
                return vals.sum(axis=1)
            if order == 1:
                return vals
            out = np.zeros((len(P), self.n, self.n))
            idx = np.arange(self.n)
            out[:, idx, idx] = vals
            return out
        if self.n == 1:
            nodes, weights = self._s[:, None], self._w
        else:
            nodes, weights = self._nodes, self._weights
        fn = (base._value, base._grad, base._hess)[order]
        out = None
        chunk = max(1, 200_000 // len(weights))
        parts = []
        for start in range(0, len(P), chunk):
            Q = P[start : start + chunk]
            shifted = (Q[:, None, :] - nodes[None, :, :]).reshape(-1, self.n)
            vals = fn(shifted).reshape((len(Q), len(weights)) + (self.n,) * order)
            parts.append(np.tensordot(weights, vals, axes=([0], [1])))
        out = np.concatenate(parts, axis=0)
        return out

    def _minimize(self):
        """Damped Newton for the minimizer of the (strongly convex) convolution."""
        p = np.zeros(self.n)
        log = []
        for it in range(INNER_MAXITER):
            g = self._conv(p[None, :], 1)[0]
            gnorm = float(np.abs(g).max())
            log.append((it, gnorm))
            if gnorm <= INNER_TOL:
                return p, log
            H = self._conv(p[None, :], 2)[0]
            step = -np.linalg.solve(H, g)
            f0 = self._conv(p[None, :], 0)[0]
            t = 1.0
            while t > 1e-10 and self._conv((p + t * step)[None, :], 0)[0] > f0 + 1e-4 * t * g @ step:
                t *= 0.5
            p = p + t * step
        raise NumericalError("mollifier shift minimization did not converge", history=log)

    def _value(self, P):
        if self._analytic():
            return self.base._value(P)
        return self._conv(P + self.shift, 0) - self.offset

    def _grad(self, P):
        if self._analytic():
            return self.base._grad(P)
        return self._conv(P + self.shift, 1)

    def _hess(self, P):
        if self._analytic():
            return self.base._hess(P)
        return self._conv(P + self.shift, 2)

    def params(self) -> dict:
        return self.base.params() | {"gamma": self.gamma, "order": self.order}


def mollify(model: HamiltonianModel, gamma: float, order: int | None = None) -> Mollified:
    """Mollify ``model`` at radius ``gamma`` and renormalize so that the minimum is 0 at 0."""
    return Mollified(model, gamma, order)


# ------------------------------------------------------------------ Legendre transform


def legendre_argmax(model: HamiltonianModel, q, p0=None) -> np.ndarray:
    """Solve ``DH(p) = q`` for a batch ``q`` of shape ``(m, n)`` by damped Newton.

    The objective ``H(p) - p.q`` is strongly convex, so backtracking on it makes
    the iteration globally convergent. Starts at ``q / lam``.
    """
    Q = np.asarray(q, dtype=float)
    p = Q / model.lam if p0 is None else np.array(p0, dtype=float)
    active = np.ones(len(Q), dtype=bool)
    history = []
    for _ in range(INNER_MAXITER):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            return p
        P, Qa = p[idx], Q[idx]
        g = model._grad(P) - Qa
        err = np.abs(g).max(axis=1)
        scale = 1.0 + np.abs(Qa).max(axis=1)
        done = err <= INNER_TOL * scale
        history.append(float(err.max()))
        active[idx[done]] = False
        keep = ~done
        if not keep.any():
            return p
        idx, P, Qa, g = idx[keep], P[keep], Qa[keep], g[keep]
        step = -np.linalg.solve(model._hess(P), g[..., None])[..., 0]
        # a Newton step at roundoff size means the residual has hit its floor
        tiny = np.abs(step).max(axis=1) <= 1e-13 * (1.0 + np.abs(P).max(axis=1))
        if tiny.any():
            p[idx[tiny]] = P[tiny] + step[tiny]
            active[idx[tiny]] = False
            keep = ~tiny
            idx, P, Qa, g, step = idx[keep], P[keep], Qa[keep], g[keep], step[keep]
            if idx.size == 0:
                continue
        f0 = model._value(P) - np.einsum("mi,mi->m", P, Qa)
        slope = np.einsum("mi,mi->m", g, step)
        t = np.ones(len(idx))
        for _ in range(40):
            trial = P + t[:, None] * step
            f1 = model._value(trial) - np.einsum("mi,mi->m", trial, Qa)
            bad = f1 > f0 + 1e-4 * t * slope + 1e-15 * np.abs(f0)
            # near the optimum the decrease of the objective drops below roundoff;
            # a smaller gradient residual is then the usable progress measure
            if bad.any():
                shrinks = np.abs(model._grad(trial[bad]) - Qa[bad]).max(axis=1) < 0.5 * np.abs(g[bad]).max(axis=1)
                bad[np.flatnonzero(bad)[shrinks]] = False
            if not bad.any():
                break
            t = np.where(bad, 0.5 * t, t)
        p[idx] = P + t[:, None] * step
    raise NumericalError("Legendre Newton iteration did not converge", history=history)


def legendre(model: HamiltonianModel, q):
    """Legendre transform ``L(q) = sup_p (p.q - H(p))`` and its maximizer.

    Accepts ``q`` of shape ``(..., n)``; returns ``(L, p_star)``.
    """
    Q, shape = _as_batch(q, model.n)
    p = legendre_argmax(model, Q)
    L = np.einsum("mi,mi->m", p, Q) - model._value(p)
    return L.reshape(shape), p.reshape(shape + (model.n,))


@dataclass(frozen=True)
class LegendreDual(HamiltonianModel):
    """The conjugate ``L`` of ``base`` as a model in its own right.

    ``DL(q) = p*(q)`` and ``D^2 L(q) = (D^2 H(p*))^{-1}``, so ``L`` has constants
    ``1/Lam <= 1/lam``. Conjugating it again recovers ``H``.
    """

    base: HamiltonianModel

    @property
    def n(self):
        return self.base.n

    @property
    def lam(self):
        return 1.0 / self.base.Lam

    @property
    def Lam(self):
        return 1.0 / self.base.lam

    family = "legendre-dual"

    def _value(self, Q):
        p = legendre_argmax(self.base, Q)
        return np.einsum("mi,mi->m", p, Q) - self.base._value(p)

    def _grad(self, Q):
        return legendre_argmax(self.base, Q)

    def _hess(self, Q):
        return np.linalg.inv(self.base._hess(legendre_argmax(self.base, Q)))


# ------------------------------------------------------------------------------- cones


@dataclass(frozen=True)
class ConeSpec:
    sigma: float
    model: HamiltonianModel

    def __post_init__(self):
        if not self.sigma > 0:
            raise InputError("cone level sigma must be positive")


def cone(spec: ConeSpec, x) -> np.ndarray:
    """``max { p.x : H(p) = sigma }`` for ``x`` of shape ``(..., n)``.

    On the level set the maximizer satisfies ``kappa DH(p) = x``. Writing
    ``p(kappa)`` for the solution of ``DH(p) = x / kappa``, ``H(p(kappa))`` is
    decreasing in ``kappa``; the level equation is solved by Newton in
    ``log kappa`` safeguarded with bisection.
    """
    model, sigma = spec.model, spec.sigma
    X, shape = _as_batch(x, model.n)
    out = np.zeros(len(X))
    r = np.linalg.norm(X, axis=1)
    nz = r > 0
    if not nz.any():
        return out.reshape(shape)
    Xn = X[nz]
    rn = r[nz]
    # |p| lies in [sqrt(2 sigma/Lam), sqrt(2 sigma/lam)] and |DH(p)| in [lam|p|, Lam|p|]
    lo = np.log(rn / (model.Lam * math.sqrt(2 * sigma / model.lam))) - 1.0
    hi = np.log(rn / (model.lam * math.sqrt(2 * sigma / model.Lam))) + 1.0
    s = 0.5 * (lo + hi)
    p = None
    history = []
    stalled = np.zeros(len(s), dtype=bool)
    for _ in range(4 * INNER_MAXITER):
        kappa = np.exp(s)
        p = legendre_argmax(model, Xn / kappa[:, None], p0=None if p is None else p)
        f = model._value(p) - sigma
        history.append(float(np.abs(f).max()))
        # converged, or pinned at the roundoff floor of the level equation
        if np.all((np.abs(f) <= INNER_TOL * max(1.0, sigma)) | stalled):
            break
        # H(p(kappa)) decreases with kappa
        lo = np.where(f > 0, s, lo)
        hi = np.where(f < 0, s, hi)
        y = Xn / kappa[:, None]
        hinv_y = np.linalg.solve(model._hess(p), y[..., None])[..., 0]
        dfds = -np.einsum("mi,mi->m", y, hinv_y)
        with np.errstate(divide="ignore", invalid="ignore"):
            s_new = s - f / dfds
        bad = ~np.isfinite(s_new) | (s_new <= lo) | (s_new >= hi)
        s_new = np.where(bad, 0.5 * (lo + hi), s_new)
        stalled = np.abs(s_new - s) <= 4e-16 * np.maximum(1.0, np.abs(s))
        s = s_new
    else:
        raise NumericalError("cone level-set solve did not converge", history=history)
    out[nz] = np.einsum("mi,mi->m", p, Xn)
    return out.reshape(shape)


# ------------------------------------------------------------------------ H1/H2 check


@dataclass(frozen=True)
class ConvexityReport:
    eig_min: float
    eig_max: float
    value_at_origin: float
    grad_at_origin: float
    min_value: float
    min_excess: float
    lam: float
    Lam: float
    tol: float
    samples: int
    violations: tuple

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "eig_min": self.eig_min,
            "eig_max": self.eig_max,
            "value_at_origin": self.value_at_origin,
            "grad_at_origin": self.grad_at_origin,
            "min_value": self.min_value,
            "min_excess": self.min_excess,
            "lam": self.lam,
            "Lam": self.Lam,
            "tol": self.tol,
            "samples": self.samples,
            "violations": list(self.violations),
            "passed": self.passed,
        }


def check_H1_H2(model: HamiltonianModel, box, samples: int = 500, seed: int = 0, tol: float = 1e-6) -> ConvexityReport:
    """Sample ``box = [(a_1, b_1), ...]`` and test the convexity and normalization constants.

    Checks that Hessian eigenvalues stay in ``[lam - tol, Lam + tol]``, that
    ``H(0) = 0``, ``DH(0) = 0`` and that ``H(p) >= lam |p|^2 / 2 - tol``.
    """
    box = np.asarray(box, dtype=float)
    rng = np.random.default_rng(seed)
    P = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((samples, model.n))
    P = np.vstack([np.zeros(model.n), P])
    vals = model._value(P)
    eig = np.linalg.eigvalsh(model._hess(P))
    excess = vals - 0.5 * model.lam * np.einsum("mi,mi->m", P, P)
    h0 = float(vals[0])
    g0 = float(np.abs(model._grad(P[:1])).max())
    violations = []
    if eig.min() < model.lam - tol:
        violations.append(f"Hessian eigenvalue {eig.min()!r} below lam={model.lam!r}")
    if eig.max() > model.Lam + tol:
        violations.append(f"Hessian eigenvalue {eig.max()!r} above Lam={model.Lam!r}")
    if abs(h0) > tol or g0 > tol:
        violations.append("H(0) = 0 = min H violated")
    if excess.min() < -tol:
        violations.append("H(p) >= lam |p|^2 / 2 violated")
    return ConvexityReport(
        float(eig.min()), float(eig.max()), h0, g0, float(vals.min()), float(excess.min()),
        float(model.lam), float(model.Lam), tol, samples, tuple(violations),
    )
