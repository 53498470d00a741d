"""Right-hand sides of the tail bounds, with every unspecified absolute
constant passed explicitly through ``BoundParams``.

All evaluators accept scalar or array ``t`` and work in the log domain, so a
bound far below ``e^{-700}`` comes out as ``0.0`` instead of an underflow
warning.  Probability-valued bounds are clamped at 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import FitFailure, InputError

FIT_LO = 1e-6
FIT_HI = 1e3


@dataclass(frozen=True)
class BoundParams:
    """``c`` multiplies the exponent, ``C`` is a prefactor (or the exponent
    constant where a bound is written with ``C``), ``c1`` scales validity
    thresholds."""

    c: float = 1.0
    C: float = 1.0
    c1: float = 1.0

    def __post_init__(self):
        for name in ("c", "C", "c1"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InputError(f"BoundParams.{name} must be a positive finite number, got {v!r}")

    def with_(self, **kw) -> "BoundParams":
        return BoundParams(**{**self.__dict__, **kw})


DEFAULT = BoundParams()


class RHS(NamedTuple):
    """Bound value with the flag saying whether ``t`` is in the stated range."""

    value: float | np.ndarray
    valid: bool | np.ndarray


def _out(x):
    if np.ndim(x):
        return x
    return bool(x) if np.asarray(x).dtype == bool else float(x)


def _t(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0):
        raise InputError("t must be finite and non-negative")
    return t


def _pos(**scales):
    for k, v in scales.items():
        if not (math.isfinite(v) and v > 0):
            raise InputError(f"{k} must be positive and finite, got {v!r}")


def _log_two_branch(t, quad2, lin, c, log_pref=0.0):
    """``log_pref - c * min(t^2 / quad2, t / lin)``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.minimum(t * t / quad2, t / lin)
    return log_pref - c * e


def _prob(logv, log=False):
    logv = np.minimum(logv, 0.0)
    return _out(logv if log else np.exp(logv))


LOG2 = math.log(2.0)


def hanson_wright_rhs(t, K, hsA, opA, params: BoundParams = DEFAULT, log: bool = False):
    """``2 exp(-c min(t^2 / (K^4 |A|_HS^2), t / (K^2 |A|)))``."""
    _pos(K=K, hsA=hsA, opA=opA)
    return _prob(_log_two_branch(_t(t), K ** 4 * hsA ** 2, K * K * opA, params.c, LOG2), log)


def talagrand_rhs(t, e_sup_ax, opA, params: BoundParams = DEFAULT, log: bool = False):
    """``2 exp(-c min(t^2 / (E sup |AX|)^2, t / sup |A|))``."""
    _pos(e_sup_ax=e_sup_ax, opA=opA)
    return _prob(_log_two_branch(_t(t), e_sup_ax ** 2, opA, params.c, LOG2), log)


def adamczak_rhs(t, K, e_sup_ax, opA, params: BoundParams = DEFAULT, log: bool = False):
    """``2 exp(-c min(t^2 / (K^2 (E sup |AX|)^2), t / (K^2 sup |A|)))``."""
    _pos(K=K, e_sup_ax=e_sup_ax, opA=opA)
    return _prob(_log_two_branch(_t(t), K * K * e_sup_ax ** 2, K * K * opA, params.c, LOG2), log)


def mainthm_threshold(M, e_sup_ax, opA, params: BoundParams = DEFAULT) -> float:
    return params.c1 * max(M * e_sup_ax, M * M * opA)


def mainthm_rhs(t, M, e_sup_ax, opA, params: BoundParams = DEFAULT, log: bool = False) -> RHS:
    """``exp(-c min(t^2 / (M^2 (E sup |AX|)^2), t / (M^2 sup |A|)))``.

    ``valid`` is ``t >= c1 * max(M E sup |AX|, M^2 sup |A|)``.
    """
    _pos(M=M, e_sup_ax=e_sup_ax, opA=opA)
    t = _t(t)
    v = _prob(_log_two_branch(t, M * M * e_sup_ax ** 2, M * M * opA, params.c), log)
    return RHS(v, _out(t >= mainthm_threshold(M, e_sup_ax, opA, params)))


def mainthm2_rhs(t, M, K, e_sup_ag, opA, params: BoundParams = DEFAULT, log: bool = False) -> RHS:
    """``exp(-c min(t^2 / (M^2 K^2 (E sup |AG|)^2), t / (M K sup |A|)))``.

    ``valid`` is ``t >= c1 * max(M K E sup |AG|, M K sup |A|)``.
    """
    _pos(M=M, K=K, e_sup_ag=e_sup_ag, opA=opA)
    t = _t(t)
    v = _prob(_log_two_branch(t, (M * K * e_sup_ag) ** 2, M * K * opA, params.c), log)
    thr = params.c1 * max(M * K * e_sup_ag, M * K * opA)
    return RHS(v, _out(t >= thr))


def grad_trunc_rhs(t, L, theta, params: BoundParams = DEFAULT, log: bool = False):
    """``exp(-c min(t^2 / (L + theta), t / sqrt(theta)))``; ``theta = 0`` keeps only the Gaussian branch."""
    if not (L >= 0 and theta >= 0 and L + theta > 0):
        raise InputError("need L >= 0, theta >= 0 and L + theta > 0")
    t = _t(t)
    if theta == 0:
        return _prob(-params.c * t * t / L, log)
    return _prob(_log_two_branch(t, L + theta, math.sqrt(theta), params.c), log)


def improved_bernoulli_scales(delta: float, n: float) -> tuple[float, float]:
    """``s = min(sqrt(delta ln n / |ln delta|), sqrt(delta))`` and ``m = min(ln n / |ln delta|, 1)``."""
    if not 0.0 < delta < 1.0:
        raise InputError("delta must lie in (0, 1)")
    if not n > 1.0:
        raise InputError("n must exceed 1")
    ln_n, ld = math.log(n), abs(math.log(delta))
    return min(math.sqrt(delta * ln_n / ld), math.sqrt(delta)), min(ln_n / ld, 1.0)


def improved_bernoulli_rhs(t, delta, n, hsA, opA, params: BoundParams = DEFAULT, log: bool = False):
    """``exp(-c min(t^2 / (s^2 |A|_HS^2), t / (m |A|)))``."""
    _pos(hsA=hsA, opA=opA)
    s, m = improved_bernoulli_scales(delta, n)
    return _prob(_log_two_branch(_t(t), (s * hsA) ** 2, m * opA, params.c), log)


def ising_rhs(t, e_sup_a_sigma, opA, params: BoundParams = DEFAULT, log: bool = False):
    """``exp(-C min(t^2 / (E sup |A sigma| + sup |A|)^2, t / sup |A|))``; the exponent constant is ``C``."""
    _pos(e_sup_a_sigma=e_sup_a_sigma, opA=opA)
    return _prob(_log_two_branch(_t(t), (e_sup_a_sigma + opA) ** 2, opA, params.C), log)


def bernstein_rhs(u, sigma2, M, eff_rank, params: BoundParams = DEFAULT, log: bool = False) -> RHS:
    """``C r exp(-c min(u^2 / sigma^2, u / M))``, not clamped.

    ``valid`` is ``u >= c1 * max(M, sigma)``.
    """
    _pos(sigma2=sigma2, M=M)
    if not eff_rank >= 1.0 - 1e-12:
        raise InputError("effective rank must be >= 1")
    u = _t(u)
    logv = _log_two_branch(u, sigma2, M, params.c, math.log(params.C * eff_rank))
    return RHS(_out(logv if log else np.exp(logv)),
               _out(u >= params.c1 * max(M, math.sqrt(sigma2))))


def missing_cov_terms(t, eff_rank, N, delta) -> tuple:
    """The three terms inside the max, without ``C |Sigma|``."""
    if not eff_rank >= 1.0 - 1e-12:
        raise InputError("effective rank must be >= 1")
    if not (N >= 1 and 0.0 < delta <= 1.0):
        raise InputError("need N >= 1 and delta in (0, 1]")
    t = _t(t)
    r = max(eff_rank, 1.0)
    nd2 = N * delta * delta
    lr = math.log(r)
    first = math.sqrt(r * lr / nd2)
    second = np.sqrt(t / nd2)
    third = r * (lr + t) * math.log(N) / nd2
    return first, _out(second), _out(third)


def missing_cov_rhs(t, norm_sigma, eff_rank, N, delta, params: BoundParams = DEFAULT):
    """``C |Sigma| max(sqrt(r ln r / (N d^2)), sqrt(t / (N d^2)), r (ln r + t) ln N / (N d^2))``."""
    _pos(norm_sigma=norm_sigma)
    a, b, c = missing_cov_terms(t, eff_rank, N, delta)
    return _out(params.C * norm_sigma * np.maximum(np.maximum(a, b), c))


class Adam08(NamedTuple):
    value: float | np.ndarray
    level: float | np.ndarray


def adam08_rhs(t, ez, sigma2, psi1_max, params: BoundParams = DEFAULT) -> Adam08:
    """``exp(-t^2 / (4 sigma^2)) + 3 exp(-t / (C psi1_max))`` for ``P(Z > 2 EZ + t)``."""
    _pos(sigma2=sigma2, psi1_max=psi1_max)
    t = _t(t)
    v = np.exp(-t * t / (4.0 * sigma2)) + 3.0 * np.exp(-t / (params.C * psi1_max))
    return Adam08(_out(np.minimum(v, 1.0)), _out(2.0 * ez + t))


# constant fitting --------------------------------------------------------------------

@dataclass(frozen=True)
class TailCurve:
    """Empirical survival curve and, optionally, its upper confidence limit."""

    t_grid: np.ndarray
    values: np.ndarray
    upper: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        u = v if self.upper is None else np.asarray(self.upper, dtype=float)
        if t.ndim != 1 or len(t) == 0 or np.any(np.diff(t) <= 0):
            raise InputError("t_grid must be strictly increasing")
        if v.shape != t.shape or u.shape != t.shape:
            raise InputError("values and upper must match t_grid")
        if np.any((v < 0) | (v > 1)) or np.any((u < 0) | (u > 1)):
            raise InputError("tail values must lie in [0, 1]")
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "upper", u)

    @classmethod
    def from_estimate(cls, est) -> "TailCurve":
        return cls(est.t_grid, est.point, est.ci_high)


def rhs_arrays(res, shape):
    if isinstance(res, RHS):
        return np.broadcast_to(np.asarray(res.value, dtype=float), shape), \
            np.broadcast_to(np.asarray(res.valid, dtype=bool), shape)
    return np.broadcast_to(np.asarray(res, dtype=float), shape), np.ones(shape, dtype=bool)


def dominates(curve: TailCurve, rhs: Callable, const: float) -> bool:
    """Does ``rhs(t, const)`` sit on or above the upper curve at every valid ``t``?"""
    value, valid = rhs_arrays(rhs(curve.t_grid, const), curve.t_grid.shape)
    need = valid & (curve.upper > 0)
    return bool(np.all(value[need] >= curve.upper[need]))


def fit_constant(curve: TailCurve, rhs: Callable, lo: float = FIT_LO, hi: float = FIT_HI,
                 rtol: float = 1e-4) -> float:
    """Largest constant in ``(lo, hi]`` for which ``rhs(t, const)`` dominates the curve.

    ``rhs`` must be non-increasing in the constant (as every exponent constant
    is).  Returns ``hi`` when even the cap dominates and raises ``FitFailure``
    when ``lo`` does not.
    """
    if dominates(curve, rhs, hi):
        return hi
    if not dominates(curve, rhs, lo):
        raise FitFailure(f"no constant in ({lo}, {hi}] makes the bound dominate")
    while hi / lo - 1.0 > rtol:
        mid = math.sqrt(lo * hi)
        if dominates(curve, rhs, mid):
            lo = mid
        else:
            hi = mid
    return lo


def curve_rows(t_grid, rhs_result) -> list[dict]:
    """CSV rows ``t, rhs, valid`` for a bound curve."""
    t = np.asarray(t_grid, dtype=float)
    value, valid = rhs_arrays(rhs_result, t.shape)
    return [{"t": float(a), "rhs": float(b), "valid": bool(c)} for a, b, c in zip(t, value, valid)]


class CrossoverFit(NamedTuple):
    ssr_quadratic: float
    ssr_linear: float
    ssr_piecewise: float
    breakpoint: float
    improvement: float


def _ssr(X, y) -> float:
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    return float(r @ r)


def crossover_fit(t, log_survival, candidates: int = 400) -> CrossoverFit:
    """Compare ``log S(t)`` fits: pure quadratic, pure linear and quadratic-then-linear.

    The piecewise exponent is ``t^2`` up to a breakpoint ``tau`` and its tangent
    ``2 tau t - tau^2`` beyond, so it nests both single-regime fits.  ``improvement``
    is the relative drop in residual sum of squares against the better single fit.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(log_survival, dtype=float)
    if t.shape != y.shape or len(t) < 4 or not np.all(np.isfinite(y)):
        raise InputError("need at least four finite (t, log S) points")
    one = np.ones_like(t)
    quad = _ssr(np.c_[one, t * t], y)
    lin = _ssr(np.c_[one, t], y)
    best, tau_best = min(quad, lin), (math.inf if quad <= lin else 0.0)
    for tau in np.linspace(t[0], t[-1], candidates)[1:-1]:
        h = np.where(t <= tau, t * t, 2.0 * tau * t - tau * tau)
        s = _ssr(np.c_[one, h], y)
        if s < best:
            best, tau_best = s, float(tau)
    single = min(quad, lin)
    gain = 1.0 - best / single if single > 0 else 0.0
    return CrossoverFit(quad, lin, best, tau_best, gain)
