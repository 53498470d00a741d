"""Suprema of quadratic forms over a matrix family and exact checks of the
inequalities used to control them (entropy, Khinchin, Poincare, truncation).

Exact checks enumerate the full product support and sum with ``math.fsum`` so
the result does not depend on the summation order.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from scipy import special, stats

from .bounds import (BoundParams, TailCurve, rhs_arrays, adamczak_rhs, crossover_fit,
                     fit_constant, hanson_wright_rhs, mainthm_rhs)
from .distributions import (MAX_ATOMS, CoordinateLaw, ProductDistribution, enumerate_support,
                            expected_max_abs, max_abs_law, psi_alpha_norm,
                            psi_alpha_norm_of_max)
from .errors import CapacityError, DomainError, FitFailure, InputError
from .linalg import PSD_RTOL, MatrixFamily, SymMatrix, batch_spectral_norm
from .montecarlo import (ExperimentReport, RngStream, evaluate, mean_stderr, quantile_from_values,
                         tail_from_values)

MAX_CUBE_DIM = 20


def _fsum_mean(values, probs) -> float:
    return math.fsum(np.asarray(values, dtype=float) * np.asarray(probs, dtype=float))


def _family(family) -> MatrixFamily:
    return family if isinstance(family, MatrixFamily) else MatrixFamily(family)


def exact_centering(family: MatrixFamily, dist: ProductDistribution) -> np.ndarray:
    """``E X^T A X = m^T A m + sum_i A_ii Var(X_i)`` for every member."""
    m = np.array([l.mean for l in dist.laws])
    var = np.array([l.variance for l in dist.laws])
    st = family.stack
    return np.einsum("i,kij,j->k", m, st, m) + np.einsum("kii,i->k", st, var)


@dataclass(frozen=True, eq=False)
class ChaosProblem:
    """Family, coordinate law and the per-member centering ``g(A)``.

    When ``centering`` is omitted it is set once to the exact ``E X^T A X``
    (closed form from coordinate means and variances) and then stored.
    """

    family: MatrixFamily
    dist: ProductDistribution
    centering: np.ndarray

    def __init__(self, family, dist: ProductDistribution, centering: Sequence[float] | None = None):
        family = _family(family)
        if family.dim != dist.n:
            raise InputError(f"family dim {family.dim} != distribution dim {dist.n}")
        g = exact_centering(family, dist) if centering is None else np.array(centering, dtype=float)
        if g.shape != (len(family),):
            raise InputError(f"centering needs {len(family)} values, got shape {g.shape}")
        g.setflags(write=False)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "centering", g)

    @property
    def n(self) -> int:
        return self.dist.n

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise InputError(f"vector length {x.shape[-1]} != {self.n}")
        return x

    def centered_forms(self, X) -> np.ndarray:
        """``(B, k)`` array of ``x^T A_k x - g(A_k)`` for each row ``x``."""
        X = np.atleast_2d(self._check(X))
        return np.einsum("bi,kij,bj->bk", X, self.family.stack, X) - self.centering

    def z_batch(self, X) -> np.ndarray:
        return self.centered_forms(X).max(axis=1)

    def sample(self, gen, size):
        return self.dist.sample(gen, size)


def z_value(problem: ChaosProblem, x) -> tuple[float, int]:
    """``max_k (x^T A_k x - g(A_k))`` and the lowest maximizing index."""
    vals = problem.centered_forms(x)[0]
    k = int(np.argmax(vals))
    return float(vals[k]), k


def sup_norm_ax(family, x) -> float:
    family = _family(family)
    x = np.asarray(x, dtype=float)
    if x.shape != (family.dim,):
        raise InputError(f"vector length {x.shape} != ({family.dim},)")
    return float(np.max(np.linalg.norm(family.stack @ x, axis=1)))


def sup_norm_ax_batch(family: MatrixFamily, X) -> np.ndarray:
    """``max_k ||A_k x||`` for each row of ``X``."""
    AX = np.einsum("kij,bj->bki", family.stack, np.atleast_2d(X))
    return np.sqrt(np.einsum("bki,bki->bk", AX, AX)).max(axis=1)


def sup_op_norm(family: MatrixFamily) -> float:
    return float(batch_spectral_norm(family.stack).max())


# modified log-Sobolev ------------------------------------------------------------

def _v_plus_batch(problem: ChaosProblem, X: np.ndarray) -> np.ndarray:
    st = problem.family.stack
    Q = problem.centered_forms(X)
    Z = Q.max(axis=1)
    AX = np.einsum("kij,bj->bki", st, X)
    diag = np.einsum("kii->ki", st)
    V = np.zeros(len(X))
    for i in range(problem.n):
        vals, probs = problem.dist.law(i).atoms
        for a, p in zip(vals, probs):
            d = a - X[:, i]
            Zi = (Q + 2.0 * d[:, None] * AX[:, :, i] + diag[None, :, i] * (d * d)[:, None]).max(axis=1)
            V += p * np.maximum(Z - Zi, 0.0) ** 2
    return V


def v_plus_exact(problem: ChaosProblem, x) -> float:
    """``sum_i E' (Z(x) - Z(x with x_i resampled))_+^2`` over the exact coordinate law."""
    if not problem.dist.finite_support():
        raise CapacityError("V_plus needs finite-support coordinates")
    x = problem._check(x)
    return float(_v_plus_batch(problem, x[None, :])[0])


def entropy_of_exp(values, probs, lam: float) -> float:
    """``Ent(e^{lam Z})`` anchored at ``lam * max Z``."""
    z = np.asarray(values, dtype=float)
    p = np.asarray(probs, dtype=float)
    if lam == 0.0 or z.size == 0:
        return 0.0
    shift = lam * z.max() if lam > 0 else lam * z.min()
    s = lam * z - shift
    w = np.exp(s)
    ew = _fsum_mean(w, p)
    inner = _fsum_mean(s * w, p) - ew * math.log(ew)
    return max(inner, 0.0) * math.exp(shift)


def _entropy_inner(s, w, p):
    ew = _fsum_mean(w, p)
    return _fsum_mean(s * w, p) - ew * math.log(ew), ew


def mls_check(problem: ChaosProblem, lam: float, order: np.ndarray | None = None,
              cap: int = MAX_ATOMS) -> float:
    """``lam^2 E[V_+ e^{lam Z}] - Ent(e^{lam Z})`` by full enumeration.

    ``order`` optionally permutes the support before summation.
    """
    if lam < 0:
        raise InputError("lambda must be non-negative")
    X, p = enumerate_support(problem.dist, cap)
    if order is not None:
        X, p = X[order], p[order]
    Z = problem.z_batch(X)
    V = _v_plus_batch(problem, X)
    if lam == 0.0:
        return 0.0
    shift = lam * Z.max()
    s = lam * Z - shift
    w = np.exp(s)
    ent, _ = _entropy_inner(s, w, p)
    return (lam * lam * _fsum_mean(V * w, p) - ent) * math.exp(shift)


def entropy_variational_check(Y, W, probs, lam: float) -> float:
    """``E e^{lam Y} ln E e^W + Ent(e^{lam Y}) - E[W e^{lam Y}]``."""
    Y = np.asarray(Y, dtype=float)
    W = np.asarray(W, dtype=float)
    p = np.asarray(probs, dtype=float)
    if not (Y.shape == W.shape == p.shape):
        raise InputError("Y, W and probs must have the same shape")
    shift = lam * Y.max() if lam >= 0 else lam * Y.min()
    s = lam * Y - shift
    w = np.exp(s)
    ent, ew = _entropy_inner(s, w, p)
    log_eW = float(special.logsumexp(W, b=p))
    return (ew * log_eW + ent - _fsum_mean(W * w, p)) * math.exp(shift)


# truncation -------------------------------------------------------------------

class TruncationSplit(NamedTuple):
    M: float
    Y: np.ndarray
    W: np.ndarray


def truncate(x, M: float) -> TruncationSplit:
    """``Y = x 1(|x| <= M)``, ``W = x - Y``."""
    if not M > 0:
        raise InputError("truncation level must be positive")
    x = np.asarray(x, dtype=float)
    big = np.abs(x) > M
    return TruncationSplit(float(M), np.where(big, 0.0, x), np.where(big, x, 0.0))


class Estimate(NamedTuple):
    value: float
    stderr: float
    exact: bool


def _max_abs_batch(X):
    return np.abs(X).max(axis=1)


def truncation_level(dist: ProductDistribution, reps: int, rng: RngStream) -> Estimate:
    """``M = 8 E max_i |X_i|``; exact for finite support, Monte Carlo otherwise."""
    if reps < 1000:
        raise InputError("truncation_level needs reps >= 1000")
    if dist.finite_support():
        return Estimate(8.0 * expected_max_abs(dist), 0.0, True)
    m, se = mean_stderr(evaluate(_max_abs_batch, dist, reps, rng))
    return Estimate(8.0 * m, 8.0 * se, False)


def markov_truncation_check(dist: ProductDistribution, M: float, reps: int = 100_000,
                            rng: RngStream | None = None) -> Estimate:
    """``P(max_i |X_i| > M)``; exact for finite support, Monte Carlo otherwise."""
    if dist.finite_support():
        v, p = max_abs_law(dist).atoms
        return Estimate(math.fsum(p[v > M]), 0.0, True)
    if rng is None:
        raise InputError("Monte Carlo check needs an rng")
    hits = evaluate(lambda X: (_max_abs_batch(X) > M).astype(float), dist, reps, rng)
    m = float(hits.mean())
    return Estimate(m, math.sqrt(max(m * (1 - m), 0.0) / reps), False)


def truncation_gap(problem: ChaosProblem, M: float, reps: int, rng: RngStream) -> Estimate:
    """Monte Carlo ``E Z(X) - E Z(Y)`` with ``Y`` the truncated vector (same centering)."""
    def diff(X):
        Y = np.where(np.abs(X) > M, 0.0, X)
        return problem.z_batch(X) - problem.z_batch(Y)
    m, se = mean_stderr(evaluate(diff, problem.dist, reps, rng))
    return Estimate(m, se, False)


# Rademacher cube checks ------------------------------------------------------------

@lru_cache(maxsize=8)
def rademacher_cube(n: int) -> np.ndarray:
    """All ``2^n`` sign vectors as rows (read-only)."""
    if n > MAX_CUBE_DIM:
        raise CapacityError(f"2^{n} sign vectors exceed the enumeration cap")
    bits = (np.arange(1 << n)[:, None] >> np.arange(n - 1, -1, -1)) & 1
    cube = 1.0 - 2.0 * bits
    cube.setflags(write=False)
    return cube


def _square(B) -> np.ndarray:
    b = B.values if isinstance(B, SymMatrix) else np.asarray(B, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise InputError("expected a square matrix")
    return b


def khinchin_check(B) -> float:
    """``E ||B eps|| / ||B||_HS`` over all sign vectors."""
    b = _square(B)
    n = b.shape[0]
    if n > MAX_CUBE_DIM:
        raise CapacityError(f"dim {n} exceeds {MAX_CUBE_DIM}")
    scale = float(np.abs(b).max()) if b.size else 0.0
    if scale == 0.0:
        raise DomainError("ratio undefined for the zero matrix")
    # the ratio is scale invariant; normalising avoids underflow in the squares
    b = b / scale
    hs = float(np.sqrt(np.sum(b * b)))
    norms = np.linalg.norm(rademacher_cube(n) @ b.T, axis=1)
    return math.fsum(norms) / len(norms) / hs


def convex_poincare_check(family) -> float:
    """``4 max ||B||^2 - Var(sup_B ||B eps||)`` over all sign vectors."""
    family = _family(family)
    n = family.dim
    if n > MAX_CUBE_DIM:
        raise CapacityError(f"dim {n} exceeds {MAX_CUBE_DIM}")
    s = sup_norm_ax_batch(family, rademacher_cube(n))
    m = math.fsum(s) / len(s)
    var = math.fsum((s - m) ** 2) / len(s)
    return 4.0 * sup_op_norm(family) ** 2 - var


def diag_comparison_check(family, law: CoordinateLaw) -> float:
    """``E sup_B Y^T B Y - E sup_B Y^T Diag(B) Y`` for i.i.d. symmetric ``Y``."""
    family = _family(family)
    ev = np.linalg.eigvalsh(family.stack)
    top = np.abs(ev).max(axis=1)
    if np.any(ev[:, 0] < -PSD_RTOL * top):
        raise DomainError("every family member must be positive semidefinite")
    if not law.is_symmetric:
        raise DomainError("coordinate law must be symmetric")
    X, p = enumerate_support(ProductDistribution(family.dim, law))
    st = family.stack
    full = np.einsum("bi,kij,bj->bk", X, st, X).max(axis=1)
    diag = ((X * X) @ np.einsum("kii->ki", st).T).max(axis=1)
    return math.fsum(np.concatenate([full * p, -diag * p]))


class RatioEstimate(NamedTuple):
    ratio: float
    stderr: float
    numerator: float
    denominator: float


def diag_removal_ratio(family, dist: ProductDistribution, reps: int, rng: RngStream) -> RatioEstimate:
    """``E sup ||Diag(A) X|| / E sup ||A X||`` with a delta-method standard error."""
    family = _family(family)
    if not dist.is_centered():
        raise InputError("diag_removal_ratio needs centered coordinates")
    dfam = np.einsum("kii->ki", family.stack)

    def both(X):
        return np.stack([np.sqrt(((X[:, None, :] * dfam[None]) ** 2).sum(-1)).max(1),
                         sup_norm_ax_batch(family, X)], axis=1)

    v = evaluate(both, dist, reps, rng)
    a, b = v[:, 0].mean(), v[:, 1].mean()
    if b == 0.0:
        raise DomainError("E sup ||A X|| is zero")
    r = a / b
    cov = np.cov(v.T, ddof=1) / reps
    var = (cov[0, 0] - 2 * r * cov[0, 1] + r * r * cov[1, 1]) / (b * b)
    return RatioEstimate(float(r), float(math.sqrt(max(var, 0.0))), float(a), float(b))


@dataclass(frozen=True)
class GaussianComparison:
    t_grid: np.ndarray
    quantile: np.ndarray
    quantile_upper: np.ndarray
    bound: np.ndarray
    K: float
    e_sup_ag: float
    e_sup_ag_se: float
    sup_op: float
    multiplier: float

    def rows(self):
        for i, t in enumerate(self.t_grid):
            yield {"t": float(t), "quantile": float(self.quantile[i]),
                   "quantile_upper": float(self.quantile_upper[i]), "bound": float(self.bound[i])}


def _quantile_upper(sorted_v: np.ndarray, q: float, level: float = 0.95) -> float:
    n = len(sorted_v)
    j = int(stats.binom.ppf(1.0 - (1.0 - level) / 2.0, n, q))
    return float(sorted_v[min(j, n - 1)])


def gaussian_comparison_estimate(family, dist: ProductDistribution, t_grid, reps: int,
                                 rng: RngStream) -> GaussianComparison:
    """Quantiles of ``sup ||A X||`` against ``K (E sup ||A G|| + sup ||A|| sqrt(t))``.

    At each ``t`` the quantile level is ``1 - e^{-t}``; ``t = 0`` uses the mean.
    ``multiplier`` is the smallest factor making the bound dominate the upper
    confidence limits of all quantiles.
    """
    family = _family(family)
    if not dist.is_centered():
        raise InputError("gaussian comparison needs centered coordinates")
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise InputError("t_grid must be increasing and non-negative")
    K = max(psi_alpha_norm(l, 2.0) for l in set(dist.laws))
    sup_fn = lambda X: sup_norm_ax_batch(family, X)
    sx = np.sort(evaluate(sup_fn, dist, reps, rng.substream(1)))
    sg = evaluate(sup_fn, ProductDistribution(dist.n, CoordinateLaw.gaussian()), reps, rng.substream(2))
    eg, eg_se = mean_stderr(sg)
    op = sup_op_norm(family)
    q = np.empty_like(t)
    qu = np.empty_like(t)
    for i, ti in enumerate(t):
        if ti == 0.0:
            m, se = mean_stderr(sx)
            q[i], qu[i] = m, m + 1.96 * se
        else:
            level = -math.expm1(-ti)
            q[i] = quantile_from_values(sx, level)
            qu[i] = _quantile_upper(sx, level)
    bound = K * (eg + op * np.sqrt(t))
    mult = float(np.max(qu / bound)) if np.all(bound > 0) else math.inf
    return GaussianComparison(t, q, qu, bound, K, eg, eg_se, op, mult)


# serialized check records --------------------------------------------------------------

def check_record(name: str, parameters: dict, margin: float, threshold: float,
                 started: float) -> dict:
    return {"check_name": name, "parameters": parameters, "margin": float(margin),
            "status": "pass" if margin >= threshold else "fail",
            "runtime_ms": round((time.perf_counter() - started) * 1000.0, 3)}


# tail experiment --------------------------------------------------------------------------

def tail_experiment(problem: ChaosProblem, t_grid, reps: int, rng: RngStream,
                    params: BoundParams = BoundParams(), min_count: int = 50,
                    workers: int | None = None) -> ExperimentReport:
    """Empirical tail of ``Z`` with fitted constants for the chaos tail bounds.

    ``E sup |A X|`` comes from an independent substream.  The Hanson-Wright fit is
    made only for a single matrix.  Log-survival shape is analysed on grid points
    with at least ``min_count`` exceedances.
    """
    t0 = time.perf_counter()
    fam, dist = problem.family, problem.dist
    z = evaluate(problem.z_batch, dist, reps, rng.substream(1), workers=workers)
    sup_ax = evaluate(lambda X: sup_norm_ax_batch(fam, X), dist, reps, rng.substream(2),
                      workers=workers)
    e_sup_ax = float(np.mean(sup_ax))
    est = tail_from_values(z, t_grid)
    curve = TailCurve.from_estimate(est)
    op = sup_op_norm(fam)
    K = max(psi_alpha_norm(l, 2.0) for l in set(dist.laws))
    M = psi_alpha_norm_of_max(dist, 2.0)
    bounds = {
        "adamczak": lambda t, c: adamczak_rhs(t, K, e_sup_ax, op, params.with_(c=c)),
        "mainthm": lambda t, c: mainthm_rhs(t, M, e_sup_ax, op, params.with_(c=c)),
    }
    if len(fam) == 1:
        hs = float(np.linalg.norm(fam.stack[0]))
        bounds["hanson_wright"] = lambda t, c: hanson_wright_rhs(t, K, hs, op, params.with_(c=c))
    fitted = {}
    for name, rhs in bounds.items():
        try:
            fitted[name] = fit_constant(curve, rhs)
        except FitFailure:
            fitted[name] = None
    counts = np.rint(est.point * reps)
    keep = (counts >= min_count) & (est.t_grid >= 0)
    shape = None
    if keep.sum() >= 4:
        shape = crossover_fit(est.t_grid[keep], np.log(est.point[keep]))
    records = []
    for i, t in enumerate(est.t_grid):
        row = {"t": float(t), "survival": float(est.point[i]), "ci_low": float(est.ci_low[i]),
               "ci_high": float(est.ci_high[i])}
        for name, rhs in bounds.items():
            c = fitted[name]
            val = rhs_arrays(rhs(np.array([t]), c), (1,))[0][0] if c is not None else math.nan
            row[f"rhs_{name}"] = float(val)
        records.append(row)
    summary = {"fitted_c": fitted, "e_sup_ax": e_sup_ax, "sup_op_norm": op, "K": K, "M": M,
               "crossover": shape._asdict() if shape else None}
    cfg = {"experiment": "tail", "family": [m.values.tolist() for m in fam],
           "distribution": dist.to_config(), "t_grid": [float(t) for t in est.t_grid],
           "reps": reps, "params": asdict(params),
           "seed": rng.seed, "stream": rng.stream_id}
    return ExperimentReport("tail", cfg, rng.seed, records, summary, time.perf_counter() - t0)
