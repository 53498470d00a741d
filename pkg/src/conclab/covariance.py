"""Covariance estimation from partially observed vectors, the moment and
decoupling facts behind it, and a matrix Bernstein experiment.

Each coordinate of each observation is seen independently with probability
``delta``; unseen coordinates are recorded as 0.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize

from .bounds import BoundParams, TailCurve, bernstein_rhs, dominates, fit_constant, missing_cov_rhs
from .distributions import CoordinateLaw, psi_norm_of_sample
from .errors import CapacityError, DomainError, FitFailure, InputError
from .linalg import (SymMatrix, as_sym, batch_spectral_norm, effective_rank, psd_leq,
                     random_orthogonal, spectral_norm, sqrt_psd)
from .montecarlo import ExperimentReport, RngStream, as_generator, replicate, tail_from_values

MAX_DECOUPLING_DIM = 12


@dataclass(frozen=True, eq=False)
class CovModel:
    """``X = Sigma^{1/2} xi`` with i.i.d. unit-variance coordinates ``xi``."""

    sigma: SymMatrix
    sqrt_sigma: SymMatrix
    law: CoordinateLaw

    def __init__(self, sigma, law: CoordinateLaw | None = None):
        sigma = as_sym(sigma)
        law = CoordinateLaw.gaussian() if law is None else law
        if abs(law.mean) > 1e-12:
            raise InputError("coordinate law must be centered")
        if not law.variance > 0:
            raise InputError("coordinate law has zero variance")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "sqrt_sigma", sqrt_psd(sigma))
        object.__setattr__(self, "law", law)

    @property
    def n(self) -> int:
        return self.sigma.dim

    @property
    def eff_rank(self) -> float:
        return effective_rank(self.sigma)

    def factor(self, gen: np.random.Generator, shape) -> np.ndarray:
        """Coordinates normalized to unit variance."""
        return self.law.sample(gen, shape) / math.sqrt(self.law.variance)


def diagonal_spectrum(values: Sequence[float], rotation_seed: int | None = None) -> SymMatrix:
    """``diag(values)``, optionally conjugated by a seeded Haar rotation."""
    d = np.asarray(values, dtype=float)
    if np.any(d < 0):
        raise InputError("spectrum must be non-negative")
    if rotation_seed is None:
        return SymMatrix.diagonal(d)
    q = random_orthogonal(len(d), RngStream(rotation_seed).named("rotation").gen)
    return SymMatrix((q * d) @ q.T)


def spiked_sigma(n: int, kappa: float, rotation_seed: int | None = None) -> SymMatrix:
    """Spectrum ``(kappa, 1, ..., 1)``."""
    return diagonal_spectrum([kappa] + [1.0] * (n - 1), rotation_seed)


def geometric_sigma(n: int, kappa: float, rotation_seed: int | None = None) -> SymMatrix:
    """Spectrum ``kappa^{-i}`` for ``i = 0, ..., n-1``."""
    return diagonal_spectrum(float(kappa) ** -np.arange(n), rotation_seed)


def spike_for_eff_rank(n: int, target: float) -> float:
    """``kappa >= 1`` with ``r(spiked_sigma(n, kappa)) = target`` (``1 < target <= n``)."""
    if not 1.0 < target <= n:
        raise InputError("target effective rank must lie in (1, n]")
    if target == n:
        return 1.0
    # r = (kappa + n - 1) / kappa
    return (n - 1) / (target - 1.0)


def sample_data(model: CovModel, N: int, rng) -> np.ndarray:
    """``N x n`` matrix with rows ``Sigma^{1/2} xi_i``."""
    if int(N) < 1:
        raise InputError("N must be >= 1")
    xi = model.factor(as_generator(rng), (int(N), model.n))
    return xi @ model.sqrt_sigma.values


class MaskedSample(NamedTuple):
    raw: np.ndarray
    mask: np.ndarray
    masked: np.ndarray
    delta: float


def _check_delta(delta):
    if not 0.0 < delta <= 1.0:
        raise InputError("delta must lie in (0, 1]")


def mask_from_uniforms(X: np.ndarray, U: np.ndarray, delta: float) -> MaskedSample:
    _check_delta(delta)
    mask = (U < delta).astype(float)
    return MaskedSample(X, mask, X * mask, float(delta))


def apply_mask(X, delta: float, rng) -> MaskedSample:
    """Keep each entry independently with probability ``delta``."""
    _check_delta(delta)
    X = np.asarray(X, dtype=float)
    return mask_from_uniforms(X, as_generator(rng).random(X.shape), delta)


def sigma_hat_delta(sample: MaskedSample) -> SymMatrix:
    """``(1/N) sum_i Y_i Y_i^T``."""
    Y = sample.masked
    return SymMatrix(Y.T @ Y / Y.shape[0])


def estimator_coefficients(delta: float) -> tuple[float, float]:
    """Weights ``(1/delta - 1/delta^2, 1/delta^2)`` on the diagonal and on the whole matrix."""
    _check_delta(delta)
    return 1.0 / delta - 1.0 / delta ** 2, 1.0 / delta ** 2


def _sigma_hat_array(S: np.ndarray, delta: float) -> np.ndarray:
    a, b = estimator_coefficients(delta)
    out = b * S
    idx = np.arange(S.shape[-1])
    out[..., idx, idx] += a * S[..., idx, idx]
    return out


def sigma_hat(sample: MaskedSample) -> SymMatrix:
    """Unbiased estimator ``(1/d - 1/d^2) Diag(S) + S / d^2`` with ``S = sigma_hat_delta``."""
    return SymMatrix(_sigma_hat_array(np.array(sigma_hat_delta(sample).values), sample.delta))


def estimation_error(sigma_hat, sigma) -> float:
    return spectral_norm(as_sym(sigma_hat) - as_sym(sigma))


def read_samples_csv(path) -> np.ndarray:
    try:
        X = np.loadtxt(Path(path), delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read samples from {path}: {exc}") from None
    if not np.all(np.isfinite(X)):
        raise InputError("samples contain non-finite values")
    return X


# decoupling ----------------------------------------------------------------------------

def decoupling_exact(a, b, delta: float) -> float:
    """``E (sum_{i != j} d_i d_j a_i b_j)^2`` by enumerating all masks."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = len(a)
    if b.shape != a.shape or a.ndim != 1:
        raise InputError("a and b must be vectors of equal length")
    if n > MAX_DECOUPLING_DIM:
        raise CapacityError(f"n = {n} exceeds {MAX_DECOUPLING_DIM}")
    _check_delta(delta)
    masks = ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(float)
    k = masks.sum(axis=1)
    p = delta ** k * (1.0 - delta) ** (n - k)
    val = (masks @ a) * (masks @ b) - masks @ (a * b)
    return math.fsum(p * val * val)


def decoupling_check(a, b, delta: float) -> float:
    """``18 d^2 |a|^2 |b|^2 + 2 d^4 (sum a)^2 (sum b)^2`` minus the exact moment."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    exact = decoupling_exact(a, b, delta)
    bound = 18.0 * delta ** 2 * a.dot(a) * b.dot(b) + 2.0 * delta ** 4 * a.sum() ** 2 * b.sum() ** 2
    return bound - exact


# moment scaling lemmas ----------------------------------------------------------------------

def _ols_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if np.any(x <= 0) or np.any(y <= 0):
        return math.nan
    lx, ly = np.log(x), np.log(y)
    return float(np.polyfit(lx, ly, 1)[0])


def _check_grid(delta_grid) -> np.ndarray:
    d = np.asarray(delta_grid, dtype=float)
    if d.ndim != 1 or len(d) < 2 or np.any(d <= 0) or np.any(d > 1):
        raise InputError("delta grid needs at least two values in (0, 1]")
    return d


@dataclass(frozen=True)
class LemmaScaling:
    delta_grid: np.ndarray
    off_moment: np.ndarray
    diag_moment: np.ndarray
    off_slope: float
    diag_slope: float
    fitted_C: float = math.nan
    psd_holds: bool = True

    def rows(self):
        for d, o, g in zip(self.delta_grid, self.off_moment, self.diag_moment):
            yield {"delta": float(d), "off_moment": float(o), "diag_moment": float(g)}


def _moment_blocks(model: CovModel, deltas, reps, rng, stat):
    """Average ``stat(Y)`` over ``reps`` draws for every delta, with shared ``X`` and uniforms."""
    n = model.n

    def draw(gen, size):
        X = model.factor(gen, (size, n)) @ model.sqrt_sigma.values
        U = gen.random((size, n))
        return np.stack([stat(X * (U < d)) for d in deltas], axis=1)

    vals = replicate(draw, reps, rng, block_size=1024)
    return vals.mean(axis=0)


def lemma_trace_scaling(model: CovModel, delta_grid, reps: int, rng: RngStream) -> LemmaScaling:
    """Monte Carlo ``|E Off(YY^T)^2|`` and ``|E Diag(YY^T)^2|`` across ``delta``.

    Also fits the smallest ``C`` with
    ``E Off(YY^T)^2 <= C d^2 Tr(Sigma) (Sigma + Diag(Sigma))`` on the grid and
    rechecks that ordering with ``psd_leq``.
    """
    d = _check_grid(delta_grid)
    if reps < 10_000:
        raise InputError("lemma_trace_scaling needs reps >= 10^4")
    n = model.n
    iu = np.arange(n)

    def stat(Y):
        outer = Y[:, :, None] * Y[:, None, :]
        outer[:, iu, iu] = 0.0
        off2 = outer @ outer
        diag2 = Y ** 4
        return np.concatenate([off2.reshape(len(Y), -1), diag2], axis=1)

    mean = _moment_blocks(model, d, reps, rng, stat)
    off = mean[:, : n * n].reshape(len(d), n, n)
    off = (off + off.transpose(0, 2, 1)) / 2.0
    diag = mean[:, n * n:]
    off_norm = batch_spectral_norm(off)
    diag_norm = np.abs(diag).max(axis=1)
    sig = model.sigma.values
    base = sig.trace() * (sig + np.diag(np.diag(sig)))
    w, v = np.linalg.eigh(base)
    if w[0] <= 0:
        raise DomainError("Tr(Sigma)(Sigma + Diag(Sigma)) is singular")
    inv_sqrt = (v / np.sqrt(w)) @ v.T
    C = max(float(np.linalg.eigvalsh(inv_sqrt @ (o / dd ** 2) @ inv_sqrt)[-1]) for o, dd in zip(off, d))
    ok = all(psd_leq(o, C * (1 + 1e-9) * dd ** 2 * base, tol=1e-12 * np.abs(o).max())
             for o, dd in zip(off, d))
    return LemmaScaling(d, off_norm, diag_norm, _ols_slope(d, off_norm), _ols_slope(d, diag_norm),
                        C, ok)


def lemma_norm_scaling(model: CovModel, u, delta_grid, reps: int, rng: RngStream) -> LemmaScaling:
    """Monte Carlo ``E (u^T Off(YY^T) u)^2`` and ``E (u^T Diag(YY^T) u)^2`` across ``delta``."""
    d = _check_grid(delta_grid)
    if reps < 10_000:
        raise InputError("lemma_norm_scaling needs reps >= 10^4")
    u = np.asarray(u, dtype=float)
    if u.shape != (model.n,) or abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise InputError("u must be a unit vector of length n")
    u2 = u * u

    def stat(Y):
        full = (Y @ u) ** 2
        dg = (Y * Y) @ u2
        return np.stack([(full - dg) ** 2, dg ** 2], axis=1)

    mean = _moment_blocks(model, d, reps, rng, stat)
    off, diag = mean[:, 0], mean[:, 1]
    return LemmaScaling(d, off, diag, _ols_slope(d, off), _ols_slope(d, diag))


# missing-data experiment ----------------------------------------------------------------------

def missing_cov_experiment(model: CovModel, N_grid, delta_grid, reps: int, rng: RngStream,
                           params: BoundParams = BoundParams(), t: float = math.log(10.0),
                           workers: int | None = None) -> ExperimentReport:
    """Median and 0.9-quantile of ``|Sigma_hat - Sigma|`` on an ``N x delta`` grid.

    Every replicate draws one sample of size ``max(N_grid)`` and one array of
    uniforms; smaller ``N`` use the leading rows and ``delta`` sets the mask
    ``U < delta``, so all cells share their randomness.  ``summary`` holds the
    log-log slopes of the median against ``N`` (per ``delta``) and against
    ``delta`` (per ``N``), plus the fitted ``C`` for the 0.9-quantile against
    the bound at level ``t``.
    """
    Ns = sorted(int(x) for x in N_grid)
    ds = sorted(float(x) for x in _check_grid(delta_grid))
    if reps < 10:
        raise InputError("reps must be >= 10")
    n, Nmax = model.n, Ns[-1]
    sig = model.sigma.values
    cells = list(product(Ns, ds))
    t0 = time.perf_counter()

    def draw(gen, size):
        out = np.empty((size, len(cells)))
        for r in range(size):
            X = model.factor(gen, (Nmax, n)) @ model.sqrt_sigma.values
            U = gen.random((Nmax, n))
            for c, (N, dl) in enumerate(cells):
                Y = X[:N] * (U[:N] < dl)
                S = _sigma_hat_array(Y.T @ Y / N, dl)
                out[r, c] = spectral_norm(S - sig)
        return out

    errs = replicate(draw, reps, rng, block_size=8, workers=workers)
    med = np.median(errs, axis=0)
    q90 = np.sort(errs, axis=0)[min(int(math.floor(0.9 * reps)), reps - 1)]
    norm_sigma = spectral_norm(model.sigma)
    r_eff = model.eff_rank
    records = []
    for c, (N, dl) in enumerate(cells):
        rhs1 = missing_cov_rhs(t, norm_sigma, r_eff, N, dl, params.with_(C=1.0))
        records.append({"N": N, "delta": dl, "median": float(med[c]), "q90": float(q90[c]),
                        "rhs_unit_C": float(rhs1), "ratio_q90": float(q90[c] / rhs1)})
    grid = med.reshape(len(Ns), len(ds))
    slope_N = {dl: _ols_slope(Ns, grid[:, j]) for j, dl in enumerate(ds)}
    slope_d = {N: _ols_slope(ds, grid[i, :]) for i, N in enumerate(Ns)}
    summary = {"slope_vs_N": {repr(k): v for k, v in slope_N.items()},
               "slope_vs_delta": {repr(k): v for k, v in slope_d.items()},
               "fitted_C": max(r["ratio_q90"] for r in records),
               "eff_rank": r_eff, "t": t}
    cfg = {"experiment": "cov-missing", "N_grid": Ns, "delta_grid": ds, "reps": reps,
           "n": n, "seed": rng.seed, "stream": rng.stream_id}
    return ExperimentReport("cov-missing", cfg, rng.seed, records, summary,
                            time.perf_counter() - t0)


def unbiasedness_check(model: CovModel, N: int, delta: float, reps: int, rng: RngStream,
                       workers: int | None = None) -> dict:
    """Mean of ``Sigma_hat`` over replicates and its Monte Carlo error.

    ``mc_se`` is the spectral norm of the matrix of entrywise standard errors,
    a scale for ``|mean - Sigma|``.
    """
    n = model.n
    _check_delta(delta)

    def draw(gen, size):
        X = model.factor(gen, (size, N, n)) @ model.sqrt_sigma.values
        Y = X * (gen.random((size, N, n)) < delta)
        S = np.einsum("bki,bkj->bij", Y, Y) / N
        return _sigma_hat_array(S, delta).reshape(size, -1)

    est = replicate(draw, reps, rng, block_size=4096, workers=workers)
    mean = est.mean(axis=0).reshape(n, n)
    se = (est.std(axis=0, ddof=1) / math.sqrt(reps)).reshape(n, n)
    return {"error": estimation_error((mean + mean.T) / 2, model.sigma),
            "mc_se": spectral_norm((se + se.T) / 2), "norm_sigma": spectral_norm(model.sigma),
            "mean": mean}


# matrix Bernstein ------------------------------------------------------------------------------

@dataclass(frozen=True)
class BernsteinEnsemble:
    """``N`` independent centered matrices ``x x^T - Sigma`` with ``x ~ N(0, Sigma)``."""

    sigma: SymMatrix
    N: int

    @property
    def n(self) -> int:
        return self.sigma.dim

    def exact_R(self) -> np.ndarray:
        """``sum_i E (x x^T - Sigma)^2 = N (Tr(Sigma) Sigma + Sigma^2)``."""
        s = self.sigma.values
        return self.N * (np.trace(s) * s + s @ s)

    def to_config(self) -> dict:
        return {"N": self.N, "spectrum": np.linalg.eigvalsh(self.sigma.values).tolist()}


def spike_for_bernstein_rank(n: int, target: float) -> float:
    """Spike ``kappa`` making ``r(R) = target`` for the centered spiked ensemble."""
    def r_of(k):
        tr, tr2 = k + n - 1, k * k + n - 1
        return (tr * tr + tr2) / (k * (tr + k))
    r_iso = r_of(1.0)
    if not 1.0 < target <= r_iso:
        raise InputError(f"target must lie in (1, {r_iso:.3f}]")
    if target == r_iso:
        return 1.0
    return optimize.brentq(lambda k: r_of(k) - target, 1.0, 1e12, xtol=1e-14, rtol=1e-14)


@dataclass
class BernsteinResult:
    report: ExperimentReport
    curve: TailCurve
    sigma2: float
    M: float
    eff_rank: float
    values: np.ndarray = field(repr=False)

    def rhs(self, u, params: BoundParams):
        return bernstein_rhs(u, self.sigma2, self.M, self.eff_rank, params)


def auto_u_grid(values, sigma: float, points: int = 40, min_count: int = 20) -> np.ndarray:
    """Grid from ``sigma / 2`` to the largest level still exceeded ``min_count`` times."""
    v = np.sort(np.asarray(values, dtype=float))
    top = v[max(len(v) - min_count, 0)]
    lo = 0.5 * sigma
    if top <= lo:
        top = lo * 1.01
    return np.linspace(lo, top, points)


def bernstein_experiment(ensemble: BernsteinEnsemble, u_grid, reps: int, rng: RngStream,
                         moment_reps: int = 500, params: BoundParams = BoundParams(),
                         workers: int | None = None) -> BernsteinResult:
    """Tail of ``|sum_i (x_i x_i^T - Sigma)|`` against the effective-rank Bernstein bound.

    ``R = sum_i E (x_i x_i^T - Sigma)^2`` and ``M = | max_i |x_i x_i^T - Sigma| |_psi1``
    are Monte Carlo estimates from an independent substream of ``moment_reps``
    replicates.  ``u_grid`` is in absolute units; ``None`` picks ``auto_u_grid``.
    """
    n, N = ensemble.n, ensemble.N
    root = sqrt_psd(ensemble.sigma).values
    sig = ensemble.sigma.values
    t0 = time.perf_counter()

    def draw_norm(gen, size):
        out = np.empty(size)
        for s in range(0, size, 64):
            m = min(64, size - s)
            X = gen.standard_normal((m, N, n)) @ root
            S = np.einsum("bki,bkj->bij", X, X) - N * sig
            out[s:s + m] = batch_spectral_norm(S)
        return out

    def draw_moments(gen, size):
        X = gen.standard_normal((size, N, n)) @ root
        sq = np.einsum("bki,bki->bk", X, X)
        # E (x x^T - Sigma)^2 = E |x|^2 x x^T - Sigma^2
        R = np.einsum("bk,bki,bkj->bij", sq, X, X) - N * (sig @ sig)
        outer = X[:, :, :, None] * X[:, :, None, :] - sig
        norms = batch_spectral_norm(outer).max(axis=1)
        return np.concatenate([R.reshape(size, -1), norms[:, None]], axis=1)

    vals = replicate(draw_norm, reps, rng.substream(1), block_size=256, workers=workers)
    mom = replicate(draw_moments, moment_reps, rng.substream(2), block_size=16, workers=workers)
    R = mom[:, :-1].mean(axis=0).reshape(n, n)
    R = (R + R.T) / 2
    sigma2 = spectral_norm(R)
    r_eff = effective_rank(R)
    M = psi_norm_of_sample(mom[:, -1], 1.0).point
    grid = auto_u_grid(vals, math.sqrt(sigma2)) if u_grid is None else u_grid
    est = tail_from_values(vals, grid)
    curve = TailCurve.from_estimate(est)
    res = bernstein_rhs(est.t_grid, sigma2, M, r_eff, params)
    records = [{"u": float(u), "survival": float(p), "ci_low": float(lo), "ci_high": float(hi),
                "rhs": float(v), "valid": bool(ok)}
               for u, p, lo, hi, v, ok in zip(est.t_grid, est.point, est.ci_low, est.ci_high,
                                              res.value, res.valid)]
    R_exact = ensemble.exact_R()
    summary = {"sigma2": sigma2, "M": M, "eff_rank": r_eff,
               "eff_rank_exact": effective_rank(R_exact), "sigma2_exact": spectral_norm(R_exact)}
    cfg = {"experiment": "bernstein", "ensemble": ensemble.to_config(), "reps": reps,
           "moment_reps": moment_reps, "u_grid": [float(u) for u in est.t_grid],
           "seed": rng.seed, "stream": rng.stream_id}
    report = ExperimentReport("bernstein", cfg, rng.seed, records, summary, time.perf_counter() - t0)
    return BernsteinResult(report, curve, sigma2, M, r_eff, vals)


def fit_bernstein_c(result: BernsteinResult, C: float, c1: float = 1.0) -> float:
    """Largest ``c`` such that ``C r exp(-c ...)`` dominates the upper CI on the valid range."""
    return fit_constant(result.curve, lambda u, c: result.rhs(u, BoundParams(c=c, C=C, c1=c1)))


def bernstein_transfer(results: dict, reference, C_grid: Sequence[float] = (0.25, 1.0, 4.0, 16.0),
                       c1: float = 1.0) -> list[dict]:
    """Fit ``c`` on the reference ensemble for each ``C`` and test the pair on the others.

    ``results`` maps a label (the target effective rank) to a ``BernsteinResult``.
    Each row reports the fitted ``c``, each ensemble's own largest admissible ``c``
    and whether the reference pair dominates every other ensemble.
    """
    rows = []
    for C in C_grid:
        own = {}
        for key, res in results.items():
            try:
                own[key] = fit_bernstein_c(res, C, c1)
            except FitFailure:
                own[key] = None
        c_ref = own[reference]
        ok = c_ref is not None and all(
            dominates(res.curve, lambda u, c: res.rhs(u, BoundParams(c=c, C=C, c1=c1)), c_ref)
            for res in results.values())
        rows.append({"C": float(C), "c_fit": c_ref, "own_c": own, "dominates_all": ok})
    return rows
