"""Ising measure pi(s) ~ exp(s^T J s - h^T s) on {-1, 1}^n under Dobrushin's condition."""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import expit, logsumexp

from .bounds import BoundParams, TailCurve, fit_constant, ising_rhs
from .chaos import rademacher_cube
from .errors import CapacityError, InputError
from .linalg import MatrixFamily, SymMatrix, as_sym, batch_spectral_norm
from .montecarlo import ExperimentReport, RngStream, replicate, tail_from_values

MAX_EXACT_DIM = 15
MAX_LSI_DIM = 12
DOBRUSHIN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class IsingModel:
    J: SymMatrix
    h: np.ndarray = field(repr=False)

    def __init__(self, J, h=None):
        J = as_sym(J)
        if J.symmetrized:
            raise InputError("J must be symmetric")
        if np.any(np.diag(J.values) != 0.0):
            raise InputError("J must have a zero diagonal")
        n = J.dim
        h = np.zeros(n) if h is None else np.array(h, dtype=float).reshape(-1)
        if h.shape != (n,) or not np.all(np.isfinite(h)):
            raise InputError(f"h must be a finite vector of length {n}")
        h.setflags(write=False)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "h", h)

    @property
    def n(self) -> int:
        return self.J.dim

    def energy(self, S) -> np.ndarray:
        """``s^T J s - h^T s`` row-wise."""
        S = np.asarray(S, dtype=float)
        return np.einsum("bi,ij,bj->b", S, self.J.values, S) - S @ self.h

    def to_config(self) -> dict:
        return {"n": self.n, "J": self.J.values.reshape(-1).tolist(), "h": self.h.tolist()}

    @classmethod
    def from_config(cls, cfg: dict) -> "IsingModel":
        try:
            n = int(cfg["n"])
            J = np.array(cfg["J"], dtype=float).reshape(n, n)
            h = cfg.get("h")
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad Ising model fixture: {exc}") from None
        return cls(J, h)


def load_model(path) -> IsingModel:
    with open(path) as fh:
        return IsingModel.from_config(json.load(fh))


def dump_model(model: IsingModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_config()) + "\n")


def random_model(n: int, rho: float, h_max: float, gen: np.random.Generator,
                 ferro: bool = False) -> IsingModel:
    """Random couplings with max row sum exactly ``1 - rho`` and ``|h_i| <= h_max``."""
    if n < 2 or not 0.0 <= rho <= 1.0 or h_max < 0:
        raise InputError("need n >= 2, rho in [0, 1], h_max >= 0")
    W = gen.uniform(0.0, 1.0, (n, n)) if ferro else gen.standard_normal((n, n))
    W = np.triu(W, 1)
    W = W + W.T
    rows = np.abs(W).sum(axis=1).max()
    J = W * ((1.0 - rho) / rows) if rows > 0 else W
    return IsingModel(J, gen.uniform(-h_max, h_max, n))


class DobrushinReport(NamedTuple):
    one_to_one_norm: float
    rho: float
    h_inf: float
    satisfied: bool


def dobrushin_check(model: IsingModel, rho: float) -> DobrushinReport:
    if np.any(np.diag(model.J.values) != 0.0):
        raise InputError("J must have a zero diagonal")
    norm = float(np.abs(model.J.values).sum(axis=1).max())
    h_inf = float(np.abs(model.h).max()) if model.n else 0.0
    return DobrushinReport(norm, float(rho), h_inf, bool(norm <= 1.0 - rho + DOBRUSHIN_TOL))


def _fields(model: IsingModel, S: np.ndarray) -> np.ndarray:
    """``m_i = 2 sum_j J_ij s_j - h_i``; log-odds of ``s_i = +1`` given the rest is ``2 m_i``."""
    return 2.0 * S @ model.J.values - model.h


def conditional_plus_prob(model: IsingModel, sigma, i: int) -> float:
    s = _spins(sigma, model.n)
    if not 0 <= i < model.n:
        raise InputError(f"site {i} out of range for n={model.n}")
    m = 2.0 * float(model.J.values[i] @ s) - model.h[i]
    return float(expit(2.0 * m))


def _spins(sigma, n: int) -> np.ndarray:
    s = np.asarray(sigma, dtype=float).reshape(-1)
    if s.shape != (n,) or not np.all(np.abs(s) == 1.0):
        raise InputError(f"expected a +-1 vector of length {n}")
    return s


def _cube(model: IsingModel, cap: int) -> np.ndarray:
    if model.n > cap:
        raise CapacityError(f"n={model.n} exceeds the exact enumeration cap {cap}")
    return rademacher_cube(model.n)


def exact_distribution(model: IsingModel) -> tuple[np.ndarray, np.ndarray]:
    """All states (first site slowest, +1 before -1) and their probabilities."""
    states = _cube(model, MAX_EXACT_DIM)
    logw = model.energy(states)
    return states, np.exp(logw - logsumexp(logw))


def _flip_index(n: int, i: int) -> int:
    return 1 << (n - 1 - i)


def heat_bath_transition(model: IsingModel, p) -> np.ndarray:
    """Push a distribution over the cube through one systematic heat-bath sweep."""
    states = _cube(model, MAX_EXACT_DIM)
    p = np.array(p, dtype=float)
    if p.shape != (len(states),):
        raise InputError("distribution length must be 2^n")
    idx = np.arange(len(states))
    q = expit(2.0 * _fields(model, states))
    own = np.where(states > 0, q, 1.0 - q)
    for i in range(model.n):
        # states sharing the rest split their joint mass by the exact conditional
        p = own[:, i] * (p + p[idx ^ _flip_index(model.n, i)])
    return p


def glauber_sample(model: IsingModel, burn_in: int, thin: int, count: int, rng: RngStream,
                   chains: int = 1, chunk: int = 256) -> np.ndarray:
    """Systematic-scan heat-bath samples, shape ``(count, n)``.

    ``burn_in`` counts single-site updates, rounded up to whole sweeps; ``thin`` counts
    sweeps between kept states.  Chain ``c`` runs on ``rng.substream(c)`` and the
    output interleaves chains: row ``s * chains + c`` is the ``s``-th kept state of chain ``c``.
    """
    n = model.n
    if burn_in < 10 * n * math.log(n + 1):
        raise InputError("burn_in must be at least 10 n ln(n + 1) site updates")
    if thin < 1 or count < 1 or chains < 1:
        raise InputError("thin, count and chains must be positive")
    if not dobrushin_check(model, 0.0).satisfied:
        warnings.warn("model violates Dobrushin's condition", RuntimeWarning, stacklevel=2)
    gens = [rng.substream(c).gen for c in range(chains)]
    S = np.stack([np.where(g.random(n) < 0.5, 1.0, -1.0) for g in gens])
    J, h = model.J.values, model.h

    def run(sweeps, keep_every=0):
        kept = []
        done = 0
        while done < sweeps:
            k = min(chunk, sweeps - done)
            U = np.stack([g.random((k, n)) for g in gens], axis=1)
            for s in range(k):
                for i in range(n):
                    m = 2.0 * (S @ J[i]) - h[i]
                    S[:, i] = np.where(U[s, :, i] < expit(2.0 * m), 1.0, -1.0)
                if keep_every and (done + s + 1) % keep_every == 0:
                    kept.append(S.copy())
            done += k
        return kept

    run(-(-burn_in // n))
    per_chain = -(-count // chains)
    kept = run(per_chain * thin, keep_every=thin)
    return np.concatenate(kept, axis=0)[:count]


def empirical_distribution(samples, n: int) -> np.ndarray:
    """Frequencies over the cube in ``exact_distribution`` order."""
    S = np.asarray(samples)
    weights = 1 << np.arange(n - 1, -1, -1)
    idx = ((S < 0).astype(np.int64) @ weights)
    return np.bincount(idx, minlength=1 << n) / len(S)


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def difference_operator_sq(model: IsingModel, f: Callable[[np.ndarray], float], sigma) -> float:
    """``(1/2) sum_i (f(s) - f(T_i s))^2 pi(-s_i | rest)``."""
    if model.n > MAX_EXACT_DIM:
        raise CapacityError(f"n={model.n} exceeds the exact enumeration cap {MAX_EXACT_DIM}")
    s = _spins(sigma, model.n)
    q = expit(2.0 * _fields(model, s[None, :])[0])
    fs = float(f(s))
    total = 0.0
    for i in range(model.n):
        t = s.copy()
        t[i] = -t[i]
        flip = 1.0 - q[i] if s[i] > 0 else q[i]
        total += (fs - float(f(t))) ** 2 * flip
    return 0.5 * total


def _dirichlet_all(model: IsingModel, states: np.ndarray, fvals: np.ndarray) -> np.ndarray:
    """``|d f|^2`` at every state, vectorized over the cube."""
    idx = np.arange(len(states))
    q = expit(2.0 * _fields(model, states))
    flip = np.where(states > 0, 1.0 - q, q)
    out = np.zeros(len(states))
    for i in range(model.n):
        out += (fvals - fvals[idx ^ _flip_index(model.n, i)]) ** 2 * flip[:, i]
    return 0.5 * out


def dirichlet_form(model: IsingModel, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """``E |d f|^2`` by enumeration; ``f`` maps a ``(k, n)`` batch of states to ``k`` values."""
    states, p = exact_distribution(model)
    fv = np.asarray(f(states), dtype=float)
    return math.fsum(p * _dirichlet_all(model, states, fv))


def positive_part_form(model: IsingModel, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """``sum_i E (f(s) - f(s'_(i)))_+^2`` with ``s'_i`` resampled from the exact conditional."""
    states, p = exact_distribution(model)
    fv = np.asarray(f(states), dtype=float)
    idx = np.arange(len(states))
    q = expit(2.0 * _fields(model, states))
    total = []
    for i in range(model.n):
        other = fv[idx ^ _flip_index(model.n, i)]
        flip = np.where(states[:, i] > 0, 1.0 - q[:, i], q[:, i])
        total.append(p * np.maximum(fv - other, 0.0) ** 2 * flip)
    return math.fsum(np.concatenate(total))


def log_sobolev_fit(model: IsingModel, f_family: Iterable[Callable[[np.ndarray], np.ndarray]],
                    lambda_grid: Sequence[float] | None = None, tol: float = 1e-14) -> float:
    """Smallest ``C`` with ``Ent(f^2) <= 2 C E |d f|^2`` over the family.

    With ``lambda_grid`` each ``g`` in the family is tested as ``f = exp(lam g / 2)``.
    Functions with vanishing Dirichlet form are constant and skipped.
    """
    states = _cube(model, MAX_LSI_DIM)
    _, p = exact_distribution(model)
    worst = 0.0
    for g in f_family:
        gv = np.asarray(g(states), dtype=float)
        cands = [gv] if lambda_grid is None else [np.exp(lam * gv / 2.0) for lam in lambda_grid]
        for fv in cands:
            energy = math.fsum(p * _dirichlet_all(model, states, fv))
            f2 = fv * fv
            m = math.fsum(p * f2)
            if energy <= tol * max(m, 1.0):
                continue
            logs = np.log(np.where(f2 > 0, f2, 1.0))
            ent = math.fsum(p * f2 * logs) - m * math.log(m)
            worst = max(worst, max(ent, 0.0) / (2.0 * energy))
    return worst


def _zero_diag_family(family) -> MatrixFamily:
    fam = family if isinstance(family, MatrixFamily) else MatrixFamily(family)
    if np.any(np.diagonal(fam.stack, axis1=1, axis2=2) != 0.0):
        raise InputError("family members must have a zero diagonal")
    return fam


def chaos_values(family: MatrixFamily, S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``sup_A s^T A s`` and ``sup_A |A s|`` row-wise."""
    AS = np.einsum("kij,bj->bki", family.stack, S)
    quad = np.einsum("bi,bki->bk", S, AS).max(axis=1)
    norms = np.sqrt(np.einsum("bki,bki->bk", AS, AS)).max(axis=1)
    return quad, norms


def ising_chaos_experiment(model: IsingModel, family, t_grid, reps: int, rng: RngStream,
                           rho: float = 0.0, burn_in: int | None = None, thin: int = 1,
                           chains: int = 64, workers: int | None = None) -> ExperimentReport:
    """Tail of ``sup_A s^T A s - E sup_A s^T A s`` against the Ising chaos bound.

    For ``n <= 15`` states are drawn exactly and both expectations are exact; otherwise
    Glauber samples are used and the expectations are sample means.  The fitted ``C``
    is the largest exponent constant whose bound dominates the upper CI.
    """
    fam = _zero_diag_family(family)
    if fam.dim != model.n:
        raise InputError("family dimension must match the model")
    t0 = time.perf_counter()
    op = float(batch_spectral_norm(fam.stack).max())
    if model.n <= MAX_EXACT_DIM:
        states, p = exact_distribution(model)
        zq, zn = chaos_values(fam, states)
        ez = math.fsum(p * zq)
        e_norm = math.fsum(p * zn)
        cum = np.cumsum(p)
        cum[-1] = 1.0

        def draw(gen, size):
            k = np.searchsorted(cum, gen.random(size), side="right")
            return zq[np.minimum(k, len(zq) - 1)]

        values = replicate(draw, reps, rng, workers=workers)
        sampler = "exact"
    else:
        burn = burn_in if burn_in is not None else 10_000 * model.n
        S = glauber_sample(model, burn, thin, reps, rng, chains=chains)
        zq, zn = chaos_values(fam, S)
        ez, e_norm = math.fsum(zq) / reps, math.fsum(zn) / reps
        values = zq
        sampler = "glauber"
    est = tail_from_values(values - ez, t_grid)
    curve = TailCurve.from_estimate(est)
    if op == 0.0:
        fitted = math.inf
        rhs = np.where(est.t_grid > 0, 0.0, 1.0)
    else:
        fitted = fit_constant(curve, lambda t, C: ising_rhs(t, e_norm, op, BoundParams(C=C)))
        rhs = ising_rhs(est.t_grid, e_norm, op, BoundParams(C=fitted))
    records = [{"t": float(t), "survival": float(s), "ci_low": float(lo), "ci_high": float(hi),
                "rhs": float(r)}
               for t, s, lo, hi, r in zip(est.t_grid, est.point, est.ci_low, est.ci_high,
                                          np.atleast_1d(rhs))]
    dob = dobrushin_check(model, rho)
    summary = {"fitted_C": fitted, "e_sup_quad": ez, "e_sup_a_sigma": e_norm, "sup_op_norm": op,
               "sampler": sampler, "dobrushin_norm": dob.one_to_one_norm, "h_inf": dob.h_inf,
               "dobrushin_satisfied": dob.satisfied}
    cfg = {"experiment": "ising", "model": model.to_config(),
           "family": [m.values.tolist() for m in fam], "t_grid": [float(t) for t in est.t_grid],
           "reps": reps, "rho": rho, "burn_in": burn_in, "thin": thin, "chains": chains,
           "seed": rng.seed, "stream": rng.stream_id}
    return ExperimentReport("ising", cfg, rng.seed, records, summary, time.perf_counter() - t0)
