"""Coordinate laws, product vectors and Orlicz norms."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy import integrate, special

from .errors import CapacityError, DomainError, InputError
from .montecarlo import as_generator

MAX_ATOMS = 1 << 20
PROB_TOL = 1e-12
KINDS = ("rademacher", "gaussian", "centered_bernoulli", "two_point", "finite")


@dataclass(frozen=True)
class CoordinateLaw:
    """Law of a single coordinate.

    Use the constructors ``rademacher()``, ``gaussian()``,
    ``centered_bernoulli(delta)``, ``two_point(r)`` and ``finite(atoms)``.
    ``two_point(r)`` is the symmetric law with ``P(|X| = 1) = 1 - e^{-r}`` and
    ``P(|X| = sqrt(r)) = e^{-r}``.
    """

    kind: str
    delta: float | None = None
    r: float | None = None
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown law kind {self.kind!r}")

    # constructors -------------------------------------------------------
    @classmethod
    def rademacher(cls) -> "CoordinateLaw":
        return cls("rademacher", values=(-1.0, 1.0), probs=(0.5, 0.5))

    @classmethod
    def gaussian(cls) -> "CoordinateLaw":
        return cls("gaussian")

    @classmethod
    def centered_bernoulli(cls, delta: float) -> "CoordinateLaw":
        d = float(delta)
        if not 0.0 < d < 1.0:
            raise InputError("delta must lie in (0, 1)")
        return cls("centered_bernoulli", delta=d, values=(-d, 1.0 - d), probs=(1.0 - d, d))

    @classmethod
    def two_point(cls, r: float) -> "CoordinateLaw":
        r = float(r)
        if not r >= 4.0:
            raise InputError("two_point needs r >= 4")
        p = math.exp(-r)
        s = math.sqrt(r)
        return cls("two_point", r=r, values=(-s, -1.0, 1.0, s),
                   probs=(p / 2, (1 - p) / 2, (1 - p) / 2, p / 2))

    @classmethod
    def finite(cls, atoms: Sequence[Sequence[float]]) -> "CoordinateLaw":
        """Law with the given ``(value, prob)`` atoms; equal values are merged."""
        pairs = [(float(v), float(p)) for v, p in atoms]
        if not pairs:
            raise InputError("finite law needs at least one atom")
        vals = np.array([v for v, _ in pairs])
        ps = np.array([p for _, p in pairs])
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(ps))):
            raise InputError("atoms must be finite")
        if np.any(ps <= 0):
            raise InputError("atom probabilities must be positive")
        if abs(math.fsum(ps) - 1.0) > PROB_TOL:
            raise InputError(f"atom probabilities sum to {math.fsum(ps)!r}, not 1")
        uniq, inv = np.unique(vals, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inv, ps)
        return cls("finite", values=tuple(uniq.tolist()), probs=tuple(merged.tolist()))

    @classmethod
    def symmetric_three_point(cls, a: float, p0: float) -> "CoordinateLaw":
        """``P(X = 0) = p0`` and ``P(X = a) = P(X = -a) = (1 - p0) / 2``."""
        q = (1.0 - p0) / 2.0
        return cls.finite([(-a, q), (0.0, p0), (a, q)])

    # config round trip ----------------------------------------------------
    def to_config(self) -> dict:
        if self.kind == "centered_bernoulli":
            return {"kind": self.kind, "delta": self.delta}
        if self.kind == "two_point":
            return {"kind": self.kind, "r": self.r}
        if self.kind == "finite":
            return {"kind": self.kind, "atoms": [[v, p] for v, p in zip(self.values, self.probs)]}
        return {"kind": self.kind}

    @classmethod
    def from_config(cls, cfg: Mapping) -> "CoordinateLaw":
        if not isinstance(cfg, Mapping) or "kind" not in cfg:
            raise InputError("law config needs a 'kind' key")
        kind = cfg["kind"]
        try:
            if kind == "rademacher":
                return cls.rademacher()
            if kind == "gaussian":
                return cls.gaussian()
            if kind == "centered_bernoulli":
                return cls.centered_bernoulli(cfg["delta"])
            if kind == "two_point":
                return cls.two_point(cfg["r"])
            if kind == "finite":
                return cls.finite(cfg["atoms"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad law config {dict(cfg)!r}: {exc}") from None
        raise InputError(f"unknown law kind {kind!r}")

    # properties -------------------------------------------------------------
    @property
    def finite_support(self) -> bool:
        return self.kind != "gaussian"

    @property
    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.finite_support:
            raise CapacityError("Gaussian law has no finite support")
        return np.array(self.values), np.array(self.probs)

    @property
    def mean(self) -> float:
        if self.kind == "gaussian":
            return 0.0
        v, p = self.atoms
        return math.fsum(v * p)

    @property
    def variance(self) -> float:
        if self.kind == "gaussian":
            return 1.0
        v, p = self.atoms
        m = self.mean
        return math.fsum((v - m) ** 2 * p)

    @property
    def is_symmetric(self) -> bool:
        if self.kind == "gaussian":
            return True
        v, p = self.atoms
        # atoms are sorted, so symmetry pairs the i-th smallest with the i-th largest
        return bool(np.allclose(v, -v[::-1], atol=PROB_TOL, rtol=0)
                    and np.allclose(p, p[::-1], atol=PROB_TOL, rtol=0))

    @property
    def max_abs(self) -> float:
        if self.kind == "gaussian":
            return math.inf
        return float(np.max(np.abs(self.values)))

    def scaled(self, c: float) -> "CoordinateLaw":
        """Law of ``c * X``."""
        c = float(c)
        if self.kind == "gaussian":
            raise InputError("scaled Gaussian laws are not represented; rescale samples instead")
        if c == 1.0:
            return self
        return CoordinateLaw.finite(list(zip((c * np.array(self.values)).tolist(), self.probs)))

    def sample(self, gen: np.random.Generator, size) -> np.ndarray:
        if self.kind == "gaussian":
            return gen.standard_normal(size)
        v, p = self.atoms
        cdf = np.cumsum(p)
        idx = np.searchsorted(cdf, gen.random(size) * cdf[-1], side="right")
        return v[np.minimum(idx, len(v) - 1)]

    def __repr__(self):
        body = ", ".join(f"{k}={v!r}" for k, v in self.to_config().items() if k != "kind")
        return f"CoordinateLaw.{self.kind}({body})"


class ProductDistribution:
    """Vector with independent coordinates.

    ``laws`` is either one shared law (i.i.d. coordinates) or ``n`` laws.
    """

    __slots__ = ("n", "_laws", "iid")

    def __init__(self, n: int, laws: CoordinateLaw | Sequence[CoordinateLaw]):
        if int(n) <= 0:
            raise InputError("n must be positive")
        self.n = int(n)
        if isinstance(laws, CoordinateLaw):
            self._laws = (laws,)
            self.iid = True
        else:
            laws = tuple(laws)
            if len(laws) != self.n or not all(isinstance(l, CoordinateLaw) for l in laws):
                raise InputError(f"expected one law or {self.n} laws")
            self._laws = laws
            self.iid = len(set(laws)) == 1
            if self.iid:
                self._laws = (laws[0],)

    def law(self, i: int) -> CoordinateLaw:
        return self._laws[0] if len(self._laws) == 1 else self._laws[i]

    @property
    def laws(self) -> tuple[CoordinateLaw, ...]:
        return tuple(self.law(i) for i in range(self.n))

    def finite_support(self) -> bool:
        return all(l.finite_support for l in self._laws)

    def atom_count(self) -> float:
        if not self.finite_support():
            return math.inf
        return math.prod(len(self.law(i).values) for i in range(self.n))

    def is_centered(self, tol: float = 1e-12) -> bool:
        return all(abs(l.mean) <= tol for l in self._laws)

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        """``(size, n)`` array of independent draws."""
        if len(self._laws) == 1:
            return self._laws[0].sample(gen, (size, self.n))
        out = np.empty((size, self.n))
        for i, law in enumerate(self._laws):
            out[:, i] = law.sample(gen, size)
        return out

    def to_config(self) -> dict:
        if len(self._laws) == 1:
            return {"n": self.n, "law": self._laws[0].to_config()}
        return {"n": self.n, "laws": [l.to_config() for l in self._laws]}

    @classmethod
    def from_config(cls, cfg: Mapping) -> "ProductDistribution":
        try:
            n = int(cfg["n"])
            if "laws" in cfg:
                return cls(n, [CoordinateLaw.from_config(c) for c in cfg["laws"]])
            return cls(n, CoordinateLaw.from_config(cfg["law"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad distribution config: {exc}") from None

    def __repr__(self):
        laws = self._laws[0] if len(self._laws) == 1 else list(self._laws)
        return f"ProductDistribution(n={self.n}, laws={laws!r})"


def sample(dist: ProductDistribution, rng, size: int | None = None) -> np.ndarray:
    """One draw (shape ``(n,)``) or ``size`` draws (shape ``(size, n)``)."""
    gen = as_generator(rng)
    if size is None:
        return dist.sample(gen, 1)[0]
    return dist.sample(gen, size)


def enumerate_support(dist: ProductDistribution, cap: int = MAX_ATOMS) -> tuple[np.ndarray, np.ndarray]:
    """All support points (rows, first coordinate slowest) and their probabilities."""
    if not dist.finite_support():
        raise CapacityError("distribution has infinite support")
    count = dist.atom_count()
    if count > cap:
        raise CapacityError(f"support has {count} atoms, cap is {cap}")
    vals = [np.array(dist.law(i).values) for i in range(dist.n)]
    probs = [np.array(dist.law(i).probs) for i in range(dist.n)]
    idx = np.indices([len(v) for v in vals]).reshape(dist.n, -1)
    points = np.stack([vals[i][idx[i]] for i in range(dist.n)], axis=1)
    logp = np.zeros(idx.shape[1])
    for i in range(dist.n):
        logp += np.log(probs[i][idx[i]])
    return points, np.exp(logp)


# Orlicz norms -------------------------------------------------------------------

LOG2 = math.log(2.0)


def _bisect_decreasing(log_moment, hi0: float, tol: float = 1e-12, max_doublings: int = 200) -> float:
    """Smallest ``t`` with ``log_moment(t) <= ln 2`` for a decreasing ``log_moment``."""
    lo, hi = hi0 * 1e-13, hi0
    for _ in range(max_doublings):
        if log_moment(hi) <= LOG2:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise DomainError("exponential moment exceeds 2 on the whole search range")
    while hi / lo - 1.0 > tol:
        mid = math.sqrt(lo * hi)
        if log_moment(mid) <= LOG2:
            hi = mid
        else:
            lo = mid
    return hi


def _finite_log_moment(absv: np.ndarray, logp: np.ndarray, alpha: float):
    def f(t):
        return float(special.logsumexp((absv / t) ** alpha + logp))
    return f


def _gaussian_log_moment(alpha: float):
    def f(t):
        val, _ = integrate.quad(lambda x: math.exp((x / t) ** alpha - 0.5 * x * x), 0.0, math.inf,
                                epsabs=0.0, epsrel=1e-12, limit=200)
        return math.log(val * math.sqrt(2.0 / math.pi))
    return f


def psi_alpha_norm(law: CoordinateLaw, alpha: float) -> float:
    """Orlicz norm ``inf{t > 0 : E exp(|Y|^alpha / t^alpha) <= 2}``."""
    alpha = float(alpha)
    if not alpha >= 1.0:
        raise InputError("alpha must be >= 1")
    if law.kind == "gaussian":
        if alpha == 2.0:
            return math.sqrt(8.0 / 3.0)
        if alpha > 2.0:
            raise DomainError("Gaussian has infinite psi_alpha norm for alpha > 2")
        # below t ~ 1 the integrand can blow up; the moment is decreasing so bisection just moves right
        f = _gaussian_log_moment(alpha)
        return _bisect_decreasing(lambda t: f(t) if t > 0.3 else math.inf, 64.0)
    v, p = law.atoms
    absv = np.abs(v)
    keep = absv > 0
    if not keep.any():
        return 0.0
    # the norm is 1-homogeneous: bisect on the support scaled to max 1 so tiny or huge atoms stay in range
    scale = float(absv.max())
    f = _finite_log_moment(absv / scale, np.log(p), alpha)
    return scale * _bisect_decreasing(f, 64.0)


def exp_moment(law: CoordinateLaw, alpha: float, t: float) -> float:
    """``E exp(|Y|^alpha / t^alpha)`` for a finite-support law."""
    v, p = law.atoms
    return math.exp(_finite_log_moment(np.abs(v), np.log(p), alpha)(t))


class PsiBracket(NamedTuple):
    low: float
    point: float
    high: float


def psi_norm_of_sample(values, alpha: float, z: float = 3.0) -> PsiBracket:
    """Empirical Orlicz norm of a sample, reported as a bracket.

    The moment ``E exp(|V|^alpha / t^alpha)`` is replaced by its sample mean
    and solved for ``t``.  The bracket is ``point -+ z * SE`` where the standard
    error of ``t`` comes from the delta method through the implicit equation.
    """
    a = np.abs(np.asarray(values, dtype=float))
    if not alpha >= 1.0:
        raise InputError("alpha must be >= 1")
    if a.size == 0:
        raise InputError("empty sample")
    if not a.any():
        return PsiBracket(0.0, 0.0, 0.0)
    n = a.size
    logn = math.log(n)
    # solve on the unit scale so tiny samples do not underflow
    scale = float(a.max())
    a = a / scale

    def log_moment(t):
        return float(special.logsumexp((a / t) ** alpha)) - logn

    t = _bisect_decreasing(log_moment, 64.0, tol=1e-10)
    u = (a / t) ** alpha
    with np.errstate(over="ignore"):
        e = np.exp(u)
    if not np.all(np.isfinite(e)) or n < 2:
        return PsiBracket(0.0, scale * t, math.inf)
    slope = alpha / t * float(np.mean(u * e))
    se = float(np.std(e, ddof=1)) / math.sqrt(n) / slope
    return PsiBracket(scale * max(t - z * se, 0.0), scale * t, scale * (t + z * se))


# maxima of coordinates -------------------------------------------------------------

def max_abs_law(dist: ProductDistribution) -> CoordinateLaw:
    """Exact law of ``max_i |X_i|`` for finite-support coordinates."""
    if not dist.finite_support():
        raise CapacityError("max law needs finite-support coordinates")
    levels = np.unique(np.concatenate([np.abs(dist.law(i).values) for i in range(dist.n)]))
    logcdf = np.zeros(len(levels))
    for i in range(dist.n):
        v, p = dist.law(i).atoms
        c = np.array([math.fsum(p[np.abs(v) <= x]) for x in levels])
        with np.errstate(divide="ignore"):
            logcdf += np.log(c)
    cdf = np.exp(logcdf)
    pm = np.diff(np.concatenate([[0.0], cdf]))
    keep = pm > 0
    pm = pm[keep] / pm[keep].sum()
    return CoordinateLaw.finite(list(zip(levels[keep].tolist(), pm.tolist())))


def gaussian_max_abs_mean(n: int) -> float:
    """``E max_{i<=n} |G_i|`` by quadrature of the survival function."""
    def surv(x):
        return -math.expm1(n * math.log1p(-math.erfc(x / math.sqrt(2.0))))
    val, _ = integrate.quad(surv, 0.0, math.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def expected_max_abs(dist: ProductDistribution) -> float:
    """Exact ``E max_i |X_i|`` (finite support or i.i.d. Gaussian)."""
    if dist.finite_support():
        v, p = max_abs_law(dist).atoms
        return math.fsum(v * p)
    if dist.iid and dist.law(0).kind == "gaussian":
        return gaussian_max_abs_mean(dist.n)
    raise CapacityError("no exact formula for this mixture of laws")


def psi_alpha_norm_of_max(dist: ProductDistribution, alpha: float) -> float:
    """Orlicz norm of ``max_i |X_i|`` (finite support or i.i.d. Gaussian)."""
    if dist.finite_support():
        return psi_alpha_norm(max_abs_law(dist), alpha)
    if not (dist.iid and dist.law(0).kind == "gaussian"):
        raise CapacityError("no exact formula for this mixture of laws")
    if alpha > 2.0:
        raise DomainError("Gaussian maxima have infinite psi_alpha norm for alpha > 2")
    n = dist.n
    sq2 = math.sqrt(2.0)

    def log_moment(t):
        # density of max|G_i| is n * 2 phi(x) * (2 Phi(x) - 1)^(n - 1)
        def g(x):
            inner = -math.erfc(x / sq2)
            log_cdf = (n - 1) * math.log1p(inner) if inner > -1 else -math.inf
            return math.exp((x / t) ** alpha - 0.5 * x * x + log_cdf)
        val, _ = integrate.quad(g, 0.0, math.inf, epsabs=0.0, epsrel=1e-11, limit=400)
        return math.log(val * n * 2.0 / math.sqrt(2.0 * math.pi))

    lo_ok = 1.05 * math.sqrt(2.0) if alpha == 2.0 else 0.3
    return _bisect_decreasing(lambda t: log_moment(t) if t > lo_ok else math.inf, 64.0)


# closed forms for the Bernoulli and two-point examples ---------------------------------

def bernoulli_psi2_squared(delta: float) -> float:
    """``(1 - 2 delta) / (4 ln((1 - delta) / delta))`` for ``0 < delta <= 1/4``."""
    d = float(delta)
    if not 0.0 < d <= 0.25:
        raise InputError("delta must lie in (0, 1/4]")
    return (1.0 - 2.0 * d) / (4.0 * math.log((1.0 - d) / d))


def counterexample_max_moments(r: float, n: int) -> tuple[float, float]:
    """``(E max X_i^2, sqrt(E max X_i^4))`` for ``n`` i.i.d. two-point variables."""
    if not r >= 4.0:
        raise InputError("r must be >= 4")
    if int(n) < 1:
        raise InputError("n must be >= 1")
    p = math.exp(-r)
    q = math.exp(int(n) * math.log1p(-p))
    return r * (1.0 - q) + q, math.sqrt(r * r * (1.0 - q) + q)


def _square_survival(values, probs):
    sq = np.asarray(values, dtype=float) ** 2
    order = np.argsort(sq)
    sq, pr = sq[order], np.asarray(probs, dtype=float)[order]

    def surv(s):
        return math.fsum(pr[sq > s])
    return sq, surv


def tail_regularity_violation_law(law: CoordinateLaw, A: float, t0: float | None = None) -> bool:
    """Is there ``t >= t0`` with ``P(X^2 > A t) > P(X^2 > t) / A``?

    ``t0`` defaults to ``E|X|``.  Both survival functions are right-continuous
    step functions, so checking ``t0`` and every breakpoint above it is exact.
    """
    A = float(A)
    if not A > 1.0:
        raise InputError("A must exceed 1")
    v, p = law.atoms
    if t0 is None:
        t0 = math.fsum(np.abs(v) * p)
    sq, surv = _square_survival(v, p)
    cands = {float(t0)} | {float(s) for s in sq if s >= t0} | {float(s / A) for s in sq if s / A >= t0}
    return any(surv(A * t) > surv(t) / A for t in sorted(cands))


def tail_regularity_violation(r: float, A: float) -> bool:
    """Exact tail-regularity scan for the two-point law with parameter ``r``."""
    return tail_regularity_violation_law(CoordinateLaw.two_point(r), A)
