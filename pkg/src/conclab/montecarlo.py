"""Seeded replicate engine.

Random numbers come from Philox, a counter-based generator: the pair
``(seed, stream_id)`` is the key and every block of replicates gets its own
counter offset.  Replicates are processed in fixed-size blocks so the output
depends only on ``(seed, stream_id, reps)`` and never on how many worker
threads ran or in which order the blocks finished.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import ConclabError, InputError, ReplicateError

MASK64 = (1 << 64) - 1
BLOCK_SIZE = 4096
DEFAULT_MAX_WORKERS = 8


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix(*keys: int) -> int:
    """Hash a sequence of integers into one 64-bit value."""
    h = 0x243F6A8885A308D3
    for k in keys:
        h = splitmix64(h ^ (int(k) & MASK64))
    return h


def key_of(obj: Any) -> int:
    """Stable 64-bit key of a JSON-serializable object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    ``gen`` is a lazily created ``numpy.random.Generator`` that advances as it
    is used, so a stream should be owned by one caller.  ``block(b)`` returns a
    fresh generator for block ``b`` that does not overlap with ``gen`` or with
    any other block.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int = 0):
        if not (0 <= int(seed) <= MASK64 and 0 <= int(stream_id) <= MASK64):
            raise InputError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._gen = None

    def _bitgen(self, counter):
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Philox(key=key, counter=np.array(counter, dtype=np.uint64))

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            self._gen = np.random.Generator(self._bitgen([0, 0, 0, 1]))
        return self._gen

    def block(self, b: int) -> np.random.Generator:
        return np.random.Generator(self._bitgen([0, 0, int(b), 0]))

    def substream(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, mix(self.stream_id, *keys))

    def named(self, name: str) -> "RngStream":
        return self.substream(key_of(name))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.gen
    if isinstance(rng, np.random.Generator):
        return rng
    raise InputError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("CONCLAB_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"CONCLAB_WORKERS must be an integer, got {env!r}") from None
    return max(1, min(os.cpu_count() or 1, DEFAULT_MAX_WORKERS))


# replicate engine ---------------------------------------------------------------

def replicate(draw: Callable[[np.random.Generator, int], np.ndarray], reps: int,
              rng: RngStream, block_size: int = BLOCK_SIZE,
              workers: int | None = None) -> np.ndarray:
    """Run ``draw(gen, size)`` over ``reps`` replicates in fixed blocks.

    ``draw`` must return ``size`` values along its first axis and must be
    pure apart from the generator it is handed.  Blocks are merged by index.
    """
    if reps <= 0:
        raise InputError("reps must be positive")
    nblocks = -(-reps // block_size)
    sizes = [min(block_size, reps - b * block_size) for b in range(nblocks)]

    def run(b):
        out = np.asarray(draw(rng.block(b), sizes[b]))
        if out.shape[:1] != (sizes[b],):
            raise InputError(f"draw returned shape {out.shape}, expected leading {sizes[b]}")
        return out

    w = min(worker_count(workers), nblocks)
    if w == 1:
        parts = [run(b) for b in range(nblocks)]
    else:
        with ThreadPoolExecutor(max_workers=w) as ex:
            parts = list(ex.map(run, range(nblocks)))
    values = np.concatenate(parts, axis=0)
    bad = ~np.isfinite(values.reshape(len(values), -1)).all(axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise ReplicateError(i, values[i])
    return values


def evaluate(evaluator: Callable, dist, reps: int, rng: RngStream,
             workers: int | None = None) -> np.ndarray:
    """Values of ``evaluator`` on ``reps`` draws from ``dist``.

    ``dist`` is anything with ``sample(gen, size) -> (size, n)``; ``evaluator``
    maps a ``(size, n)`` batch to ``size`` values.
    """
    return replicate(lambda g, m: evaluator(dist.sample(g, m)), reps, rng, workers=workers)


def pointwise(f: Callable[[np.ndarray], float]) -> Callable[[np.ndarray], np.ndarray]:
    """Lift a scalar function of one vector to a batch evaluator."""
    return lambda batch: np.array([f(x) for x in batch], dtype=float)


def mean_stderr(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    m = float(np.mean(values))
    if len(values) < 2:
        return m, math.inf
    return m, float(np.std(values, ddof=1) / math.sqrt(len(values)))


def estimate_mean(evaluator, dist, reps: int, rng: RngStream,
                  workers: int | None = None) -> tuple[float, float]:
    """Sample mean and CLT standard error."""
    if reps < 100:
        raise InputError("estimate_mean needs reps >= 100")
    return mean_stderr(evaluate(evaluator, dist, reps, rng, workers))


def clopper_pearson(k, n: int, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """Exact binomial confidence interval for ``k`` successes in ``n`` trials."""
    k = np.asarray(k, dtype=float)
    a = (1.0 - level) / 2.0
    with np.errstate(invalid="ignore"):
        lo = np.where(k > 0, stats.beta.ppf(a, k, n - k + 1), 0.0)
        hi = np.where(k < n, stats.beta.ppf(1.0 - a, k + 1, n - k), 1.0)
    return lo, hi


@dataclass(frozen=True)
class TailEstimate:
    t_grid: np.ndarray
    point: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    reps: int

    def rows(self):
        for row in zip(self.t_grid, self.point, self.ci_low, self.ci_high):
            yield dict(zip(("t", "survival", "ci_low", "ci_high"), map(float, row)))


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) == 0 or np.any(np.diff(t) <= 0):
        raise InputError("t_grid must be a non-empty strictly increasing sequence")
    return t


def tail_from_values(values, t_grid, level: float = 0.95) -> TailEstimate:
    """Survival fractions ``P(V >= t)`` read off one sorted sample."""
    t = _check_grid(t_grid)
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    k = n - np.searchsorted(v, t, side="left")
    lo, hi = clopper_pearson(k, n, level)
    return TailEstimate(t, k / n, lo, hi, n)


def estimate_tail(evaluator, dist, t_grid, reps: int, rng: RngStream,
                  workers: int | None = None) -> TailEstimate:
    if reps < 1000:
        raise InputError("estimate_tail needs reps >= 1000")
    _check_grid(t_grid)
    return tail_from_values(evaluate(evaluator, dist, reps, rng, workers), t_grid)


def quantile_from_values(values, q: float) -> float:
    if not 0.0 < q < 1.0:
        raise InputError("q must lie in (0, 1)")
    v = np.sort(np.asarray(values, dtype=float))
    return float(v[min(int(math.floor(q * len(v))), len(v) - 1)])


def estimate_quantile(evaluator, dist, q: float, reps: int, rng: RngStream,
                      workers: int | None = None) -> float:
    """Order statistic at index ``floor(q * reps)``."""
    if reps < 1000:
        raise InputError("estimate_quantile needs reps >= 1000")
    if not 0.0 < q < 1.0:
        raise InputError("q must lie in (0, 1)")
    return quantile_from_values(evaluate(evaluator, dist, reps, rng, workers), q)


# reports and sweeps -----------------------------------------------------------------

def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def config_hash(config: Mapping) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    if isinstance(v, (list, tuple, dict)):
        return canonical_json(v)
    return str(v)


@dataclass
class ExperimentReport:
    """Records of one experiment plus what is needed to reproduce them."""

    name: str
    config: dict
    seed: int
    records: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    def columns(self) -> list[str]:
        cols: list[str] = []
        for r in self.records:
            for k in r:
                if k not in cols:
                    cols.append(k)
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = self.columns()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.records:
            w.writerow([_fmt(r.get(c)) for c in cols])
        return buf.getvalue()

    def manifest(self, files: Sequence[str]) -> dict:
        from . import __version__
        return {
            "name": self.name,
            "config_hash": self.config_hash,
            "config": self.config,
            "seed": self.seed,
            "git_describe": git_describe(),
            "version": __version__,
            "wall_time_s": round(self.wall_time, 3),
            "summary": self.summary,
            "files": sorted(files),
            "records": len(self.records),
        }

    def write(self, output_dir, extra_files: Sequence[str] = ()) -> Path:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.csv").write_text(self.to_csv())
        files = ["results.csv", *extra_files]
        path = out / "manifest.json"
        path.write_text(json.dumps(self.manifest(files), indent=2, sort_keys=True,
                                   default=_json_default) + "\n")
        return path


def lattice(grid: Mapping[str, Sequence] | Iterable[Mapping]) -> list[dict]:
    """Expand ``{name: values}`` into the Cartesian product, or pass a list through."""
    if isinstance(grid, Mapping):
        names = list(grid)
        return [dict(zip(names, combo)) for combo in product(*(grid[k] for k in names))]
    return [dict(p) for p in grid]


def sweep(grid, runner: Callable[[dict, RngStream], Mapping], seed: int,
          name: str = "sweep", config: dict | None = None) -> ExperimentReport:
    """Run ``runner(params, rng)`` at every lattice point.

    Each point gets a stream keyed by its own parameters, so permuting the
    lattice permutes the records and nothing else.  A point whose runner
    raises a library error is recorded with ``status="failed"``.
    """
    points = lattice(grid)
    if not points:
        raise InputError("empty parameter lattice")
    t0 = time.perf_counter()
    records = []
    for p in points:
        rng = RngStream(seed, mix(seed, key_of(p)))
        rec = dict(p)
        try:
            rec.update(runner(p, rng))
            rec.setdefault("status", "ok")
        except (ConclabError, ArithmeticError) as exc:
            rec["status"] = "failed"
            rec["error"] = f"{type(exc).__name__}: {exc}"
        records.append(rec)
    cfg = config if config is not None else {"grid": points}
    return ExperimentReport(name, cfg, seed, records, wall_time=time.perf_counter() - t0)
