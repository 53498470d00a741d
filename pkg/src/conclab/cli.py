"""Batch driver: ``conclab <subcommand>``.

Every experiment writes ``results.csv``, ``manifest.json``, the resolved
``config.toml`` and any charts into its output directory.  Exit codes: 0 on
success, 1 when an exact check fails, 2 on usage or config errors, 3 on
capacity or fit failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
import warnings
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from . import __version__
from .bounds import BoundParams
from .chaos import (ChaosProblem, check_record, convex_poincare_check, diag_comparison_check,
                    entropy_variational_check, khinchin_check, mls_check, tail_experiment)
from .covariance import (BernsteinEnsemble, CovModel, bernstein_experiment, bernstein_transfer,
                         decoupling_check, diagonal_spectrum, geometric_sigma, missing_cov_experiment,
                         spike_for_bernstein_rank, spike_for_eff_rank, spiked_sigma)
from .distributions import (CoordinateLaw, ProductDistribution, counterexample_max_moments,
                            psi_alpha_norm, tail_regularity_violation)
from .errors import CapacityError, ConclabError, FitFailure, InputError
from .ising import (IsingModel, conditional_plus_prob, empirical_distribution, exact_distribution,
                    glauber_sample, heat_bath_transition, ising_chaos_experiment, load_model,
                    random_model, total_variation)
from .linalg import MatrixFamily, random_family, random_symmetric, read_matrix
from .montecarlo import ExperimentReport, RngStream, canonical_json, key_of
from .plots import emit_plots

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_CAPACITY = 0, 1, 2, 3

COLUMNS = {
    "tail": "t, survival, ci_low, ci_high (95% Clopper-Pearson), rhs_<bound> at the fitted c",
    "cov-missing": "N, delta, median, q90, rhs_unit_C, ratio_q90",
    "bernstein": "rank, u, survival, ci_low, ci_high, rhs (c = C = 1), valid",
    "ising": "t, survival, ci_low, ci_high, rhs at the fitted C",
    "counterexample": "r, n, e_max_sq, sqrt_e_max_4th, mc_e_max_sq, mc_se",
    "checks": "check_name, parameters, margin, status, runtime_ms",
}


class ConfigError(InputError):
    pass


# config helpers -----------------------------------------------------------------------------

def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None


def _clean(obj):
    """Drop ``None`` values and convert numpy scalars so the config serializes as TOML."""
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dump_config(cfg: Mapping) -> str:
    return tomli_w.dumps(_clean(cfg))


def _table(cfg: Mapping, key: str) -> dict:
    v = cfg.get(key, {})
    if not isinstance(v, Mapping):
        raise ConfigError(f"'{key}' must be a table")
    return dict(v)


def _int(cfg: Mapping, key: str, default=None) -> int:
    v = cfg.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
        raise ConfigError(f"'{key}' must be an integer, got {v!r}")
    return int(v)


def _float(cfg: Mapping, key: str, default=None) -> float:
    v = cfg.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {v!r}")
    return float(v)


def grid(tbl) -> np.ndarray:
    """A list, or a table ``{start, stop, num, log = false}``."""
    if isinstance(tbl, Mapping):
        try:
            lo, hi, num = float(tbl["start"]), float(tbl["stop"]), int(tbl["num"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad grid table: {exc}") from None
        return np.geomspace(lo, hi, num) if tbl.get("log", False) else np.linspace(lo, hi, num)
    if isinstance(tbl, (list, tuple)) and tbl:
        try:
            return np.array(tbl, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError("grid entries must be numbers") from None
    raise ConfigError(f"bad grid {tbl!r}")


def params_from(cfg: Mapping) -> BoundParams:
    p = _table(cfg, "params")
    return BoundParams(**{k: float(p[k]) for k in ("c", "C", "c1") if k in p})


def family_from(tbl: Mapping) -> MatrixFamily:
    """``fixture = path`` (JSON list of matrices or a text matrix) or random ``k, n, seed``."""
    if "fixture" in tbl:
        path = Path(tbl["fixture"])
        try:
            if path.suffix == ".json":
                data = json.loads(path.read_text())
                mats = data["matrices"] if isinstance(data, Mapping) else data
                return MatrixFamily([np.array(m, dtype=float) for m in mats])
            return MatrixFamily([read_matrix(path)])
        except OSError as exc:
            raise ConfigError(f"cannot read family fixture {path}: {exc.strerror}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad family fixture {path}: {exc}") from None
    k, n = _int(tbl, "k", 1), _int(tbl, "n", 64)
    gen = np.random.default_rng(_int(tbl, "seed", 0))
    return random_family(k, n, gen, psd=bool(tbl.get("psd", False)),
                         zero_diagonal=bool(tbl.get("zero_diagonal", False)))


def law_from(tbl: Mapping | None) -> CoordinateLaw:
    return CoordinateLaw.gaussian() if not tbl else CoordinateLaw.from_config(tbl)


def sigma_from(tbl: Mapping):
    kind = tbl.get("kind", "spiked")
    n = _int(tbl, "n", 32)
    rot = tbl.get("rotation_seed")
    rot = None if rot is None else _int(tbl, "rotation_seed")
    if kind == "spiked":
        kappa = _float(tbl, "kappa") if "kappa" in tbl else spike_for_eff_rank(n, _float(tbl, "eff_rank", 4.0))
        return spiked_sigma(n, kappa, rot)
    if kind == "geometric":
        return geometric_sigma(n, _float(tbl, "kappa", 2.0), rot)
    if kind == "diagonal":
        return diagonal_spectrum(grid(tbl.get("values")), rot)
    raise ConfigError(f"unknown sigma kind {kind!r}")


def model_from(tbl: Mapping) -> IsingModel:
    if "fixture" in tbl:
        try:
            return load_model(tbl["fixture"])
        except OSError as exc:
            raise ConfigError(f"cannot read model fixture: {exc.strerror}") from None
        except ValueError as exc:
            raise ConfigError(f"bad model fixture: {exc}") from None
    kind = tbl.get("kind", "random")
    n, rho = _int(tbl, "n", 8), _float(tbl, "rho", 0.5)
    if kind == "random":
        gen = np.random.default_rng(_int(tbl, "seed", 0))
        return random_model(n, rho, _float(tbl, "h_max", 0.2), gen, bool(tbl.get("ferro", False)))
    if kind == "curie":
        J = np.full((n, n), (1.0 - rho) / (n - 1))
        np.fill_diagonal(J, 0.0)
        return IsingModel(J, np.full(n, _float(tbl, "h", 0.0)))
    raise ConfigError(f"unknown model kind {kind!r}")


# subcommands --------------------------------------------------------------------------------

def _finish(report: ExperimentReport, out: Path, resolved: Mapping, quiet: bool = False) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(dump_config(resolved))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        svgs = emit_plots(report, out)
    report.write(out, ["config.toml", *svgs])
    if not quiet:
        print(f"{report.name}: {len(report.records)} rows -> {out}")
        print(canonical_json(report.summary))


def _resolve(args, defaults: Mapping) -> dict:
    cfg = dict(defaults)
    if getattr(args, "config", None):
        cfg.update(load_config(args.config))
    for key in ("seed", "reps"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if getattr(args, "output", None):
        cfg["output_dir"] = args.output
    return cfg


def cmd_tail(args) -> int:
    cfg = _resolve(args, {"seed": 0, "reps": 100_000, "output_dir": "out/tail"})
    fam = family_from(_table(cfg, "family"))
    dist_tbl = _table(cfg, "distribution")
    dist = ProductDistribution(fam.dim, law_from(dist_tbl.get("law", dist_tbl or None)))
    t = grid(cfg.get("t_grid", {"start": 0.0, "stop": 10.0 * fam.max_spectral_norm(), "num": 41}))
    rng = RngStream(_int(cfg, "seed"))
    rep = tail_experiment(ChaosProblem(fam, dist), t, _int(cfg, "reps"), rng, params_from(cfg),
                          workers=args.workers)
    _finish(rep, Path(cfg["output_dir"]), cfg)
    return EXIT_OK


def cmd_cov_missing(args) -> int:
    cfg = _resolve(args, {"seed": 0, "reps": 400, "N_grid": [250, 500, 1000, 2000, 4000],
                          "delta_grid": [0.25, 0.5, 1.0], "output_dir": "out/cov-missing"})
    sig = _table(cfg, "sigma")
    model = CovModel(sigma_from(sig), law_from(cfg.get("law")))
    rep = missing_cov_experiment(model, [int(x) for x in grid(cfg["N_grid"])], grid(cfg["delta_grid"]),
                                 _int(cfg, "reps"), RngStream(_int(cfg, "seed")), params_from(cfg),
                                 t=_float(cfg, "t", math.log(10.0)), workers=args.workers)
    _finish(rep, Path(cfg["output_dir"]), cfg)
    return EXIT_OK


def cmd_bernstein(args) -> int:
    cfg = _resolve(args, {"seed": 0, "reps": 20_000, "n": 64, "N": 200, "ranks": [2, 8, 32],
                          "reference": 8, "moment_reps": 500, "C_grid": [0.25, 1.0, 4.0, 16.0],
                          "output_dir": "out/bernstein"})
    n, N = _int(cfg, "n"), _int(cfg, "N")
    ranks = [float(r) for r in cfg["ranks"]]
    ref = float(cfg["reference"])
    if ref not in ranks:
        raise ConfigError("reference must be one of ranks")
    root = RngStream(_int(cfg, "seed"))
    results, rows = {}, []
    t0 = time.perf_counter()
    for r in ranks:
        ens = BernsteinEnsemble(spiked_sigma(n, spike_for_bernstein_rank(n, r)), N)
        u = None
        if "u_grid_sigma" in cfg:
            sigma = math.sqrt(np.linalg.norm(ens.exact_R(), 2))
            u = grid(cfg["u_grid_sigma"]) * sigma
        res = bernstein_experiment(ens, u, _int(cfg, "reps"), root.substream(key_of({"rank": r})),
                                   _int(cfg, "moment_reps"), workers=args.workers)
        results[r] = res
        rows += [{"rank": r, **rec} for rec in res.report.records]
    transfer = bernstein_transfer(results, ref, [float(c) for c in cfg["C_grid"]],
                                  _float(cfg, "c1", 1.0))
    summary = {"ensembles": {repr(r): res.report.summary for r, res in results.items()},
               "transfer": transfer, "dimension_free": any(t["dominates_all"] for t in transfer)}
    rep = ExperimentReport("bernstein", {"experiment": "bernstein", **_clean(cfg)}, root.seed,
                           rows, summary, time.perf_counter() - t0)
    _finish(rep, Path(cfg["output_dir"]), cfg)
    return EXIT_OK


def cmd_ising(args) -> int:
    cfg = _resolve(args, {"seed": 0, "reps": 100_000, "output_dir": "out/ising"})
    model = model_from(_table(cfg, "model"))
    fam_tbl = {"n": model.n, "k": 3, **_table(cfg, "family"), "zero_diagonal": True}
    fam = family_from(fam_tbl)
    rho = _float(cfg, "rho", _float(_table(cfg, "model"), "rho", 0.0))
    t = grid(cfg.get("t_grid", {"start": 0.0, "stop": 4.0 * fam.max_spectral_norm(), "num": 41}))
    rng = RngStream(_int(cfg, "seed"))
    burn = cfg.get("burn_in")
    rep = ising_chaos_experiment(model, fam, t, _int(cfg, "reps"), rng, rho=rho,
                                 burn_in=None if burn is None else int(burn),
                                 thin=_int(cfg, "thin", 1), chains=_int(cfg, "chains", 64),
                                 workers=args.workers)
    tv_tbl = _table(cfg, "tv")
    if tv_tbl:
        S = glauber_sample(model, _int(tv_tbl, "burn_in", 10_000 * model.n), _int(tv_tbl, "thin", 1),
                           _int(tv_tbl, "count", 100_000), rng.substream(7),
                           chains=_int(tv_tbl, "chains", 100))
        _, p = exact_distribution(model)
        rep.summary["glauber_tv"] = total_variation(empirical_distribution(S, model.n), p)
    _finish(rep, Path(cfg["output_dir"]), cfg)
    return EXIT_OK


def cmd_counterexample(args) -> int:
    violation = tail_regularity_violation(args.r, args.A)
    print(f"violation={'true' if violation else 'false'}")
    law = CoordinateLaw.two_point(args.r)
    print(f"psi2_two_point={psi_alpha_norm(law, 2.0)!r}")
    if args.n is None:
        return EXIT_OK
    m2, m4 = counterexample_max_moments(args.r, args.n)
    rec = {"r": args.r, "n": args.n, "e_max_sq": m2, "sqrt_e_max_4th": m4}
    if args.reps:
        gen = RngStream(args.seed or 0).gen
        vals = np.empty(args.reps)
        for s in range(0, args.reps, 10_000):
            k = min(10_000, args.reps - s)
            vals[s:s + k] = (law.sample(gen, (k, args.n)) ** 2).max(axis=1)
        rec["mc_e_max_sq"] = float(vals.mean())
        rec["mc_se"] = float(vals.std(ddof=1) / math.sqrt(args.reps))
    print(canonical_json(rec))
    if args.output:
        rep = ExperimentReport("counterexample", {"experiment": "counterexample", **rec_cfg(args)},
                               args.seed or 0, [rec], {"violation": violation})
        _finish(rep, Path(args.output), rec_cfg(args), quiet=True)
    return EXIT_OK


def rec_cfg(args) -> dict:
    return _clean({"r": args.r, "A": args.A, "n": args.n, "reps": args.reps, "seed": args.seed})


# exact check suite -----------------------------------------------------------------------------

def checks_mls(seed: int, families: int = 20, n: int = 8, lams=(0.1, 0.5, 1.0)) -> list[dict]:
    gen = np.random.default_rng([seed, 1])
    dist = ProductDistribution(n, CoordinateLaw.rademacher())
    out = []
    for f in range(families):
        prob = ChaosProblem(random_family(3, n, gen), dist)
        for lam in lams:
            t0 = time.perf_counter()
            out.append(check_record("mls", {"family": f, "lambda": lam}, mls_check(prob, lam),
                                    -1e-10, t0))
    return out


def checks_entropy(seed: int, pairs: int = 100) -> list[dict]:
    gen = np.random.default_rng([seed, 2])
    out = []
    for k in range(pairs):
        m = int(gen.integers(2, 12))
        p = gen.dirichlet(np.ones(m))
        Y, W = gen.normal(0, 2, m), gen.normal(0, 2, m)
        lam = float(gen.uniform(0.05, 2.0))
        t0 = time.perf_counter()
        out.append(check_record("entropy_variational", {"pair": k, "atoms": m, "lambda": lam},
                                entropy_variational_check(Y, W, p, lam), -1e-12, t0))
    return out


def checks_khinchin_poincare(seed: int, count: int = 100, n: int = 10) -> list[dict]:
    gen = np.random.default_rng([seed, 3])
    out = []
    for k in range(count):
        t0 = time.perf_counter()
        B = gen.standard_normal((n, n))
        out.append(check_record("khinchin", {"matrix": k}, khinchin_check(B) - 1.0 / math.sqrt(2.0),
                                -1e-12, t0))
        t0 = time.perf_counter()
        fam = MatrixFamily([random_symmetric(n, gen) for _ in range(3)])
        out.append(check_record("convex_poincare", {"family": k}, convex_poincare_check(fam), 0.0, t0))
    return out


def checks_diag_comparison(seed: int, count: int = 50, n: int = 8) -> list[dict]:
    gen = np.random.default_rng([seed, 4])
    laws = {"rademacher": CoordinateLaw.rademacher(),
            "three_point": CoordinateLaw.symmetric_three_point(1.5, 0.3)}
    out = []
    for k in range(count):
        fam = random_family(3, n, gen, psd=True)
        for name, law in laws.items():
            t0 = time.perf_counter()
            out.append(check_record("diag_comparison", {"family": k, "law": name},
                                    diag_comparison_check(fam, law), -1e-12, t0))
    return out


def checks_decoupling(seed: int, count: int = 200, dims=(4, 8, 12)) -> list[dict]:
    gen = np.random.default_rng([seed, 5])
    out = []
    for k in range(count):
        n = dims[k % len(dims)]
        a, b = gen.standard_normal(n), gen.standard_normal(n)
        if k % 4 == 0:
            a, b = np.abs(a), np.abs(b)
        d = float(gen.uniform(0.01, 1.0))
        t0 = time.perf_counter()
        out.append(check_record("decoupling", {"case": k, "n": n, "delta": d},
                                decoupling_check(a, b, d), -1e-12, t0))
    return out


def checks_ising(seed: int, count: int = 10, n: int = 8) -> list[dict]:
    gen = np.random.default_rng([seed, 6])
    out = []
    for k in range(count):
        model = random_model(n, float(gen.uniform(0.1, 0.9)), 0.5, gen)
        states, p = exact_distribution(model)
        t0 = time.perf_counter()
        drift = float(np.abs(heat_bath_transition(model, p) - p).max())
        out.append(check_record("heat_bath_invariance", {"model": k}, 1e-10 - drift, 0.0, t0))
        t0 = time.perf_counter()
        worst = 0.0
        for idx in range(0, len(states), 17):
            for i in range(n):
                j = idx ^ (1 << (n - 1 - i))
                plus, minus = (idx, j) if states[idx, i] > 0 else (j, idx)
                exact = p[plus] / (p[plus] + p[minus])
                worst = max(worst, abs(conditional_plus_prob(model, states[idx], i) - exact))
        out.append(check_record("ising_conditional", {"model": k}, 1e-12 - worst, 0.0, t0))
    return out


CHECKS: dict[str, Callable[..., list[dict]]] = {
    "mls": checks_mls,
    "entropy": checks_entropy,
    "khinchin_poincare": checks_khinchin_poincare,
    "diag_comparison": checks_diag_comparison,
    "decoupling": checks_decoupling,
    "ising": checks_ising,
}

QUICK = {"mls": {"families": 3}, "entropy": {"pairs": 20}, "khinchin_poincare": {"count": 10},
         "diag_comparison": {"count": 5}, "decoupling": {"count": 30}, "ising": {"count": 2}}


def run_checks(seed: int, quick: bool = False) -> list[dict]:
    records = []
    for name, fn in CHECKS.items():
        records += fn(seed, **(QUICK[name] if quick else {}))
    return records


def cmd_checks(args) -> int:
    seed = 0 if args.seed is None else args.seed
    t0 = time.perf_counter()
    records = run_checks(seed, args.quick)
    rows = [{**r, "parameters": canonical_json(r["parameters"])} for r in records]
    failed = [r for r in records if r["status"] != "pass"]
    by_name: dict[str, list[float]] = {}
    for r in records:
        by_name.setdefault(r["check_name"], []).append(r["margin"])
    summary = {k: {"count": len(v), "min_margin": min(v)} for k, v in by_name.items()}
    summary["failed"] = len(failed)
    for name, s in sorted(summary.items()):
        if name != "failed":
            print(f"{name}: {s['count']} checks, min margin {s['min_margin']:.3e}")
    print(f"failed: {len(failed)}")
    if args.output:
        cfg = {"seed": seed, "quick": bool(args.quick)}
        rep = ExperimentReport("checks", {"experiment": "checks", **cfg}, seed, rows, summary,
                               time.perf_counter() - t0)
        _finish(rep, Path(args.output), cfg, quiet=True)
    return EXIT_OK if not failed else EXIT_CHECK_FAILED


def _parse_cell(v: str):
    if v in ("true", "false"):
        return v == "true"
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def cmd_report(args) -> int:
    d = Path(args.input)
    try:
        manifest = json.loads((d / "manifest.json").read_text())
        with open(d / "results.csv", newline="") as fh:
            rows = [{k: _parse_cell(v) for k, v in r.items()} for r in csv.DictReader(fh)]
    except OSError as exc:
        raise ConfigError(f"cannot read report in {d}: {exc.strerror}") from None
    except ValueError as exc:
        raise ConfigError(f"bad manifest in {d}: {exc}") from None
    rep = ExperimentReport(manifest.get("name", "report"), manifest.get("config", {}),
                           manifest.get("seed", 0), rows, manifest.get("summary", {}))
    svgs = emit_plots(rep, d)
    files = sorted(set(manifest.get("files", [])) | set(svgs))
    manifest["files"] = files
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"{rep.name}: {len(rows)} rows, config {manifest.get('config_hash', '?')[:12]}")
    print(canonical_json(rep.summary))
    for f in svgs:
        print(f"wrote {d / f}")
    return EXIT_OK


# entry point ------------------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="conclab", description="Concentration-inequality verification experiments.")
    p.add_argument("--version", action="version", version=f"conclab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def experiment(name, fn, help_):
        s = sub.add_parser(name, help=help_, description=f"{help_}. results.csv columns: {COLUMNS[name]}.")
        s.add_argument("--config", required=True, help="TOML config file")
        s.add_argument("--seed", type=int)
        s.add_argument("--reps", type=int)
        s.add_argument("--output", "-o", help="output directory (overrides output_dir)")
        s.add_argument("--workers", type=int, help="worker threads (default CONCLAB_WORKERS)")
        s.set_defaults(func=fn)
        return s

    experiment("tail", cmd_tail, "Tail of a chaos supremum against Hanson-Wright-type bounds")
    experiment("cov-missing", cmd_cov_missing, "Covariance estimation error with missing observations")
    experiment("bernstein", cmd_bernstein, "Matrix Bernstein tails across effective ranks")
    experiment("ising", cmd_ising, "Ising chaos concentration under Dobrushin's condition")

    s = sub.add_parser("counterexample", help="Two-point law that breaks tail regularity",
                       description=f"results.csv columns: {COLUMNS['counterexample']}.")
    s.add_argument("--r", type=float, required=True)
    s.add_argument("--A", type=float, required=True)
    s.add_argument("--n", type=int)
    s.add_argument("--reps", type=int, default=0, help="Monte Carlo replicates for the max moments")
    s.add_argument("--seed", type=int)
    s.add_argument("--output", "-o")
    s.set_defaults(func=cmd_counterexample)

    s = sub.add_parser("checks", help="Exact inequality suite by full enumeration",
                       description=f"results.csv columns: {COLUMNS['checks']}.")
    s.add_argument("--seed", type=int)
    s.add_argument("--quick", action="store_true")
    s.add_argument("--output", "-o")
    s.set_defaults(func=cmd_checks)

    s = sub.add_parser("report", help="Summarize an output directory and redraw its charts")
    s.add_argument("--in", dest="input", required=True)
    s.set_defaults(func=cmd_report)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CapacityError, FitFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (InputError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConclabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
