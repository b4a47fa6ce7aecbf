"""Command line entry point: ``cyclic-urn <subcommand> ...``.

Exit codes: 0 when every requested verdict passed, 1 when a verdict failed,
2 for invalid parameters, 3 for I/O failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import stats, verify
from .fixpoint import debiased_abs_second_moment, sample_xi
from .moments import (
    StateSpaceTooLarge,
    closed_form_index,
    closed_forms,
    exact_distribution,
    exact_mean_R,
    exact_u_moments,
    mean_expansion,
    second_moment_matrix,
    xi_second_moment,
)
from .residuals import ensemble_Z, exact_Z_covariance
from .spectral import InvalidParameter, build_basis, limit_covariance, sigma_matrix
from .urn import replicate_seeds, simulate_ensemble

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


@dataclass
class RunConfig:
    subcommand: str
    m: int | None = None
    n: int | None = None
    reps: int = 1000
    seed: int = 0
    horizon_multiplier: int = 50
    depth: int = 30
    pool_size: int = 10**5
    out: Path | None = None
    fmt: str = "json"
    extra: dict = field(default_factory=dict)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


class Emitter:
    """Writes named artifacts into the output directory, or the selected one to stdout."""

    def __init__(self, out: Path | None, fmt: str):
        self.out = out
        self.fmt = fmt

    def emit(self, name: str, kind: str, text: str) -> None:
        if self.out is None:
            if kind == self.fmt:
                sys.stdout.write(text)
            return
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / f"{name}.{kind}").write_text(text)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise InvalidParameter(msg)


def cmd_spectral(cfg: RunConfig, em: Emitter) -> int:
    _require(cfg.m is not None and cfg.m >= 2, "--m must be >= 2")
    basis = build_basis(cfg.m)
    rows = [[float(basis.lambdas[k]), float(basis.mus[k])] for k in range(cfg.m)]
    if cfg.extra.get("eigenplot"):
        em.emit(f"eigenplot_m{cfg.m}", "csv", _csv_text(["lambda", "mu"], rows))
        if em.out is None and em.fmt == "json":
            sys.stdout.write(_csv_text(["lambda", "mu"], rows))
        return EXIT_OK
    tgt = sigma_matrix(basis)
    report = {
        "m": cfg.m,
        "eigenvalues": rows,
        "classes": [basis.classify(k) for k in range(cfg.m)],
        "r": basis.r,
        "sigma": tgt.sigma_m,
        "rank_sigma": tgt.rank_sigma,
        "M_m": tgt.M_m,
        "D": tgt.D,
    }
    em.emit(f"spectral_m{cfg.m}", "json", dumps(report))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, em: Emitter) -> int:
    _require(cfg.m is not None and cfg.m >= 2, "--m must be >= 2")
    steps = cfg.extra["steps"]
    _require(steps >= 0, "--steps must be >= 0")
    cps = cfg.extra.get("checkpoints") or [steps]
    _require(all(0 <= c <= steps for c in cps), "checkpoints must lie in [0, steps]")
    cps = sorted(set(cps))
    basis = build_basis(cfg.m)
    counts = simulate_ensemble(cfg.m, cps, cfg.reps, cfg.seed)
    u = basis.project(counts.astype(float))
    header = ["replicate", "time"] + [f"R{t}" for t in range(cfg.m)]
    for k in range(cfg.m):
        header += [f"re_u{k}", f"im_u{k}"]
    rows = []
    for r in range(cfg.reps):
        for i, c in enumerate(cps):
            row = [r, c] + counts[r, i].tolist()
            for k in range(cfg.m):
                row += [repr(float(u[r, i, k].real)), repr(float(u[r, i, k].imag))]
            rows.append(row)
    em.emit(f"simulate_m{cfg.m}", "csv", _csv_text(header, rows))
    seeds = [int(s) for s in replicate_seeds(cfg.seed, min(cfg.reps, 8))]
    em.emit(f"simulate_m{cfg.m}", "json", dumps({"m": cfg.m, "checkpoints": cps, "reps": cfg.reps, "seed": cfg.seed, "first_replicate_seeds": seeds}))
    return EXIT_OK


def cmd_moments(cfg: RunConfig, em: Emitter) -> int:
    _require(cfg.m is not None and cfg.m >= 2, "--m must be >= 2")
    _require(cfg.n is not None and cfg.n >= 0, "--n must be >= 0")
    m, n = cfg.m, cfg.n
    basis = build_basis(m)
    mean, s2 = second_moment_matrix(m, n)
    report: dict = {"m": m, "n": n, "mean_u": mean, "second_u": s2, "closed_forms": []}
    for case, div in (("u0", 1), ("half", 2), ("third", 3), ("sixth", 6)):
        if m % div == 0:
            k = closed_form_index(m, case)
            rec = float(s2[k, (m - k) % m].real)
            cf = closed_forms(m, n, case)
            report["closed_forms"].append({"case": case, "k": k, "recursion": rec, "closed_form": cf, "rel_err": abs(rec - cf) / max(abs(cf), 1e-300)})
    ok = True
    if cfg.extra.get("exact_oracle"):
        mean_o, s2_o = exact_u_moments(exact_distribution(m, n))
        err = float(max(np.abs(mean - mean_o).max(), np.abs(s2 - s2_o).max()))
        ok = err < 1e-10
        report["oracle"] = {"max_abs_err": err, "match": ok, "second_u": s2_o}
    if cfg.extra.get("expansion"):
        exp = mean_expansion(m, n)
        report["expansion"] = {
            "exact_mean_R": exact_mean_R(m, n),
            "value": exp.value,
            "drift": exp.drift,
            "xi_vectors": {str(k): row for k, row in zip(basis.large_indices, exp.xi_vectors)},
            "remainder_order": exp.remainder_order,
            "remainder_norm_over_sqrt_n": float(np.linalg.norm(exact_mean_R(m, n) - exp.value) / math.sqrt(max(n, 1))),
        }
    em.emit(f"moments_m{m}_n{n}", "json", dumps(report))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_residuals(cfg: RunConfig, em: Emitter) -> int:
    _require(cfg.m is not None and cfg.m >= 2, "--m must be >= 2")
    _require(cfg.n is not None and cfg.n >= 2, "--n must be >= 2")
    _require(cfg.horizon_multiplier >= 1, "--horizon-mult must be >= 1")
    _require(cfg.reps >= stats.MIN_REPS, f"--reps must be >= {stats.MIN_REPS}")
    m, n = cfg.m, cfg.n
    basis = build_basis(m)
    horizon = cfg.horizon_multiplier * n
    counts = simulate_ensemble(m, [n, horizon], cfg.reps, cfg.seed)
    z = ensemble_Z(basis, counts, n, horizon)
    em.emit(f"residuals_m{m}_n{n}", "csv", _csv_text([f"z{i}" for i in range(basis.dim)], [[repr(float(v)) for v in row] for row in z]))
    summ = stats.summarize(z, m, n, cfg.seed)
    target = limit_covariance(basis)
    exact = exact_Z_covariance(m, n, horizon if basis.r else None)
    v = stats.covariance_verdict(summ, target, np.abs(exact - target), label="limit+allowance")
    report = {
        "m": m,
        "n": n,
        "reps": cfg.reps,
        "horizon": horizon,
        "emp_cov": summ.emp_cov,
        "se_cov": summ.se_cov,
        "M_m": target,
        "exact_finite_n": exact,
        "verdict": v.as_dict(),
    }
    if basis.r:
        vals = verify.bn_values(cfg.seed, samples=max(cfg.reps, 10**4), depth=cfg.depth, pool=cfg.pool_size, m=m)
        report["bn_trend"] = {"grid": [100, 1000, 10000], "values": [x for x, _ in vals], "passed": stats.trend_verdict([x for x, _ in vals]).passed}
    em.emit(f"residuals_m{m}_n{n}", "json", dumps(report))
    return EXIT_OK if v.passed else EXIT_FAIL


def cmd_fixpoint(cfg: RunConfig, em: Emitter) -> int:
    _require(cfg.m is not None and cfg.m >= 2, "--m must be >= 2")
    k = cfg.extra["k"]
    basis = build_basis(cfg.m)
    _require(0 < k < cfg.m and basis.classify(k) == "large", f"k={k} is not a large index for m={cfg.m}")
    _require(cfg.depth >= 1 and cfg.pool_size >= 2, "--depth >= 1 and --pool >= 2 required")
    pool = sample_xi(k, cfg.depth, cfg.pool_size, np.random.default_rng(cfg.seed), basis)
    em.emit(f"fixpoint_m{cfg.m}_k{k}", "csv", _csv_text(["re", "im"], [[repr(float(x.real)), repr(float(x.imag))] for x in pool]))
    abs_sq, se = debiased_abs_second_moment(pool, cfg.depth, basis, k)
    report = {
        "m": cfg.m,
        "k": k,
        "depth": cfg.depth,
        "pool": cfg.pool_size,
        "seed": cfg.seed,
        "mean": complex(pool.mean()),
        "abs_second_moment": abs_sq,
        "abs_second_moment_naive_se": se,
        "second_moment": complex(np.mean(pool**2)),
        "semi_analytic_abs_second_moment": xi_second_moment(cfg.m, k)["limit"],
    }
    em.emit(f"fixpoint_m{cfg.m}_k{k}", "json", dumps(report))
    return EXIT_OK


def cmd_verify(cfg: RunConfig, em: Emitter) -> int:
    suite = cfg.extra["suite"]
    ms = tuple(cfg.extra.get("ms") or verify.COV_MS)
    _require(all(m >= 3 for m in ms), "--m for the clt suite must be >= 3")
    report = verify.run_suite(suite, cfg.seed, ms)
    passed = all(r["passed"] for r in report.values())
    em.emit(f"verify_{suite}", "json", dumps({"suite": suite, "seed": cfg.seed, "passed": passed, "checks": report}))
    return EXIT_OK if passed else EXIT_FAIL


COMMANDS = {
    "spectral": cmd_spectral,
    "simulate": cmd_simulate,
    "moments": cmd_moments,
    "residuals": cmd_residuals,
    "fixpoint": cmd_fixpoint,
    "verify": cmd_verify,
}


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=None, help="output directory (default: stdout)")
    common.add_argument("--format", dest="fmt", choices=("json", "csv"), default="json", help="artifact printed to stdout")
    p = argparse.ArgumentParser(prog="cyclic-urn", description="Cyclic urn simulation, exact moments and verification.")
    sub = p.add_subparsers(dest="subcommand", required=True)

    s = sub.add_parser("spectral", parents=[common])
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--eigenplot", action="store_true", help="CSV of (lambda_k, mu_k)")

    s = sub.add_parser("simulate", parents=[common])
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--reps", type=int, default=1)
    s.add_argument("--checkpoints", type=_int_list, default=None)

    s = sub.add_parser("moments", parents=[common])
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--exact-oracle", action="store_true")
    s.add_argument("--expansion", action="store_true")

    s = sub.add_parser("residuals", parents=[common])
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--reps", type=int, default=1000)
    s.add_argument("--horizon-mult", type=int, default=50)
    s.add_argument("--depth", type=int, default=30)
    s.add_argument("--pool", type=int, default=10**5)

    s = sub.add_parser("fixpoint", parents=[common])
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--depth", type=int, default=30)
    s.add_argument("--pool", type=int, default=10**5)

    s = sub.add_parser("verify", parents=[common])
    s.add_argument("--suite", choices=tuple(verify.SUITES) + ("all",), default="all")
    s.add_argument("--m", type=int, action="append", dest="ms", help="covariance m (repeatable)")
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    known = {"subcommand", "m", "n", "reps", "seed", "horizon_mult", "depth", "pool", "out", "fmt"}
    return RunConfig(
        subcommand=ns.subcommand,
        m=getattr(ns, "m", None),
        n=getattr(ns, "n", None),
        reps=getattr(ns, "reps", 1000),
        seed=ns.seed,
        horizon_multiplier=getattr(ns, "horizon_mult", 50),
        depth=getattr(ns, "depth", 30),
        pool_size=getattr(ns, "pool", 10**5),
        out=ns.out,
        fmt=ns.fmt,
        extra={k: v for k, v in vars(ns).items() if k not in known},
    )


def run(cfg: RunConfig) -> int:
    em = Emitter(cfg.out, cfg.fmt)
    try:
        return COMMANDS[cfg.subcommand](cfg, em)
    except (InvalidParameter, StateSpaceTooLarge) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    return run(config_from_args(ns))


if __name__ == "__main__":
    sys.exit(main())
