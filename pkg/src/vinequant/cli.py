"""Command-line front end: fit, sample, quantile, gof, simulate.

Every run writes a manifest (resolved arguments, seed, input digests,
timestamps) sufficient to reproduce the outputs bit for bit.  Exit codes:
0 success, 2 input error, 3 degenerate data, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__, dvine, gof, quantile as qmod, sampler, sim
from .dvine import POLICIES, policy_from_name
from .errors import DegenerateDataError, InvalidInputError, NumericError, VinequantError
from .marginals import pseudo_observations
from .rng import RngStream

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3
EXIT_NUMERIC = 4

_POLICY_CHOICES = tuple(POLICIES)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _read_csv(path: str, no_header: bool) -> np.ndarray:
    """Numeric CSV reader with line-accurate error reporting."""
    if not os.path.exists(path):
        raise InvalidInputError(f"input file not found: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            try:
                row = [float(f) for f in fields]
            except ValueError:
                if lineno == 1 and not no_header and not rows:
                    continue  # header line
                raise InvalidInputError(
                    f"{path}: line {lineno}: non-numeric field"
                ) from None
            if not all(np.isfinite(row)):
                raise InvalidInputError(f"{path}: line {lineno}: non-finite value")
            if rows and len(row) != len(rows[0]):
                raise InvalidInputError(
                    f"{path}: line {lineno}: expected {len(rows[0])} fields, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise InvalidInputError(f"{path}: no numeric rows found")
    return np.asarray(rows, dtype=float)


def _write_csv(path: str, matrix: np.ndarray, header: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, matrix, delimiter=",", fmt="%.12g")


def _manifest_path(args) -> str:
    if getattr(args, "manifest", None):
        return args.manifest
    out = getattr(args, "out", None) or getattr(args, "out_dir", None)
    if out:
        base = out if not os.path.isdir(out) else os.path.join(out, "run")
        return base + ".manifest.json"
    return f"{args.subcommand}.manifest.json"


def _write_manifest(args, started: float, inputs: list, extra: dict | None = None) -> None:
    resolved = {
        k: v
        for k, v in vars(args).items()
        if k not in ("func",) and not k.startswith("_")
    }
    manifest = {
        "tool": "vinequant",
        "version": __version__,
        "subcommand": args.subcommand,
        "config": resolved,
        "seed": getattr(args, "seed", None),
        "inputs": {p: _sha256(p) for p in inputs if p and os.path.exists(p)},
        "started": started,
        "finished": time.time(),
    }
    if extra:
        manifest.update(extra)
    with open(_manifest_path(args), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")


def _echo_seed(args) -> None:
    if getattr(args, "seed", None) is not None:
        print(f"seed: {args.seed}", file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    started = time.time()
    data = _read_csv(args.data, args.no_header)
    ps = pseudo_observations(data)
    policy = policy_from_name(args.policy)
    fit = dvine.fit_with_policy(ps, policy, max_level=args.max_level)
    dvine.save_model(fit.model, args.out, tree_fits=fit.tree_fits or None)
    report = {
        "policy": args.policy,
        "p": fit.model.p,
        "m_trunc": fit.model.m_trunc,
        "loglik": fit.loglik,
        "aic": fit.aic,
        "n_params": fit.n_params,
        "pairs": [
            [{"family": c.family, "theta": list(c.theta)} for c in tree]
            for tree in fit.model.pairs
        ],
    }
    print(json.dumps(report, indent=2))
    _write_manifest(args, started, [args.data])
    return EXIT_OK


def cmd_sample(args) -> int:
    started = time.time()
    _echo_seed(args)
    model = dvine.load_model(args.model)
    rng = RngStream(args.seed)
    if args.uniform_scale:
        out = sampler.sample_uniform_vine(model, args.m, rng)
        header = ",".join(f"u{j + 1}" for j in range(model.p))
    else:
        if not args.data:
            raise InvalidInputError("--data is required unless --uniform-scale is set")
        ps = pseudo_observations(_read_csv(args.data, args.no_header))
        out = sampler.sample_data(model, ps, args.m, rng)
        header = ",".join(f"x{j + 1}" for j in range(model.p))
    _write_csv(args.out, out, header)
    _write_manifest(args, started, [args.model, args.data])
    return EXIT_OK


def cmd_quantile(args) -> int:
    started = time.time()
    _echo_seed(args)
    data = _read_csv(args.data, args.no_header)
    fn = qmod.target_by_name(args.h)
    policy = policy_from_name(args.policy)
    est = qmod.estimate_extreme_quantile(
        data,
        fn,
        alpha=args.alpha,
        m=args.m,
        policy=policy,
        rng=RngStream(args.seed),
        max_level=args.max_level,
        retransform=args.retransform,
    )
    payload = {
        "alpha": est.alpha,
        "q_hat": est.q_hat,
        "m": est.m,
        "index_used": est.index_used,
        "policy": args.policy,
        "seed": args.seed,
        "model_summary": est.model_summary,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    _write_manifest(args, started, [args.data])
    return EXIT_OK


def cmd_gof(args) -> int:
    started = time.time()
    _echo_seed(args)
    data = _read_csv(args.data, args.no_header)
    ps = pseudo_observations(data)
    policy = policy_from_name(args.policy)
    result = gof.parametric_bootstrap_pvalue(
        ps, policy, b=args.b, n_mc=args.n_mc, rng=RngStream(args.seed)
    )
    payload = {
        "tn": result.tn,
        "sn": result.sn,
        "p_value_tn": result.p_value_tn,
        "p_value_sn": result.p_value_sn,
        "b": result.b,
        "n_failed": result.n_failed,
        "policy": args.policy,
        "seed": args.seed,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    _write_manifest(args, started, [args.data])
    return EXIT_OK


_MARE_KEYS = {
    "kind", "n", "p", "innovation", "generator", "policies", "functions",
    "alphas", "m", "replications", "truth_mc_size", "seed", "gen_theta",
    "max_level",
}
_ALPHA_HAT_KEYS = {"kind", "distributions", "ns", "p", "alphas", "mc_reps", "seed"}


def _load_config(path: str) -> dict:
    real = path
    if not os.path.exists(real):
        from importlib import resources

        candidate = resources.files("vinequant").joinpath("configs", path)
        if candidate.is_file():
            real = str(candidate)
        else:
            raise InvalidInputError(f"config file not found: {path}")
    with open(real, "rb") as fh:
        try:
            obj = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise InvalidInputError(f"{path}: invalid TOML: {exc}") from exc
    kind = obj.get("kind", "mare")
    allowed = _ALPHA_HAT_KEYS if kind == "truncated-alpha" else _MARE_KEYS
    for key in obj:
        if key not in allowed:
            raise InvalidInputError(f"{path}: unknown config key {key!r}")
    obj["kind"] = kind
    return obj


def _tupled(obj: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()}


def cmd_simulate(args) -> int:
    started = time.time()
    cfg = _load_config(args.config)
    kind = cfg.pop("kind")
    os.makedirs(args.out_dir, exist_ok=True)
    cache = args.truth_cache or os.path.join(args.out_dir, "truth_cache.json")
    if kind == "truncated-alpha":
        config = sim.AlphaHatConfig(**_tupled(cfg))
        rows = sim.run_truncated_alpha(config, truth_cache_path=cache)
        table = sim.alpha_hat_table_text(rows)
        csv_text = sim.alpha_hat_csv_text(rows)
    else:
        config = sim.ExperimentConfig(**_tupled(cfg))
        result = sim.run_experiment(
            config, truth_cache_path=cache, threads=args.threads
        )
        table = result.to_table_text()
        csv_text = result.to_csv_text()
    with open(os.path.join(args.out_dir, "table.csv"), "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    with open(os.path.join(args.out_dir, "table.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    print(table, end="")
    print(f"seed: {config.seed}", file=sys.stderr)
    _write_manifest(
        args, started, [args.config], extra={"resolved_config": dataclasses.asdict(config)}
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _default_threads() -> int:
    env = os.environ.get("VINEQUANT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vinequant",
        description="Extreme quantile estimation via D-vine copula bootstrap",
    )
    parser.add_argument("--version", action="version", version=f"vinequant {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common_data(p):
        p.add_argument("--data", required=True, help="numeric CSV, header optional")
        p.add_argument("--no-header", action="store_true", help="treat line 1 as data")

    p_fit = sub.add_parser("fit", help="fit a D-vine model to a CSV")
    add_common_data(p_fit)
    p_fit.add_argument("--policy", default="aicfull", choices=_POLICY_CHOICES)
    p_fit.add_argument("--max-level", type=int, default=5,
                       help="cap on AIC-selected truncation level")
    p_fit.add_argument("--out", required=True, help="model JSON output path")
    p_fit.add_argument("--manifest", default=None)
    p_fit.set_defaults(func=cmd_fit)

    p_sample = sub.add_parser("sample", help="draw a bootstrap sample from a model")
    p_sample.add_argument("--model", required=True, help="model JSON from 'fit'")
    p_sample.add_argument("--data", default=None, help="CSV supplying marginals")
    p_sample.add_argument("--no-header", action="store_true")
    p_sample.add_argument("-m", type=int, required=True, help="number of rows")
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--out", required=True)
    p_sample.add_argument("--uniform-scale", action="store_true",
                          help="emit copula-scale rows, skip marginals")
    p_sample.add_argument("--manifest", default=None)
    p_sample.set_defaults(func=cmd_sample)

    p_q = sub.add_parser("quantile", help="estimate an extreme quantile")
    add_common_data(p_q)
    p_q.add_argument("--h", required=True, choices=sorted(qmod.BUILTIN_TARGETS))
    p_q.add_argument("--alpha", type=float, required=True)
    p_q.add_argument("--m", type=int, default=40_000)
    p_q.add_argument("--policy", default="gauss2", choices=_POLICY_CHOICES)
    p_q.add_argument("--seed", type=int, default=0)
    p_q.add_argument("--max-level", type=int, default=5)
    p_q.add_argument("--retransform", action="store_true",
                     help="roundtrip uniform-scale targets through the marginals")
    p_q.add_argument("--out", default=None, help="also write the JSON here")
    p_q.add_argument("--manifest", default=None)
    p_q.set_defaults(func=cmd_quantile)

    p_gof = sub.add_parser("gof", help="goodness-of-fit with bootstrap p-values")
    add_common_data(p_gof)
    p_gof.add_argument("--policy", default="gauss2", choices=_POLICY_CHOICES)
    p_gof.add_argument("--b", type=int, default=99, help="bootstrap replicates")
    p_gof.add_argument("--n-mc", type=int, default=4000,
                       help="Monte Carlo size for the model CDF")
    p_gof.add_argument("--seed", type=int, default=0)
    p_gof.add_argument("--out", default=None)
    p_gof.add_argument("--manifest", default=None)
    p_gof.set_defaults(func=cmd_gof)

    p_simulate = sub.add_parser("simulate", help="run a simulation config")
    p_simulate.add_argument("--config", required=True,
                            help="TOML config path or bundled name "
                                 "(table1.toml, alpha-hat.toml)")
    p_simulate.add_argument("--out-dir", default="simout")
    p_simulate.add_argument("--threads", type=int, default=_default_threads())
    p_simulate.add_argument("--truth-cache", default=None)
    p_simulate.add_argument("--manifest", default=None)
    p_simulate.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DegenerateDataError as exc:
        print(f"error: degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (NumericError, VinequantError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
