"""Command-line front end.

Subcommands: ``basis-info``, ``sample``, ``estimate``, ``distance``,
``optimize``, ``benchmark`` and ``rerun``. Experiment subcommands write a
``manifest.json`` holding the resolved configuration, timings and the
SHA-256 of every output; ``rerun`` replays a manifest and checks that the
outputs are byte-identical.

Exit codes: 0 success, 2 usage or validation error, 3 runtime failure.
"""
import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .baselines import run_gp_optimization
from .basis import build_fourier_basis
from .design import default_candidates, run_optimization
from .files import (
    DataFormatError,
    inventory,
    read_field,
    read_observations,
    write_curve,
    write_field,
    write_json,
    write_observations,
)
from .functionals import MEDIAN, ish_distance
from .mcmc import PCNConfig, posterior_mean_field, run_chains, write_ensemble
from .reference_fields import KINDS, MEDIANS, ReferenceField, random_design, sample_dataset
from .slgp import SLGPModel

logger = logging.getLogger("slgpopt")

EXIT_USAGE = 2
EXIT_RUNTIME = 3

STRATEGIES = {
    "slgp-adaptive": ("slgp", "adaptive_eqi"),
    "slgp-random": ("slgp", "random"),
    "gp-adaptive": ("gp", "adaptive_ei"),
    "gp-random": ("gp", "random"),
}
EXPERIMENTS = ("sample", "estimate", "optimize", "benchmark")
# namespace entries that are not part of a run's configuration
_NOT_CONFIG = {"func", "config", "verbose"}


class UsageError(ValueError):
    pass


# -- argument parsing ----------------------------------------------------------


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _unit_open(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return value


def _beta(text):
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"beta must be in (0, 1], got {text}")
    return value


def _model_args(p, q_default):
    p.add_argument("--q", type=_positive_int, default=q_default, help="Fourier order of the basis")
    p.add_argument("--grid", type=_positive_int, default=101, help="t-grid size G")
    p.add_argument("--nx", type=_positive_int, default=101, help="x-grid (candidate) size")


def _chain_args(p, draws_default):
    p.add_argument("--draws", type=_positive_int, default=draws_default, help="retained pCN draws N")
    p.add_argument("--burn-in", type=_nonneg_int, default=1000)
    p.add_argument("--thinning", type=_positive_int, default=10)
    p.add_argument("--beta", type=_beta, default=0.1, help="initial pCN step size")
    p.add_argument("--no-adapt", action="store_true", help="keep beta fixed during burn-in")
    p.add_argument("--init", choices=("zero", "map"), default="map", help="chain starting point")


def _experiment_args(p):
    p.add_argument("--config", help="key = value file; command-line flags take precedence")
    p.add_argument("--seed", type=_seed, default=None, help="master seed (required)")
    p.add_argument("--out", default=None, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="slgpopt", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"slgpopt {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("basis-info", help="print the Fourier basis table")
    p.add_argument("--q", type=_positive_int, default=5)
    p.set_defaults(func=cmd_basis_info)

    p = sub.add_parser("sample", help="draw observations from a reference field")
    _experiment_args(p)
    p.add_argument("--kind", choices=KINDS, default="truncated_gaussian")
    p.add_argument("--median", choices=sorted(MEDIANS), default="f1")
    p.add_argument("--n", type=int, default=None, help="random design: number of locations")
    p.add_argument("--locations", default=None, help="comma-separated fixed locations")
    p.add_argument("--batch", type=int, default=1, help="observations per location")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("estimate", help="fit the SLGP to x,t data by pCN")
    _experiment_args(p)
    p.add_argument("--input", default=None, help="CSV with header x,t")
    _model_args(p, q_default=5)
    _chain_args(p, draws_default=150)
    p.add_argument("--chains", type=_positive_int, default=1)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("distance", help="integrated squared Hellinger distance of two field CSVs")
    p.add_argument("field_a")
    p.add_argument("field_b")
    p.set_defaults(func=cmd_distance)

    for name, func in (("optimize", cmd_optimize), ("benchmark", cmd_benchmark)):
        p = sub.add_parser(name, help=f"{'one optimisation run' if name == 'optimize' else 'strategy comparison'}")
        _experiment_args(p)
        _model_args(p, q_default=3)
        _chain_args(p, draws_default=150 if name == "optimize" else 100)
        p.add_argument("--K", type=_positive_int, default=20, help="batch size")
        p.add_argument("--M", type=_positive_int, default=150 if name == "optimize" else 50,
                       help="simulations per EQI")
        p.add_argument("--alpha", type=_unit_open, default=0.9, help="quantile level of the random median")
        p.add_argument("--steps", type=_nonneg_int, default=10)
        p.add_argument("--n-init", type=_positive_int, default=20)
        if name == "optimize":
            p.add_argument("--kind", choices=KINDS, default="truncated_gaussian")
            p.add_argument("--median", choices=sorted(MEDIANS), default="f1")
            p.add_argument("--strategy", choices=sorted(STRATEGIES), default="slgp-adaptive")
        else:
            p.add_argument("--strategies", default="slgp-adaptive,slgp-random,gp-adaptive,gp-random")
            p.add_argument("--fields", default="truncated_gaussian:f1,multimodal:f1",
                           help="comma-separated kind:median list")
            p.add_argument("--repetitions", type=_positive_int, default=12)
            p.add_argument("--workers", type=_positive_int, default=1)
        p.set_defaults(func=func)

    p = sub.add_parser("rerun", help="replay a manifest and verify identical outputs")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="directory for the replayed outputs")
    p.set_defaults(func=cmd_rerun)
    return parser, sub


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(subparser, config):
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in config.items():
        action = actions.get(key)
        if action is None or key in _NOT_CONFIG:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} expects a boolean")
            defaults[key] = value.lower() in ("true", "1", "yes")
        else:
            defaults[key] = value  # string defaults go through the action's type
    subparser.set_defaults(**defaults)


def parse_args(argv=None):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        _apply_config(sub.choices[args.command], read_config_file(args.config))
        args = parser.parse_args(argv)
    return args


# -- helpers --------------------------------------------------------------------


def _require_experiment(args):
    if args.seed is None:
        raise UsageError(f"{args.command}: --seed is required")


def _config_of(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_CONFIG}


def _out_dir(args):
    if args.out is None:
        raise UsageError(f"{args.command}: --out is required")
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _write_manifest(args, out_dir, outputs, timings, extra=None):
    manifest = {
        "tool": "slgpopt",
        "version": __version__,
        "command": args.command,
        "config": _config_of(args),
        "timings_seconds": {k: round(v, 6) for k, v in timings.items()},
        "outputs": inventory(outputs, out_dir),
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    write_json(manifest, path)
    return manifest


def _pcn_config(args, seed):
    return PCNConfig.for_draws(args.draws, burn_in=args.burn_in, thinning=args.thinning, beta=args.beta,
                               seed=seed, adapt=not args.no_adapt, init=args.init)


def _model(args):
    return SLGPModel.create(q=args.q, n_grid=args.grid)


# -- subcommands ------------------------------------------------------------------


def cmd_basis_info(args, stdout=sys.stdout):
    basis = build_fourier_basis(args.q)
    stdout.write(f"# q={basis.order} p={basis.rank}\n")
    writer = csv.writer(stdout, lineterminator="\n")
    writer.writerow(["kind", "omega1", "omega2", "lambda"])
    for kind, w1, w2, lam in basis.table():
        writer.writerow([kind, w1, w2, repr(lam)])
    return 0


def cmd_sample(args, stdout=sys.stdout):
    _require_experiment(args)
    if args.batch < 1:
        raise UsageError("sample: --batch must be at least 1")
    field = ReferenceField(kind=args.kind, median=args.median)
    rng = np.random.default_rng(args.seed)
    if args.locations:
        locations = np.array([float(v) for v in args.locations.split(",")])
        if np.any((locations < 0) | (locations > 1)):
            raise UsageError("sample: locations must lie in [0, 1]")
    elif args.n is not None:
        if args.n < 1:
            raise UsageError("sample: --n must be at least 1")
        locations = random_design(args.n, rng)
    else:
        raise UsageError("sample: give --n or --locations")
    t0 = time.perf_counter()
    data = sample_dataset(field, locations, rng, batch=args.batch)
    if args.out is None:
        write_observations(data, stdout)
        return 0
    out_dir = _out_dir(args)
    path = os.path.join(out_dir, "samples.csv")
    with open(path, "w", newline="") as fh:
        write_observations(data, fh)
    _write_manifest(args, out_dir, [path], {"sample": time.perf_counter() - t0})
    return 0


def cmd_estimate(args, stdout=sys.stdout):
    _require_experiment(args)
    if args.input is None:
        raise UsageError("estimate: --input is required")
    args.input = os.path.abspath(args.input)
    out_dir = _out_dir(args)
    timings = {}
    t0 = time.perf_counter()
    data = read_observations(args.input)
    model = _model(args)
    config = _pcn_config(args, args.seed)
    timings["read"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    ensemble = run_chains(model, data, config, n_chains=args.chains, workers=args.workers)
    timings["pcn"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    x_grid = np.linspace(0.0, 1.0, args.nx)
    field = posterior_mean_field(ensemble, x_grid)
    median = MEDIAN.on_grid(field.values, field.t_grid)
    paths = [os.path.join(out_dir, name) for name in
             ("field.csv", "median.csv", "ensemble.csv", "ensemble.json")]
    write_field(field, paths[0])
    write_curve(x_grid, median, paths[1], name="median")
    write_ensemble(ensemble, paths[2], paths[3], config=config, extra={"n_chains": args.chains})
    timings["write"] = time.perf_counter() - t0
    _write_manifest(args, out_dir, paths, timings, extra={
        "acceptance_rate": ensemble.acceptance_rate,
        "n_observations": len(data),
        "rank": model.rank,
    })
    stdout.write(json.dumps({"n": len(data), "rank": model.rank, "draws": len(ensemble),
                             "acceptance_rate": ensemble.acceptance_rate}) + "\n")
    return 0


def cmd_distance(args, stdout=sys.stdout):
    a = read_field(args.field_a)
    b = read_field(args.field_b)
    stdout.write(f"{ish_distance(a, b)!r}\n")
    return 0


def _run_strategy(strategy, field, design, args, rng, callback=None):
    family, inner = STRATEGIES[strategy]
    candidates = default_candidates(args.nx)
    if family == "gp":
        return run_gp_optimization(field, design, args.steps, K=args.K, strategy=inner, rng=rng,
                                   candidates=candidates, callback=callback)
    return run_optimization(field, design, args.steps, K=args.K, M=args.M,
                            pcn_config=_pcn_config(args, 0), model=_model(args), rho=MEDIAN,
                            alpha=args.alpha, strategy=inner, rng=rng, candidates=candidates,
                            callback=callback)


def cmd_optimize(args, stdout=sys.stdout):
    _require_experiment(args)
    out_dir = _out_dir(args)
    field = ReferenceField(kind=args.kind, median=args.median)
    rng = np.random.default_rng(args.seed)
    design = sample_dataset(field, random_design(args.n_init, rng), rng)
    outputs = []
    records = []
    jsonl_path = os.path.join(out_dir, "steps.jsonl")
    jsonl = open(jsonl_path, "w", encoding="utf-8")

    def on_step(rec):
        eqi_path = None
        if rec.eqi is not None:
            eqi_path = os.path.join(out_dir, f"eqi_step_{rec.step:03d}.csv")
            write_curve(rec.eqi.candidates, rec.eqi.values, eqi_path, name="eqi")
            outputs.append(eqi_path)
        line = {"step": rec.step, "chosen_x": None if np.isnan(rec.chosen_x) else rec.chosen_x,
                "eqi_table": None if eqi_path is None else os.path.basename(eqi_path),
                "x_hat": rec.x_hat, "gap": rec.gap, "n_obs": rec.n_obs}
        text = json.dumps(line, sort_keys=True)
        jsonl.write(text + "\n")
        stdout.write(text + "\n")
        records.append(rec)

    t0 = time.perf_counter()
    try:
        state = _run_strategy(args.strategy, field, design, args, rng, callback=on_step)
    finally:
        jsonl.close()
    elapsed = time.perf_counter() - t0
    history_path = os.path.join(out_dir, "history.csv")
    with open(history_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "chosen_x", "x_hat", "gap", "n_obs"])
        for rec in records:
            writer.writerow([rec.step, "" if np.isnan(rec.chosen_x) else repr(rec.chosen_x),
                             repr(rec.x_hat), repr(rec.gap), rec.n_obs])
    data_path = os.path.join(out_dir, "data.csv")
    with open(data_path, "w", newline="") as fh:
        write_observations(state.dataset, fh)
    outputs += [jsonl_path, history_path, data_path]
    rates = [r.acceptance_rate for r in records if not np.isnan(r.acceptance_rate)]
    _write_manifest(args, out_dir, outputs, {"optimize": elapsed},
                    extra={"acceptance_rates": rates})
    return 0


def _benchmark_job(job):
    strategy, field_spec, field_index, rep, args_dict = job
    args = argparse.Namespace(**args_dict)
    field = ReferenceField.parse(field_spec)
    design_seq, run_seq = np.random.SeedSequence([args.seed, field_index, rep]).spawn(2)
    design_rng = np.random.default_rng(design_seq)
    design = sample_dataset(field, random_design(args.n_init, design_rng), design_rng)
    state = _run_strategy(strategy, field, design, args, np.random.default_rng(run_seq))
    return [(rec.step, rec.chosen_x, rec.gap) for rec in state.trajectory()]


def cmd_benchmark(args, stdout=sys.stdout):
    _require_experiment(args)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown or not strategies:
        raise UsageError(f"benchmark: unknown strategy {unknown}; choose from {sorted(STRATEGIES)}")
    fields = [f.strip() for f in args.fields.split(",") if f.strip()]
    for spec in fields:
        ReferenceField.parse(spec)
    out_dir = _out_dir(args)
    args_dict = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    jobs = [(s, f, fi, rep, args_dict)
            for s in strategies for fi, f in enumerate(fields) for rep in range(args.repetitions)]
    runs_path = os.path.join(out_dir, "runs.csv")
    gaps = {}
    t0 = time.perf_counter()
    pool = ProcessPoolExecutor(max_workers=args.workers) if args.workers > 1 else None
    results = pool.map(_benchmark_job, jobs) if pool else map(_benchmark_job, jobs)
    try:
        with open(runs_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["strategy", "field", "repetition", "step", "chosen_x", "gap"])
            for (strategy, field, _, rep, _), rows in zip(jobs, results):
                for step, chosen_x, gap in rows:
                    writer.writerow([strategy, field, rep, step,
                                     "" if np.isnan(chosen_x) else repr(chosen_x), repr(gap)])
                    gaps.setdefault((strategy, field, step), []).append(gap)
                fh.flush()
                logger.info("benchmark: %s %s rep %d done", strategy, field, rep)
    finally:
        if pool:
            pool.shutdown()
    elapsed = time.perf_counter() - t0
    traj_path = os.path.join(out_dir, "trajectories.csv")
    with open(traj_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["strategy", "field", "step", "median_gap"])
        for (strategy, field, step), values in gaps.items():
            writer.writerow([strategy, field, step, repr(float(np.median(values)))])
    _write_manifest(args, out_dir, [runs_path, traj_path], {"benchmark": elapsed})
    final = {f"{s}|{f}": float(np.median(gaps[(s, f, args.steps)])) for s in strategies for f in fields}
    stdout.write(json.dumps({"final_median_gap": final}, sort_keys=True) + "\n")
    return 0


def cmd_rerun(args, stdout=sys.stdout):
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    command = manifest.get("command")
    if command not in EXPERIMENTS:
        raise UsageError(f"manifest command {command!r} cannot be replayed")
    config = dict(manifest["config"])
    config["out"] = args.out
    replay = argparse.Namespace(**config)
    handler = {"sample": cmd_sample, "estimate": cmd_estimate,
               "optimize": cmd_optimize, "benchmark": cmd_benchmark}[command]
    with open(os.devnull, "w") as sink:
        handler(replay, stdout=sink)
    with open(os.path.join(args.out, "manifest.json"), encoding="utf-8") as fh:
        replayed = json.load(fh)
    ok = True
    for name, digest in sorted(manifest["outputs"].items()):
        same = replayed["outputs"].get(name) == digest
        ok &= same
        stdout.write(f"{'identical' if same else 'DIFFERENT'} {name}\n")
    return 0 if ok else EXIT_RUNTIME


def main(argv=None):
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"slgpopt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args, stdout=sys.stdout)
    except (UsageError, DataFormatError, ValueError) as exc:
        print(f"slgpopt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        logger.debug("runtime failure", exc_info=True)
        print(f"slgpopt: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
