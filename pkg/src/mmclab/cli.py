"""Command-line front end: generation, sampling, clustering, metrics, sweeps.

Subcommands: generate, sample, cluster, refine, evaluate, gaps, bounds,
sweep, report. Exit codes: 0 success, 2 invalid configuration, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import simgen
from .embedding import batch_counts, build_matrices, embed_counts_batch, DataMatrix
from .errors import InputError, InvalidSpec, MMCLabError, NumericalError
from .likelihood import oracle_classify, refine, save_stage2, stage2_from_json
from .metrics import (
    divergence_D,
    divergence_D_pi,
    delta_W_sq,
    gap_report,
    lower_bound_check,
    misclassification,
    predicted_error_rate,
)
from .spectral import SpectralConfig, load_stage1, save_stage1, spectral_cluster

SWEEP_COLUMNS = ["T", "H", "delta", "lambda", "seed", "K_hat", "e_t_stage1",
                 "e_t_stage2", "e_t_oracle", "D", "D_pi", "delta_W_sq",
                 "gamma_ps", "sigma_thres", "R_hat", "wall_time_s"]


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _models_from_spec(spec: dict) -> tuple:
    kind = spec.get("type")
    if kind == "separation":
        if "S_prime" not in spec:
            raise InvalidSpec("separation spec needs field 'S_prime'")
        return simgen.gen_separation_models(int(spec["S_prime"]))
    if kind == "random":
        missing = [k for k in ("S", "K", "floor", "seed") if k not in spec]
        if missing:
            raise InvalidSpec(f"random spec missing fields: {missing}")
        base = int(spec["seed"])
        return tuple(simgen.gen_random_ergodic(int(spec["S"]), base + 7919 * k,
                                               float(spec["floor"]))
                     for k in range(int(spec["K"])))
    if kind == "inline":
        if "models" not in spec:
            raise InvalidSpec("inline spec needs field 'models'")
        from .chains import model_from_json
        return tuple(model_from_json(doc) for doc in spec["models"])
    raise InvalidSpec(f"unknown instance spec type: {kind!r}")


def _build_instance(spec: dict, T: int, H: int, alpha=None, shuffle=False,
                    shuffle_seed: int = 0) -> simgen.MixtureInstance:
    models = _models_from_spec(spec)
    if alpha is None:
        alpha = spec.get("alpha") or [1.0 / len(models)] * len(models)
    return simgen.make_instance(models, np.asarray(alpha, dtype=np.float64), T, H,
                                shuffle=shuffle, shuffle_seed=shuffle_seed)


def _resolve_gamma(args, instance) -> float:
    if getattr(args, "gamma", None) is not None:
        return float(args.gamma)
    if instance is not None:
        return float(min(m.gamma_ps for m in instance.models))
    raise InvalidSpec("supply --gamma or --instance for oracle gamma")


# --- subcommand implementations -------------------------------------------

def cmd_generate(args) -> int:
    spec = json.loads(Path(args.spec).read_text()) if Path(args.spec).exists() \
        else json.loads(args.spec)
    if not isinstance(spec, dict):
        raise InvalidSpec("generator spec must be a JSON object")
    T = int(spec.get("T", args.T or 0))
    H = int(spec.get("H", args.H or 0))
    if T < 2 or H < 2:
        raise InvalidSpec("spec needs T >= 2 and H >= 2 (fields or --T/--H)")
    instance = _build_instance(spec, T, H, shuffle=spec.get("shuffle", False),
                               shuffle_seed=int(spec.get("shuffle_seed", 0)))
    out = Path(args.out) / (args.name + ".instance.json")
    simgen.save_instance(instance, out)
    print(f"wrote {out} (K={instance.K}, S={instance.S}, T={T}, H={H})")
    return 0


def cmd_sample(args) -> int:
    instance = simgen.load_instance(args.instance)
    trajs = simgen.sample_trajectories(instance, args.seed)
    out = Path(args.out) / (args.name + ".traj.bin")
    simgen.save_trajectories(trajs, out, instance.S)
    print(f"wrote {out} (T={trajs.T}, H={trajs.H}, seed={args.seed})")
    return 0


def _empirical_matrix(trajs, S: int) -> DataMatrix:
    visits, transitions = batch_counts(trajs.states, S)
    return DataMatrix(values=embed_counts_batch(visits, transitions, trajs.H),
                      kind="empirical", S=S, H=trajs.H)


def cmd_cluster(args) -> int:
    trajs, S = simgen.load_trajectories(args.trajectories)
    instance = simgen.load_instance(args.instance) if args.instance else None
    gamma = _resolve_gamma(args, instance)
    cfg = SpectralConfig(delta=args.delta, gamma_ps=gamma, c_sigma=args.c_sigma,
                         c_rho=args.c_rho)
    res = spectral_cluster(_empirical_matrix(trajs, S), cfg)
    out = Path(args.out) / (args.name + ".stage1.json")
    save_stage1(res, out)
    print(f"wrote {out} (K_hat={res.K_hat}, R_hat={res.R_hat}, "
          f"sigma_thres={res.sigma_thres:.6g})")
    return 0


def cmd_refine(args) -> int:
    trajs, S = simgen.load_trajectories(args.trajectories)
    stage1 = load_stage1(args.stage1)
    res = refine(trajs, stage1.labels, stage1.K_hat, args.smoothing, S=S)
    out = Path(args.out) / (args.name + ".stage2.json")
    save_stage2(res, out, dump_loglik=args.dump_loglik)
    print(f"wrote {out} (changed={res.changed})")
    return 0


def cmd_evaluate(args) -> int:
    instance = simgen.load_instance(args.instance)
    results = {}
    for path in args.labels:
        doc = json.loads(Path(path).read_text())
        labels = np.asarray(doc["labels"], dtype=np.int64) - 1
        results[path] = misclassification(labels, instance.decoding)
    for path, e in results.items():
        print(f"E_T({path}) = {e} / {instance.T}")
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(results, indent=2))
    return 0


def cmd_gaps(args) -> int:
    instance = simgen.load_instance(args.instance)
    rep = gap_report(instance)
    doc = rep.to_json()
    out = Path(args.out) / (args.name + ".gaps.json")
    out.write_text(json.dumps(doc, indent=2))
    width = max(len(k) for k in doc)
    for key in ("D", "D_pi", "delta_W_sq", "alpha", "Delta_sq", "eta_mu", "eta_pi",
                "eta_p", "p_max", "alpha_min_clusters", "pi_min", "v_min",
                "gamma_ps_min"):
        print(f"{key:<{width}}  {doc[key]:.10g}")
    print(f"wrote {out}")
    return 0


def cmd_bounds(args) -> int:
    rate = None
    if args.gamma is not None and args.d_pi is not None and args.c_eta is not None:
        rate = predicted_error_rate(args.T, args.H, args.gamma, args.d_pi, args.c_eta)
    rep = lower_bound_check(args.eps, args.delta, args.T, args.H, args.D,
                            args.alpha_min, predicted=rate)
    doc = rep.to_json()
    print(json.dumps(doc, indent=2))
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(doc, indent=2))
    return 0


def _sweep_point(payload: tuple) -> tuple:
    """Run one (T, H, delta, lambda, seed) point; returns (key, row list)."""
    cfg, T, H, delta, lam, seed = payload
    start = time.perf_counter()
    instance = _build_instance(cfg["instance"], T, H, alpha=cfg.get("alpha"),
                               shuffle=cfg.get("shuffle", False),
                               shuffle_seed=int(cfg.get("shuffle_seed", 0)))
    gamma = float(cfg["gamma"]) if cfg.get("gamma") is not None \
        else float(min(m.gamma_ps for m in instance.models))
    trajs = simgen.sample_trajectories(instance, seed)
    _, W_hat = build_matrices(instance, trajs)
    spec_cfg = SpectralConfig(delta=delta, gamma_ps=gamma,
                              c_sigma=float(cfg.get("c_sigma", 8.0)),
                              c_rho=float(cfg.get("c_rho", 32.0)))
    stage1 = spectral_cluster(W_hat, spec_cfg)
    stage2 = refine(trajs, stage1.labels, stage1.K_hat, lam, S=instance.S)
    oracle = oracle_classify(trajs, instance.models,
                             use_initial=bool(cfg.get("use_initial", False)))
    D, _ = divergence_D(instance)
    d_pi, _ = divergence_D_pi(instance.models)
    row = [T, H, delta, lam, seed, stage1.K_hat,
           misclassification(stage1.labels, instance.decoding),
           misclassification(stage2.labels, instance.decoding),
           misclassification(oracle, instance.decoding),
           float(D), float(d_pi), float(delta_W_sq(instance.models)),
           gamma, float(stage1.sigma_thres), stage1.R_hat,
           time.perf_counter() - start]
    return (T, H, delta, lam, seed), row


def run_sweep(cfg: dict, jobs: int = 1) -> str:
    """Execute the cartesian sweep; returns the CSV text (deterministic order)."""
    for axis in ("T", "H", "delta", "lambda", "seeds"):
        if axis not in cfg or not cfg[axis]:
            raise InvalidSpec(f"sweep config needs a nonempty axis {axis!r}")
    if len(set(cfg["seeds"])) != len(cfg["seeds"]):
        raise InvalidSpec("sweep seeds must be distinct")
    if "instance" not in cfg:
        raise InvalidSpec("sweep config needs an 'instance' generator spec")
    points = [(cfg, int(T), int(H), float(d), float(lam), int(seed))
              for T in cfg["T"] for H in cfg["H"] for d in cfg["delta"]
              for lam in cfg["lambda"] for seed in cfg["seeds"]]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, points))
    else:
        results = [_sweep_point(p) for p in points]
    results.sort(key=lambda kr: kr[0])
    buf = io.StringIO()
    buf.write(",".join(SWEEP_COLUMNS) + "\n")
    for _, row in results:
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    return buf.getvalue()


def cmd_sweep(args) -> int:
    cfg = json.loads(Path(args.config).read_text())
    if args.gamma is not None:
        cfg["gamma"] = args.gamma
    if args.oracle_gamma:
        cfg["gamma"] = None
    text = run_sweep(cfg, jobs=args.jobs)
    out = Path(args.out) / (args.name + ".sweep.csv")
    out.write_text(text)
    print(f"wrote {out} ({text.count(chr(10)) - 1} rows)")
    return 0


def cmd_report(args) -> int:
    rows = []
    for path in args.csv:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows.extend(reader)
    if not rows:
        raise InvalidSpec("no rows found in the given CSV files")
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = (int(row["T"]), int(row["H"]), float(row["delta"]), float(row["lambda"]))
        groups.setdefault(key, []).append(row)

    out_cols = ["T", "H", "delta", "lambda", "n_seeds",
                "mean_err_stage1", "mean_err_stage2", "mean_err_oracle",
                "median_err_stage2", "ci95_err_stage2", "predicted_envelope"]
    lines = [",".join(out_cols)]
    for key in sorted(groups):
        grp = groups[key]
        T = key[0]
        frac1 = [int(r["e_t_stage1"]) / T for r in grp]
        frac2 = [int(r["e_t_stage2"]) / T for r in grp]
        frac_o = [int(r["e_t_oracle"]) / T for r in grp]
        n = len(grp)
        ci = 1.96 * (statistics.pstdev(frac2) / math.sqrt(n)) if n > 1 else 0.0
        envelope = predicted_error_rate(T, key[1], float(grp[0]["gamma_ps"]),
                                 float(grp[0]["D_pi"]), args.c_eta)
        lines.append(",".join(_fmt(x) for x in [
            key[0], key[1], key[2], key[3], n,
            statistics.fmean(frac1), statistics.fmean(frac2), statistics.fmean(frac_o),
            statistics.median(frac2), ci, envelope]))
    text = "\n".join(lines) + "\n"
    out = Path(args.out) / (args.name + ".report.csv")
    out.write_text(text)
    print(text, end="")
    print(f"wrote {out}")
    return 0


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmclab",
                                     description="Markov-chain mixture clustering lab")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, name_default):
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--name", default=name_default, help="output file stem")

    p = sub.add_parser("generate", help="write a mixture instance from a generator spec")
    p.add_argument("spec", help="path to a JSON spec, or an inline JSON string")
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--H", type=int, default=None)
    common(p, "instance")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sample", help="sample trajectories from an instance")
    p.add_argument("instance")
    p.add_argument("--seed", type=int, required=True)
    common(p, "sample")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("cluster", help="run the spectral stage on trajectories")
    p.add_argument("trajectories")
    p.add_argument("--instance", default=None, help="instance file for oracle gamma")
    p.add_argument("--gamma", type=float, default=None, help="override gamma_ps")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--c-sigma", dest="c_sigma", type=float, default=8.0)
    p.add_argument("--c-rho", dest="c_rho", type=float, default=32.0)
    common(p, "cluster")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("refine", help="one-shot likelihood refinement")
    p.add_argument("trajectories")
    p.add_argument("stage1", help="stage-1 result JSON")
    p.add_argument("--lambda", dest="smoothing", type=float, default=0.5)
    p.add_argument("--dump-loglik", action="store_true")
    common(p, "refine")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("evaluate", help="misclassification against the ground truth")
    p.add_argument("--instance", required=True)
    p.add_argument("labels", nargs="+", help="stage-1/stage-2 result JSON files")
    p.add_argument("--json-out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gaps", help="divergences, gaps, and regularity parameters")
    p.add_argument("instance")
    common(p, "gaps")
    p.set_defaults(func=cmd_gaps)

    p = sub.add_parser("bounds", help="evaluate the clustering-error lower bound")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--H", type=int, required=True)
    p.add_argument("--D", type=float, required=True)
    p.add_argument("--alpha-min", dest="alpha_min", type=float, required=True)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--d-pi", dest="d_pi", type=float, default=None)
    p.add_argument("--c-eta", dest="c_eta", type=float, default=None)
    p.add_argument("--json-out", default=None)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("sweep", help="multi-seed sweep writing one CSV row per run")
    p.add_argument("config", help="sweep config JSON")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--oracle-gamma", action="store_true")
    common(p, "run")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="aggregate sweep CSVs per config point")
    p.add_argument("csv", nargs="+")
    p.add_argument("--c-eta", dest="c_eta", type=float, default=1.0)
    common(p, "summary")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, json.JSONDecodeError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except MMCLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
