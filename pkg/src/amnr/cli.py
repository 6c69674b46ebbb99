"""Command-line interface.

Subcommands: datagen, ingest, sir, fit, predict, experiment, slopes.
Datasets travel as ATRD v1 files, fitted models as .npz archives, results
as CSV (plus optional SVG charts). Exit code 0 on success, 1 on usage or
configuration errors, 2 when an experiment sweep had failed cells.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import estimator, harness
from .data import Dataset, load_atrd, save_atrd
from .datagen import DgpSpec, generate
from .epidemics import SirConfig, build_epidemic_dataset, ingest_email_log, read_email_tsv
from .epidemics import Graph
from .errors import ConfigurationError
from .kernels import KernelSpec, bandwidth_grid


def _parse_ints(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _parse_floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _cmd_datagen(args) -> int:
    spec = DgpSpec(kind=args.kind, dims=_parse_ints(args.dims), rank=args.rank,
                   noise_var=args.sigma2, basis_terms=args.basis_terms,
                   seed=args.seed)
    ds = generate(spec, args.n)
    save_atrd(ds, args.out)
    print(f"wrote {args.n} examples of dims {spec.dims} to {args.out}")
    return 0


def _cmd_ingest(args) -> int:
    log = read_email_tsv(args.log)
    graphs = ingest_email_log(log, top_n=args.top_n, chunk_size=args.chunk_size)
    if not graphs:
        print("no complete chunks; nothing written", file=sys.stderr)
        return 1
    # responses are filled in later by `sir`; store zeros as placeholders
    ds = Dataset(tensors=[g.to_tensor() for g in graphs],
                 y=np.zeros(len(graphs)))
    save_atrd(ds, args.out)
    print(f"wrote {len(graphs)} graphs on {graphs[0].n_nodes} nodes to {args.out}")
    return 0


def _cmd_sir(args) -> int:
    base = load_atrd(args.graphs)
    cfg = SirConfig(initial_infected=args.initial, infection_prob=args.prob,
                    epochs=args.epochs, trials_per_graph=args.trials,
                    seed=args.seed, transmission=args.transmission)
    graphs = [Graph(t.data.astype(np.uint8)) for t in base.tensors]
    ds = build_epidemic_dataset(graphs, cfg)
    save_atrd(ds, args.out)
    print(f"labeled {len(ds)} graphs (noise_var {ds.noise_var:.4g}) -> {args.out}")
    return 0


def _cmd_fit(args) -> int:
    ds = load_atrd(args.data)
    if args.bandwidth == "median":
        forms = estimator.decompose_inputs(ds.tensors, args.r)
        h = float(np.median(harness._amnr_bandwidths(forms)))
    else:
        h = float(args.bandwidth)
    config = estimator.AmnrConfig(
        m=args.m, r=args.r, q=args.q, noise_var=args.sigma2,
        kernel=KernelSpec(args.kernel, h, args.nu),
        seed=args.seed, sign_flip=args.sign_flip,
    )
    model = estimator.fit(ds, config)
    estimator.save_model(model, args.out)
    print(f"fit {len(ds)} examples; ESS {model.ess:.1f}/{config.q}; "
          f"model -> {args.out}")
    return 0


def _cmd_predict(args) -> int:
    model = estimator.load_model(args.model)
    ds = load_atrd(args.data)
    preds, se = estimator.predict(model, ds.tensors, return_se=True)
    lines = ["index,prediction,stderr"]
    for i, (p, s) in enumerate(zip(preds, se)):
        lines.append(f"{i},{p!r},{s!r}")
    with open(args.out, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {preds.size} predictions to {args.out}")
    return 0


def _config_from_file(path) -> harness.ExperimentConfig:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()

    kwargs = {}
    if "dgp" in values:
        kwargs["dgp"] = DgpSpec(
            kind=values["dgp"],
            dims=_parse_ints(values["dims"]),
            rank=int(values.get("dgp_rank", 4)),
            noise_var=float(values.get("dgp_noise", 1.0)),
            basis_terms=int(values.get("basis_terms", 1000)),
        )
    if "dataset" in values:
        kwargs["dataset"] = values["dataset"]
    simple = {
        "methods": lambda v: tuple(m.strip() for m in v.split(",")),
        "n_grid": _parse_ints,
        "split": float,
        "trials": int,
        "r_grid": _parse_ints,
        "m_grid": _parse_ints,
        "q": int,
        "kernel_family": str,
        "nu": float,
        "sign_flip": lambda v: v.lower() in ("1", "true", "yes"),
        "tlr_ridge": float,
        "seed": int,
        "out": str,
        "threads": int,
    }
    for key, conv in simple.items():
        if key in values:
            kwargs[key] = conv(values[key])
    if "sigma2" in values:
        v = values["sigma2"]
        kwargs["sigma2"] = v if v == "auto" else float(v)
    if "bandwidths" in values and values["bandwidths"] != "auto":
        kwargs["bandwidths"] = _parse_floats(values["bandwidths"])
    return harness.ExperimentConfig(**kwargs)


def _cmd_experiment(args) -> int:
    cfg = _config_from_file(args.config)
    if args.out:
        cfg = harness.ExperimentConfig(**{**cfg.__dict__, "out": args.out})
    table = harness.run_experiment(cfg)
    out = cfg.out or "results"
    written = harness.emit(table, "csv", f"{out}.csv")
    if args.svg:
        written += harness.emit(table, "svg", out)
    for row in table.rows:
        print(f"{row.method} n={row.n} r={row.r} m={row.m} "
              f"test MSE {row.test_mse_mean:.4f} (var {row.test_mse_var:.4f}) "
              f"[{row.trials_ok} ok, {row.trials_failed} failed, "
              f"{row.wall_time_s:.1f}s]")
    print("wrote " + ", ".join(written))
    return 2 if table.n_failed else 0


def _cmd_slopes(args) -> int:
    table = harness.load_table(args.table)
    sigma2 = args.sigma2 if args.sigma2 is not None else table.meta.get("sigma2")
    if sigma2 is None:
        print("no sigma2 given and none in the table", file=sys.stderr)
        return 1
    methods = [args.method] if args.method else sorted(
        {row.method for row in table.rows}
    )
    for method in methods:
        try:
            res = harness.slope_analysis(table, float(sigma2), method,
                                         beta=args.beta)
        except ValueError as exc:
            print(f"{method}: {exc}", file=sys.stderr)
            continue
        print(f"{method}: fitted slope {res.fitted_slope:.4f}, "
              f"theoretical {res.theoretical_slope:.4f} "
              f"(n = {', '.join(str(int(n)) for n in res.ns)})")
    if args.svg:
        harness.emit(table, "svg", args.svg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amnr",
        description="Nonparametric tensor regression toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate a synthetic dataset")
    p.add_argument("--kind", required=True,
                   choices=("low-rank", "full-rank", "sobolev"))
    p.add_argument("--dims", required=True, help="comma-separated, e.g. 20,20")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--basis-terms", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_datagen)

    p = sub.add_parser("ingest", help="email TSV -> chunked contact graphs")
    p.add_argument("--log", required=True)
    p.add_argument("--top-n", type=int, default=1000)
    p.add_argument("--chunk-size", type=int, default=2000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("sir", help="label graphs with simulated outbreak sizes")
    p.add_argument("--graphs", required=True)
    p.add_argument("--initial", type=int, default=10)
    p.add_argument("--prob", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--transmission", default="per-neighbor",
                   choices=("per-neighbor", "per-node"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sir)

    p = sub.add_parser("fit", help="fit the estimator and save the model")
    p.add_argument("--data", required=True)
    p.add_argument("--r", type=int, default=2)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--q", type=int, default=2000)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--kernel", default="matern", choices=("matern", "rbf"))
    p.add_argument("--nu", type=float, default=1.5)
    p.add_argument("--bandwidth", default="median",
                   help="float, or 'median' for the data-driven choice")
    p.add_argument("--sign-flip", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("experiment", help="run a configured sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output prefix override")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("slopes", help="convergence slopes from a results CSV")
    p.add_argument("--table", required=True)
    p.add_argument("--method", default=None)
    p.add_argument("--sigma2", type=float, default=None)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--svg", default=None, help="SVG prefix")
    p.set_defaults(func=_cmd_slopes)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
