"""Experiment orchestration: trial loops, grid search, MSE tables,
convergence-slope analysis, and CSV/SVG emission.

Every trial cell derives its own seed from the master seed and its grid
coordinates, so results are reproducible regardless of execution order or
thread count. The CSV output deliberately omits wall-clock timing (kept
in-memory on the rows) so identical configurations produce byte-identical
files.
"""

from __future__ import annotations

import ast
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import chain

import numpy as np
from scipy.spatial.distance import pdist

from . import baselines, estimator
from .data import Dataset, load_atrd
from .datagen import DgpSpec, generate
from .errors import ConfigurationError
from .kernels import KernelSpec
from .tensor import cp_als

METHODS = ("amnr", "tlr", "tgp")
_CSV_MAGIC = "# amnr-results v1"
_CSV_COLUMNS = (
    "method", "n", "r", "m", "bandwidth",
    "train_mse_mean", "train_mse_var", "test_mse_mean", "test_mse_var",
    "trials_ok", "trials_failed",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a data source, methods, an n grid, and trial/grid
    protocol. ``sigma2`` may be "auto" to use the source's noise variance."""

    dgp: DgpSpec | None = None
    dataset: str | Dataset | None = None
    methods: tuple = ("amnr", "tlr", "tgp")
    n_grid: tuple = (100, 200, 300)
    split: float = 0.5
    trials: int = 20
    r_grid: tuple = (2,)
    m_grid: tuple = (1,)
    q: int = 2000
    sigma2: float | str = "auto"
    kernel_family: str = "matern"
    nu: float = 1.5
    bandwidths: tuple | None = None
    amnr_bandwidth_mults: tuple = (1.0, 4.0, 16.0, 64.0, 256.0)
    sign_flip: bool = False
    tlr_ridge: float = 1e-6
    seed: int = 0
    out: str | None = None
    threads: int | None = None

    def __post_init__(self):
        if (self.dgp is None) == (self.dataset is None):
            raise ConfigurationError("exactly one of dgp/dataset must be set")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigurationError(f"methods must be a nonempty subset of {METHODS}")
        if not 0.0 < self.split < 1.0:
            raise ConfigurationError("split must lie strictly between 0 and 1")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError("n_grid must be strictly increasing")
        object.__setattr__(self, "n_grid", grid)
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "r_grid", tuple(int(r) for r in self.r_grid))
        object.__setattr__(self, "m_grid", tuple(int(m) for m in self.m_grid))
        if min(self.r_grid) < 1 or min(self.m_grid) < 1 or self.q < 1:
            raise ConfigurationError("r_grid, m_grid and q must be positive")


@dataclass
class TrialRecord:
    method: str
    n: int
    r: int
    m: int
    trial: int
    bandwidth: float
    train_mse: float
    test_mse: float
    ok: bool
    error: str
    wall_time_s: float


@dataclass
class ResultRow:
    method: str
    n: int
    r: int
    m: int
    bandwidth: float
    train_mse_mean: float
    train_mse_var: float
    test_mse_mean: float
    test_mse_var: float
    trials_ok: int
    trials_failed: int
    wall_time_s: float = 0.0  # in-memory only; not persisted


@dataclass
class ResultTable:
    rows: list
    meta: dict = field(default_factory=dict)
    trials: list = field(default_factory=list, repr=False)

    @property
    def n_failed(self) -> int:
        return sum(r.trials_failed for r in self.rows)


def _derived_seed(*parts) -> int:
    state = np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


_METHOD_IDS = {"amnr": 1, "tlr": 2, "tgp": 3}


def _resolve_sigma2(cfg: ExperimentConfig, base: Dataset | None) -> float:
    if cfg.sigma2 != "auto":
        return float(cfg.sigma2)
    if cfg.dgp is not None:
        return float(cfg.dgp.noise_var)
    if base is not None and base.noise_var is not None:
        return float(base.noise_var)
    raise ConfigurationError("sigma2='auto' but the dataset carries no noise_var")


def _trial_dataset(cfg: ExperimentConfig, base, n_index: int, n: int,
                   trial: int) -> Dataset:
    """The shared per-(n, trial) dataset, identical for every method."""
    data_seed = _derived_seed(cfg.seed, 11, n_index, trial)
    if cfg.dgp is not None:
        return generate(replace(cfg.dgp, seed=data_seed), n)
    rng = np.random.default_rng(data_seed)
    idx = rng.permutation(len(base))[:n]
    return base.subset(idx)


def _amnr_bandwidths(cpforms, mults=(1.0, 4.0, 16.0, 64.0, 256.0)) -> np.ndarray:
    """Geometric candidates anchored at the median pairwise distance of the
    pooled factor vectors (all modes together). The default ladder extends
    far above the median: the finite-sample weighting concentrates on few
    prior draws, and smooth, large-bandwidth draws are the ones a small
    sample pool can actually match to data."""
    dists = []
    for k in range(cpforms[0].order):
        pts = np.concatenate([f.factors[k].T for f in cpforms], axis=0)
        if pts.shape[0] > 1:
            dists.append(pdist(pts))
    med = float(np.median(np.concatenate(dists))) if dists else 0.0
    if med == 0.0:
        return np.array([0.1, 0.5, 1.0])
    return med * np.asarray(mults, dtype=float)


def _run_amnr(cfg, sigma2, train, test, forms_train, forms_test, r, m, fit_seed):
    candidates = cfg.bandwidths or _amnr_bandwidths(forms_train,
                                                    cfg.amnr_bandwidth_mults)
    candidates = sorted(float(h) for h in candidates)
    n_train = len(train)
    n_val = n_train // 3
    best = candidates[0]
    if len(candidates) > 1 and n_val >= 1 and n_train - n_val >= 2:
        n_fit = n_train - n_val
        sub = train.subset(range(n_fit))
        val = train.subset(range(n_fit, n_train))
        sub_forms = forms_train[:n_fit]
        val_forms = forms_train[n_fit:]
        best_err = np.inf
        for h in candidates:
            config = estimator.AmnrConfig(
                m=m, r=r, q=cfg.q, noise_var=sigma2,
                kernel=KernelSpec(cfg.kernel_family, h, cfg.nu),
                seed=fit_seed, sign_flip=cfg.sign_flip,
            )
            model = estimator.fit(sub, config, cpforms=sub_forms)
            pred = estimator.predict(model, val.tensors, cpforms=val_forms)
            err = float(np.mean((pred - val.y) ** 2))
            if err < best_err:
                best_err, best = err, h
    config = estimator.AmnrConfig(
        m=m, r=r, q=cfg.q, noise_var=sigma2,
        kernel=KernelSpec(cfg.kernel_family, best, cfg.nu),
        seed=fit_seed, sign_flip=cfg.sign_flip,
    )
    model = estimator.fit(train, config, cpforms=forms_train)
    test_pred = estimator.predict(model, test.tensors, cpforms=forms_test)
    train_pred = estimator.posterior_mean_insample(model)
    return (
        float(np.mean((train_pred - train.y) ** 2)),
        float(np.mean((test_pred - test.y) ** 2)),
        best,
    )


def _run_tlr(cfg, train, test, r, fit_seed):
    model = baselines.tlr_fit(train, rank=r, ridge=cfg.tlr_ridge, seed=fit_seed)
    train_pred = baselines.tlr_predict(model, train.tensors)
    test_pred = baselines.tlr_predict(model, test.tensors)
    return (
        float(np.mean((train_pred - train.y) ** 2)),
        float(np.mean((test_pred - test.y) ** 2)),
        0.0,
    )


def _run_tgp(cfg, sigma2, train, test):
    spec = KernelSpec(cfg.kernel_family, 1.0, cfg.nu)
    model = baselines.tgp_fit(train, spec, sigma2, bandwidths=cfg.bandwidths)
    train_pred = model.predict(train.tensors)
    test_pred = model.predict(test.tensors)
    return (
        float(np.mean((train_pred - train.y) ** 2)),
        float(np.mean((test_pred - test.y) ** 2)),
        model.gp.spec.bandwidth,
    )


def _trial_records(cfg: ExperimentConfig, sigma2, base, n_index, n, trial):
    ds = _trial_dataset(cfg, base, n_index, n, trial)
    n_train = min(max(int(round(n * cfg.split)), 1), n - 1)
    train, test = ds.split(n_train)
    records = []
    for r in cfg.r_grid:
        forms_train = forms_test = None
        if "amnr" in cfg.methods:
            forms_train = estimator.decompose_inputs(train.tensors, r)
            forms_test = estimator.decompose_inputs(test.tensors, r)
        for m in cfg.m_grid:
            for method in cfg.methods:
                fit_seed = _derived_seed(
                    cfg.seed, 22, n_index, trial, r, m, _METHOD_IDS[method]
                )
                t0 = time.perf_counter()
                try:
                    if method == "amnr":
                        train_mse, test_mse, bw = _run_amnr(
                            cfg, sigma2, train, test, forms_train, forms_test,
                            r, m, fit_seed,
                        )
                    elif method == "tlr":
                        train_mse, test_mse, bw = _run_tlr(cfg, train, test, r, fit_seed)
                    else:
                        train_mse, test_mse, bw = _run_tgp(cfg, sigma2, train, test)
                    ok, err = True, ""
                except Exception as exc:  # cell failure: record and move on
                    train_mse = test_mse = bw = float("nan")
                    ok, err = False, repr(exc)
                records.append(TrialRecord(
                    method=method, n=n, r=r, m=m, trial=trial, bandwidth=bw,
                    train_mse=train_mse, test_mse=test_mse, ok=ok, error=err,
                    wall_time_s=time.perf_counter() - t0,
                ))
    return records


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    """Run the full (method, n, hyperparameter, trial) sweep.

    Per trial: draw or subsample a dataset (shared by all methods so
    per-trial comparisons are paired), split train/test, grid-search the
    bandwidth on a nested holdout, fit, and score train/test MSE. Failed
    cells are recorded and skipped in the aggregates. Fully reproducible
    from the master seed, independent of the thread count.
    """
    base = None
    if cfg.dataset is not None:
        base = cfg.dataset if isinstance(cfg.dataset, Dataset) else load_atrd(cfg.dataset)
        if max(cfg.n_grid) > len(base):
            raise ConfigurationError(
                f"n_grid max {max(cfg.n_grid)} exceeds dataset size {len(base)}"
            )
    sigma2 = _resolve_sigma2(cfg, base)
    tasks = [
        (n_index, n, trial)
        for n_index, n in enumerate(cfg.n_grid)
        for trial in range(cfg.trials)
    ]
    threads = cfg.threads or int(os.environ.get("AMNR_THREADS", "1"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", estimator.WeightDegeneracyWarning)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                chunks = list(pool.map(
                    lambda t: _trial_records(cfg, sigma2, base, *t), tasks
                ))
        else:
            chunks = [_trial_records(cfg, sigma2, base, *t) for t in tasks]
    records = sorted(
        chain.from_iterable(chunks),
        key=lambda rec: (rec.method, rec.n, rec.r, rec.m, rec.trial),
    )

    rows = []
    groups = {}
    for rec in records:
        groups.setdefault((rec.method, rec.n, rec.r, rec.m), []).append(rec)
    for (method, n, r, m), grp in sorted(groups.items()):
        ok = [g for g in grp if g.ok]
        train = np.array([g.train_mse for g in ok])
        test = np.array([g.test_mse for g in ok])
        rows.append(ResultRow(
            method=method, n=n, r=r, m=m,
            bandwidth=float(np.mean([g.bandwidth for g in ok])) if ok else float("nan"),
            train_mse_mean=float(np.mean(train)) if ok else float("nan"),
            train_mse_var=float(np.var(train, ddof=1)) if len(ok) > 1 else 0.0,
            test_mse_mean=float(np.mean(test)) if ok else float("nan"),
            test_mse_var=float(np.var(test, ddof=1)) if len(ok) > 1 else 0.0,
            trials_ok=len(ok),
            trials_failed=len(grp) - len(ok),
            wall_time_s=float(sum(g.wall_time_s for g in grp)),
        ))
    dims = tuple(cfg.dgp.dims) if cfg.dgp is not None else base.dims
    meta = {
        "dims": dims,
        "kernel": cfg.kernel_family,
        "methods": tuple(cfg.methods),
        "nu": cfg.nu,
        "q": cfg.q,
        "seed": cfg.seed,
        "sigma2": sigma2,
        "split": cfg.split,
        "trials": cfg.trials,
    }
    return ResultTable(rows=rows, meta=meta, trials=records)


def theoretical_dimension(method: str, dims) -> int:
    """Input dimensionality governing each method's convergence rate:
    largest mode for amnr, full element count for tgp, 0 (parametric) for
    tlr."""
    if method == "amnr":
        return int(max(dims))
    if method == "tgp":
        return int(np.prod(dims))
    return 0


@dataclass
class SlopeResult:
    method: str
    ns: np.ndarray
    excess: np.ndarray
    fitted_slope: float
    intercept: float
    theoretical_slope: float
    aligned_theory: np.ndarray
    excluded_ns: tuple


def slope_analysis(table: ResultTable, sigma2: float, method: str,
                   beta: float = 1.0) -> SlopeResult:
    """Least-squares slope of log excess risk (test MSE minus noise
    variance) against log n, with the theoretical slope -2*beta/(2*beta + d)
    and a theoretical curve aligned at the smallest n. Points with
    nonpositive excess are excluded with a warning."""
    per_n = {}
    for row in table.rows:
        if row.method != method or not np.isfinite(row.test_mse_mean):
            continue
        if row.n not in per_n or row.test_mse_mean < per_n[row.n]:
            per_n[row.n] = row.test_mse_mean
    if len(per_n) < 3:
        raise ValueError(f"need >= 3 distinct n values for {method}, got {len(per_n)}")
    ns, excess, excluded = [], [], []
    for n in sorted(per_n):
        e = per_n[n] - sigma2
        if e <= 0:
            warnings.warn(f"nonpositive excess risk at n={n}; point excluded",
                          stacklevel=2)
            excluded.append(n)
        else:
            ns.append(n)
            excess.append(e)
    if len(ns) < 2:
        raise ValueError(f"fewer than 2 usable excess-risk points for {method}")
    ns = np.array(ns, dtype=float)
    excess = np.array(excess)
    slope, intercept = np.polyfit(np.log(ns), np.log(excess), 1)
    dims = table.meta.get("dims")
    if dims is None:
        raise ValueError("result table carries no dims metadata")
    d = theoretical_dimension(method, dims)
    theory_slope = -2.0 * beta / (2.0 * beta + d)
    aligned = excess[0] * (ns / ns[0]) ** theory_slope
    return SlopeResult(
        method=method, ns=ns, excess=excess,
        fitted_slope=float(slope), intercept=float(intercept),
        theoretical_slope=float(theory_slope), aligned_theory=aligned,
        excluded_ns=tuple(excluded),
    )


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit(table: ResultTable, fmt: str, path) -> list:
    """Write a result table as CSV (fixed column order, byte-stable) or as
    SVG charts (an MSE-vs-n chart plus, when feasible, a log-log
    convergence chart with theoretical reference lines). Returns the written
    paths."""
    if not table.rows:
        raise ValueError("refusing to emit an empty result table")
    if fmt == "csv":
        _write_csv(table, path)
        return [str(path)]
    if fmt == "svg":
        return _write_svg(table, path)
    raise ValueError(f"unknown format {fmt!r}")


def _write_csv(table: ResultTable, path) -> None:
    lines = [_CSV_MAGIC]
    for key in sorted(table.meta):
        lines.append(f"# {key} = {table.meta[key]!r}")
    lines.append(",".join(_CSV_COLUMNS))
    for row in table.rows:
        lines.append(",".join(
            _format_cell(getattr(row, col)) for col in _CSV_COLUMNS
        ))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_table(path) -> ResultTable:
    """Parse a CSV written by :func:`emit`. Wall-clock timing is not stored
    in the file, so reloaded rows carry wall_time_s=0."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines or lines[0] != _CSV_MAGIC:
        raise ValueError(f"{path}: not a results CSV")
    meta = {}
    body = []
    for line in lines[1:]:
        if line.startswith("# "):
            key, _, value = line[2:].partition(" = ")
            meta[key.strip()] = ast.literal_eval(value)
        elif line:
            body.append(line)
    if not body or body[0] != ",".join(_CSV_COLUMNS):
        raise ValueError(f"{path}: unexpected column header")
    rows = []
    for line in body[1:]:
        cells = line.split(",")
        rows.append(ResultRow(
            method=cells[0], n=int(cells[1]), r=int(cells[2]), m=int(cells[3]),
            bandwidth=float(cells[4]),
            train_mse_mean=float(cells[5]), train_mse_var=float(cells[6]),
            test_mse_mean=float(cells[7]), test_mse_var=float(cells[8]),
            trials_ok=int(cells[9]), trials_failed=int(cells[10]),
        ))
    return ResultTable(rows=rows, meta=meta)


def _best_curves(table: ResultTable):
    """Per method: (ns, best test MSE per n over the hyperparameter grid)."""
    curves = {}
    for row in table.rows:
        if not np.isfinite(row.test_mse_mean):
            continue
        best = curves.setdefault(row.method, {})
        if row.n not in best or row.test_mse_mean < best[row.n]:
            best[row.n] = row.test_mse_mean
    return {
        method: (np.array(sorted(vals)), np.array([vals[n] for n in sorted(vals)]))
        for method, vals in curves.items()
    }


def _write_svg(table: ResultTable, prefix) -> list:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    curves = _best_curves(table)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for method, (ns, mse) in sorted(curves.items()):
        ax.plot(ns, mse, marker="o", label=method)
    ax.set_xlabel("n")
    ax.set_ylabel("test MSE")
    ax.legend()
    fig.tight_layout()
    mse_path = f"{prefix}_mse.svg"
    fig.savefig(mse_path, metadata={"Date": None})
    plt.close(fig)
    written.append(mse_path)

    sigma2 = table.meta.get("sigma2")
    if sigma2 is not None:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        plotted = False
        for method in sorted(curves):
            try:
                res = slope_analysis(table, float(sigma2), method)
            except ValueError:
                continue
            ax.loglog(res.ns, res.excess, marker="o",
                      label=f"{method} (slope {res.fitted_slope:.2f})")
            ax.loglog(res.ns, res.aligned_theory, linestyle="--",
                      label=f"{method} theory ({res.theoretical_slope:.3f})")
            plotted = True
        if plotted:
            ax.set_xlabel("n")
            ax.set_ylabel("excess test MSE")
            ax.legend(fontsize=7)
            fig.tight_layout()
            rate_path = f"{prefix}_rates.svg"
            fig.savefig(rate_path, metadata={"Date": None})
            written.append(rate_path)
        plt.close(fig)
    return written
