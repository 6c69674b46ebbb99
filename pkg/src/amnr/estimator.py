"""Additive-multiplicative nonparametric tensor regression.

The regression surface on a rank-R CP form is a sum over model components
and CP components of the component scale times a product over modes of
scalar local functions evaluated at the factor vectors. Each local function
carries an independent GP prior over the pooled training factor vectors; the
posterior mean is approximated by importance-weighting Q joint prior draws
by their Gaussian data fit. Prediction conditions each draw's local
functions on its stored training values and propagates the conditional
means, which leaves the estimator's expectation unchanged while removing
one layer of Monte-Carlo noise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .data import Dataset
from .errors import ConfigurationError, ShapeError
from .kernels import JitterPolicy, KernelSpec, gram, kernel_matrix
from .tensor import CpForm, Tensor, cp_als, random_sign_flip

_PREDICT_STREAM = 7_919  # sub-seed tag for conditional prediction draws


class WeightDegeneracyWarning(UserWarning):
    """Likelihood weights collapsed onto very few prior draws."""


@dataclass(frozen=True)
class AmnrConfig:
    """Hyperparameters of the estimator.

    m: number of additive model components kept after truncation.
    r: CP rank at which input tensors are decomposed.
    q: number of joint prior draws.
    noise_var: observation noise variance (assumed known).
    kernel: GP prior kernel on the factor vectors.
    sign_flip: randomize factor signs of the decomposed training inputs
        (even flips per component, reconstruction preserving).
    likelihood: "gaussian" uses exp(-S/(2*noise_var)); "exp-sigma" uses the
        alternative exponent exp(-S/sqrt(noise_var)).
    center: fit the residuals from the training mean and add the mean back
        at prediction. The prior over surfaces is zero-mean, so with the
        finite-sample weighting a noncentered response would have to be
        matched by an atypically offset draw; centering removes that burden
        without changing what the exact posterior would do.
    """

    m: int = 1
    r: int = 2
    q: int = 2000
    noise_var: float = 1.0
    kernel: KernelSpec = field(default_factory=KernelSpec)
    seed: int = 0
    sign_flip: bool = False
    likelihood: str = "gaussian"
    center: bool = True

    def __post_init__(self):
        if min(self.m, self.r, self.q) < 1:
            raise ConfigurationError("m, r and q must all be >= 1")
        if not self.noise_var > 0:
            raise ConfigurationError("noise_var must be positive")
        if self.likelihood not in ("gaussian", "exp-sigma"):
            raise ConfigurationError(f"unknown likelihood {self.likelihood!r}")


@dataclass
class AmnrModel:
    """Fitted state: decomposed inputs, prior draws, and their weights.

    ``values[k]`` has shape (m, q, n, r): local-function values of draw q at
    the mode-k factor vector of training input i, CP component r.
    ``alphas[k]`` holds Gram-solved draws (m, q, r*n) used to condition the
    prior at new points; the pooled point index is i*r + r'.
    """

    config: AmnrConfig
    dims: tuple
    train_y: np.ndarray
    lambdas: np.ndarray                 # (n, r) scales of the decomposed inputs
    points: list[np.ndarray]            # per mode: (r*n, I_k) factor vectors
    chols: list[np.ndarray]             # per mode: lower Cholesky of the Gram
    jitters: list[float]
    values: list[np.ndarray]            # per mode: (m, q, n, r)
    alphas: list[np.ndarray]            # per mode: (m, q, r*n)
    g_train: np.ndarray                 # (q, n) surface of each draw at the inputs
    sq_err: np.ndarray                  # (q,) sum of squared training residuals
    weights: np.ndarray                 # (q,) normalized likelihood weights
    ess: float
    y_offset: float = 0.0
    cpforms: list[CpForm] | None = field(default=None, repr=False)

    @property
    def n_train(self) -> int:
        return self.train_y.size

    @property
    def order(self) -> int:
        return len(self.points)


def amnr_eval(local_values, lambdas) -> float:
    """Sum-product surface for one input: sum over (component m, CP rank r)
    of ``lambdas[r] * prod_k local_values[m, r, k]``."""
    vals = np.asarray(local_values, dtype=np.float64)
    lam = np.asarray(lambdas, dtype=np.float64).reshape(-1)
    if vals.ndim != 3 or vals.shape[1] != lam.size:
        raise ShapeError(
            f"local values must have shape (m, {lam.size}, k), got {vals.shape}"
        )
    return float(np.dot(np.prod(vals, axis=2).sum(axis=0), lam))


def likelihood_weights(sq_err, config: AmnrConfig):
    """Normalized weights from summed squared residuals.

    The minimum is subtracted before exponentiation, so the result is
    invariant to shifting all residual sums by a constant and the largest
    unnormalized weight is exactly 1 (no global underflow is possible).
    """
    sq = np.asarray(sq_err, dtype=np.float64)
    if config.likelihood == "gaussian":
        scale = 2.0 * config.noise_var
    else:
        scale = np.sqrt(config.noise_var)
    w = np.exp(-(sq - sq.min()) / scale)
    return w / w.sum()


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=np.float64)
    return float(1.0 / np.sum(w * w))


def decompose_inputs(tensors, rank: int) -> list[CpForm]:
    """Rank-``rank`` CP decomposition of each input tensor."""
    return [cp_als(t, rank) for t in tensors]


def _pooled_points(cpforms, mode: int) -> np.ndarray:
    """Stack mode-``mode`` factor vectors of all inputs: row i*r + r'."""
    return np.concatenate([f.factors[mode].T for f in cpforms], axis=0)


def _surface(values, lambdas) -> np.ndarray:
    """(q, n) surfaces from per-mode values [(m, q, n, r)] and scales (n, r)."""
    prod = values[0].copy()
    for v in values[1:]:
        prod *= v
    return np.einsum("mqnr,nr->qn", prod, lambdas)


def fit(dataset: Dataset, config: AmnrConfig, cpforms=None,
        jitter_policy: JitterPolicy = JitterPolicy()) -> AmnrModel:
    """Fit the estimator.

    Decomposes each input at rank ``config.r`` (reusing ``cpforms`` when the
    caller already decomposed them), pools the factor vectors per mode,
    draws ``config.q`` joint prior samples of every local function, and
    weights the draws by their Gaussian likelihood on the training set. Emits
    WeightDegeneracyWarning when the effective sample size drops below q/100.
    """
    n = len(dataset)
    if n < 2:
        raise ValueError("need at least two training examples")
    dims = dataset.dims
    if cpforms is None:
        cpforms = decompose_inputs(dataset.tensors, config.r)
    else:
        cpforms = list(cpforms)
        if len(cpforms) != n:
            raise ShapeError(f"{len(cpforms)} CP forms for {n} tensors")
        for f in cpforms:
            if f.rank != config.r or f.dims != dims:
                raise ShapeError("CP forms do not match the configured rank/dims")

    ss = np.random.SeedSequence(config.seed)
    children = ss.spawn(1 + len(dims) * config.m)
    if config.sign_flip:
        flip_rng = np.random.default_rng(children[0])
        cpforms = [random_sign_flip(f, flip_rng) for f in cpforms]

    lambdas = np.stack([f.lambdas for f in cpforms])  # (n, r)
    points, chols, jitters, values, alphas = [], [], [], [], []
    for k in range(len(dims)):
        pts = _pooled_points(cpforms, k)
        g = gram(config.kernel, pts, jitter_policy)
        vals_k = np.empty((config.m, config.q, n, config.r))
        alpha_k = np.empty((config.m, config.q, pts.shape[0]))
        for m in range(config.m):
            rng = np.random.default_rng(children[1 + k * config.m + m])
            draws = rng.standard_normal((config.q, pts.shape[0])) @ g.cholesky.T
            vals_k[m] = draws.reshape(config.q, n, config.r)
            alpha_k[m] = cho_solve((g.cholesky, True), draws.T).T
        points.append(pts)
        chols.append(g.cholesky)
        jitters.append(g.jitter)
        values.append(vals_k)
        alphas.append(alpha_k)

    y_offset = float(np.mean(dataset.y)) if config.center else 0.0
    g_train = _surface(values, lambdas)
    sq_err = np.sum((dataset.y[None, :] - y_offset - g_train) ** 2, axis=1)
    weights = likelihood_weights(sq_err, config)
    ess = effective_sample_size(weights)
    if ess < config.q / 100:
        warnings.warn(
            f"effective sample size {ess:.1f} of {config.q} draws; the "
            "posterior mean rests on very few samples",
            WeightDegeneracyWarning,
            stacklevel=2,
        )
    return AmnrModel(
        config=config,
        dims=dims,
        train_y=dataset.y.copy(),
        lambdas=lambdas,
        points=points,
        chols=chols,
        jitters=jitters,
        values=values,
        alphas=alphas,
        g_train=g_train,
        sq_err=sq_err,
        weights=weights,
        ess=ess,
        y_offset=y_offset,
        cpforms=cpforms,
    )


def posterior_mean_insample(model: AmnrModel) -> np.ndarray:
    """Weighted mean of the draws' surfaces at the training inputs (plus the
    training-mean offset when the model was fit centered)."""
    return model.weights @ model.g_train + model.y_offset


def predict(model: AmnrModel, new_tensors, cpforms=None, return_se=False,
            conditional_draws=False):
    """Posterior-mean predictions at new tensors.

    Each new tensor is decomposed at the model's CP rank; every draw's local
    functions are extended to the new factor vectors by GP conditioning on
    that draw's stored training values (conditional means by default, one
    fresh conditional draw per sample when ``conditional_draws`` is set).
    With ``return_se`` also returns the Monte-Carlo standard error of each
    prediction estimated from the weighted sample variance.
    """
    cfg = model.config
    if cpforms is None:
        for t in new_tensors:
            if t.dims != model.dims:
                raise ShapeError(f"query dims {t.dims} != training dims {model.dims}")
        cpforms = decompose_inputs(new_tensors, cfg.r)
    else:
        cpforms = list(cpforms)
        for f in cpforms:
            if f.rank != cfg.r or f.dims != model.dims:
                raise ShapeError("query CP forms do not match the model")
    n_new = len(cpforms)
    if n_new == 0:
        preds = np.empty(0)
        return (preds, np.empty(0)) if return_se else preds
    lam_new = np.stack([f.lambdas for f in cpforms])  # (n_new, r)

    cond = []
    for k in range(model.order):
        qpts = _pooled_points(cpforms, k)  # (n_new*r, I_k)
        ks = kernel_matrix(cfg.kernel, model.points[k], qpts)
        vals = np.einsum("mqp,pj->mqj", model.alphas[k], ks)
        vals = vals.reshape(cfg.m, cfg.q, n_new, cfg.r)
        if conditional_draws:
            vals = vals + _conditional_noise(model, k, qpts, n_new)
        cond.append(vals)

    g_new = _surface(cond, lam_new)  # (q, n_new)
    preds = model.weights @ g_new + model.y_offset
    if not return_se:
        return preds
    # self-normalized importance-sampling variance of the weighted mean
    se = np.sqrt(model.weights**2 @ (g_new - preds[None, :]) ** 2)
    return preds, se


def _conditional_noise(model: AmnrModel, mode: int, qpts, n_new):
    """Zero-mean draws with the per-query conditional prior covariance."""
    cfg = model.config
    ks = kernel_matrix(cfg.kernel, model.points[mode], qpts)
    noise = np.empty((cfg.m, cfg.q, n_new, cfg.r))
    for j in range(n_new):
        cols = slice(j * cfg.r, (j + 1) * cfg.r)
        prior = kernel_matrix(cfg.kernel, qpts[cols], qpts[cols])
        v = solve_triangular(model.chols[mode], ks[:, cols], lower=True)
        cov = prior - v.T @ v
        cov[np.diag_indices_from(cov)] += model.jitters[mode]
        chol = np.linalg.cholesky(cov)
        rng = np.random.default_rng(
            np.random.SeedSequence((cfg.seed, _PREDICT_STREAM, mode, j))
        )
        z = rng.standard_normal((cfg.m, cfg.q, cfg.r))
        noise[:, :, j, :] = z @ chol.T
    return noise


def recommend_m(n: int, beta: float, max_dim: int, gamma: float) -> int:
    """Sample-size rule for the number of additive components.

    Grows like n**zeta with zeta = (beta / (2*beta + max_dim)) / (1 + gamma);
    slow decay of the component volumes (small gamma) tolerates more
    components, high input dimension fewer. Practically 1 or 2.
    """
    if min(n, beta, max_dim, gamma) <= 0:
        raise ValueError("all arguments must be positive")
    zeta = (beta / (2.0 * beta + max_dim)) / (1.0 + gamma)
    return max(1, int(round(n**zeta)))


def save_model(model: AmnrModel, path) -> None:
    """Serialize a fitted model to a single .npz file."""
    cfg = model.config
    payload = {
        "format": np.array("amnr-model-v1"),
        "m": np.array(cfg.m),
        "r": np.array(cfg.r),
        "q": np.array(cfg.q),
        "noise_var": np.array(cfg.noise_var),
        "seed": np.array(cfg.seed),
        "sign_flip": np.array(cfg.sign_flip),
        "likelihood": np.array(cfg.likelihood),
        "center": np.array(cfg.center),
        "kernel_family": np.array(cfg.kernel.family),
        "kernel_bandwidth": np.array(cfg.kernel.bandwidth),
        "kernel_nu": np.array(cfg.kernel.nu),
        "dims": np.array(model.dims),
        "train_y": model.train_y,
        "lambdas": model.lambdas,
        "g_train": model.g_train,
        "sq_err": model.sq_err,
        "weights": model.weights,
        "ess": np.array(model.ess),
        "y_offset": np.array(model.y_offset),
        "jitters": np.array(model.jitters),
    }
    for k in range(model.order):
        payload[f"points_{k}"] = model.points[k]
        payload[f"chol_{k}"] = model.chols[k]
        payload[f"values_{k}"] = model.values[k]
        payload[f"alpha_{k}"] = model.alphas[k]
    np.savez(path, **payload)


def load_model(path) -> AmnrModel:
    """Load a model serialized by :func:`save_model`."""
    with np.load(path, allow_pickle=False) as blob:
        if str(blob["format"]) != "amnr-model-v1":
            raise ValueError(f"{path}: not an amnr model file")
        kernel = KernelSpec(
            family=str(blob["kernel_family"]),
            bandwidth=float(blob["kernel_bandwidth"]),
            nu=float(blob["kernel_nu"]),
        )
        config = AmnrConfig(
            m=int(blob["m"]),
            r=int(blob["r"]),
            q=int(blob["q"]),
            noise_var=float(blob["noise_var"]),
            kernel=kernel,
            seed=int(blob["seed"]),
            sign_flip=bool(blob["sign_flip"]),
            likelihood=str(blob["likelihood"]),
            center=bool(blob["center"]),
        )
        dims = tuple(int(d) for d in blob["dims"])
        order = len(dims)
        return AmnrModel(
            config=config,
            dims=dims,
            train_y=blob["train_y"],
            lambdas=blob["lambdas"],
            points=[blob[f"points_{k}"] for k in range(order)],
            chols=[blob[f"chol_{k}"] for k in range(order)],
            jitters=[float(j) for j in blob["jitters"]],
            values=[blob[f"values_{k}"] for k in range(order)],
            alphas=[blob[f"alpha_{k}"] for k in range(order)],
            g_train=blob["g_train"],
            sq_err=blob["sq_err"],
            weights=blob["weights"],
            ess=float(blob["ess"]),
            y_offset=float(blob["y_offset"]),
        )
