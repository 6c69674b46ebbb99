"""Comparison methods: low-rank tensor linear regression and a GP over
flattened tensors.

TLR models the response as an intercept plus the inner product with a
low-rank weight tensor, fitted by alternating ridge regression over modes;
fixing all factor blocks but one makes the problem linear. TGP flattens each
tensor row-major and delegates to the closed-form GP regressor.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ShapeError
from .gp import GpRegressor
from .kernels import KernelSpec, bandwidth_grid
from .tensor import CpForm, Tensor, unfold


@dataclass
class TlrModel:
    """Low-rank linear model: intercept + <B, X> with B a sum of rank-one
    terms. ``factors[k]`` has shape (I_k, rank); scales are absorbed into the
    factor columns."""

    factors: list[np.ndarray]
    intercept: float
    converged: bool = True
    objective_trace: np.ndarray | None = field(default=None, repr=False)

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    def weight_tensor(self) -> Tensor:
        """Densified weight tensor B."""
        letters = "abcdefghij"[: len(self.factors)]
        spec = ",".join(f"{c}m" for c in letters) + "->" + letters
        return Tensor(np.einsum(spec, *self.factors))


def _contract_design(x, factors, mode):
    """Design block for one mode: X contracted with every other mode's
    factor columns. Returns (n, rank, I_mode)."""
    n = x.shape[0]
    order = x.ndim - 1
    rank = factors[0].shape[1]
    out = np.empty((n, rank, x.shape[mode + 1]))
    for m in range(rank):
        t = x
        for j in sorted((j for j in range(order) if j != mode), reverse=True):
            t = np.tensordot(t, factors[j][:, m], axes=([j + 1], [0]))
        out[:, m, :] = t
    return out


def _solve_block(design, y, ridge, intercept):
    """Ridge least squares; the intercept column, when present, is not
    penalized. Returns (intercept, coefficients)."""
    n, p = design.shape
    if intercept:
        a = np.hstack([np.ones((n, 1)), design])
        penalty = np.r_[0.0, np.full(p, ridge)]
    else:
        a = design
        penalty = np.full(p, ridge)
    beta = np.linalg.solve(a.T @ a + np.diag(penalty), a.T @ y)
    if intercept:
        return float(beta[0]), beta[1:]
    return 0.0, beta


def tlr_fit(dataset: Dataset, rank: int = 2, ridge: float = 1e-6,
            max_sweeps: int = 200, tol: float = 1e-8, intercept: bool = True,
            seed: int = 0) -> TlrModel:
    """Alternating ridge regression for the low-rank linear model.

    Each sweep solves one ridge problem per mode (jointly with the
    intercept), so the penalized squared-error objective is nonincreasing
    across sweeps. Factors are initialized from the leading singular vectors
    of the response-weighted input mean. A singular normal system with
    ridge=0 escalates the ridge to 1e-8 with a warning.
    """
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    x = np.stack([t.data for t in dataset.tensors])
    y = dataset.y
    n, dims = x.shape[0], x.shape[1:]
    order = len(dims)
    rng = np.random.default_rng(seed)

    y_mean = float(np.mean(y)) if intercept else 0.0
    guide = np.tensordot(y - y_mean, x, axes=([0], [0])) / n
    factors = []
    for k in range(order):
        u, s, _ = np.linalg.svd(unfold(guide, k), full_matrices=False)
        keep = min(int(np.sum(s > (s[0] * 1e-12 if s.size and s[0] > 0 else 1.0))), rank)
        cols = [u[:, :keep]] if keep else []
        if keep < rank:
            extra = rng.standard_normal((dims[k], rank - keep))
            extra /= np.linalg.norm(extra, axis=0)
            cols.append(extra)
        factors.append(np.hstack(cols))

    b0 = y_mean
    trace = []
    prev = None
    converged = False
    for _ in range(max_sweeps):
        for k in range(order):
            design = _contract_design(x, factors, k).reshape(n, -1)
            try:
                b0, coefs = _solve_block(design, y, ridge, intercept)
            except np.linalg.LinAlgError:
                if ridge == 0.0:
                    warnings.warn(
                        "singular normal equations; escalating ridge to 1e-8",
                        stacklevel=2,
                    )
                    ridge = 1e-8
                    b0, coefs = _solve_block(design, y, ridge, intercept)
                else:
                    raise
            factors[k] = coefs.reshape(rank, dims[k]).T
        residual = y - b0 - _dense_inner(x, factors)
        penalty = ridge * sum(float(np.sum(f * f)) for f in factors)
        obj = float(residual @ residual) + penalty
        trace.append(obj)
        if prev is not None and abs(prev - obj) <= tol * max(prev, 1e-300):
            converged = True
            break
        prev = obj
    return TlrModel(factors=factors, intercept=b0, converged=converged,
                    objective_trace=np.asarray(trace))


def _dense_inner(x, factors):
    """<B, X_i> for stacked tensors x of shape (n, *dims)."""
    letters = "abcdefghij"[: x.ndim - 1]
    spec = "n" + letters + "," + ",".join(f"{c}m" for c in letters) + "->n"
    return np.einsum(spec, x, *factors)


def tlr_predict(model: TlrModel, tensors) -> np.ndarray:
    """Intercept plus the dense inner product with the weight tensor."""
    if not tensors:
        return np.empty(0)
    for t in tensors:
        if t.dims != model.dims:
            raise ShapeError(f"tensor dims {t.dims} != model dims {model.dims}")
    x = np.stack([t.data for t in tensors])
    return model.intercept + _dense_inner(x, model.factors)


def tlr_inner_factored(model: TlrModel, form: CpForm) -> float:
    """<B, X> evaluated through a CP form of X: the tensor-space inner
    product collapses to products of per-mode vector inner products. Equals
    the dense route exactly when the CP form reconstructs X."""
    if form.dims != model.dims:
        raise ShapeError(f"CP dims {form.dims} != model dims {model.dims}")
    prods = np.ones((model.rank, form.rank))
    for bf, xf in zip(model.factors, form.factors):
        prods *= bf.T @ xf
    return float(prods.sum(axis=0) @ form.lambdas)


@dataclass
class TgpModel:
    """GP regression over row-major flattened tensors."""

    gp: GpRegressor
    dims: tuple

    def predict(self, tensors) -> np.ndarray:
        for t in tensors:
            if t.dims != self.dims:
                raise ShapeError(f"tensor dims {t.dims} != model dims {self.dims}")
        mean, _ = self.gp.predict(flatten_tensors(tensors))
        return mean


def flatten_tensors(tensors) -> np.ndarray:
    """(n, prod dims) matrix of row-major flattened tensors."""
    return np.stack([t.ravel() for t in tensors])


def tgp_fit(dataset: Dataset, spec: KernelSpec, noise_var: float,
            bandwidths=None, holdout_frac: float = 1.0 / 3.0) -> TgpModel:
    """Fit the flattened-tensor GP, grid-searching the bandwidth on a
    held-out tail of the training data (ties go to the smaller bandwidth),
    then refitting on everything."""
    x = flatten_tensors(dataset.tensors)
    n = x.shape[0]
    if bandwidths is None:
        bandwidths = bandwidth_grid(x) if n >= 2 else [spec.bandwidth]
    candidates = sorted(float(h) for h in bandwidths)
    best = candidates[0] if candidates else spec.bandwidth
    n_val = int(round(n * holdout_frac))
    if len(candidates) > 1 and 1 <= n_val < n:
        fit_x, val_x = x[: n - n_val], x[n - n_val :]
        fit_y, val_y = dataset.y[: n - n_val], dataset.y[n - n_val :]
        best_err = np.inf
        for h in candidates:
            gp = GpRegressor(fit_x, fit_y, KernelSpec(spec.family, h, spec.nu),
                             noise_var)
            pred, _ = gp.predict(val_x)
            err = float(np.mean((pred - val_y) ** 2))
            if err < best_err:
                best_err, best = err, h
    final = KernelSpec(spec.family, best, spec.nu)
    return TgpModel(gp=GpRegressor(x, dataset.y, final, noise_var),
                    dims=dataset.dims)


def tgp_fit_predict(dataset: Dataset, spec: KernelSpec, noise_var: float,
                    query_tensors, bandwidths=None) -> np.ndarray:
    """Fit the flattened-tensor GP and predict at the query tensors."""
    return tgp_fit(dataset, spec, noise_var, bandwidths).predict(query_tensors)
