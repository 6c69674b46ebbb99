"""Dense tensors and CP (CANDECOMP/PARAFAC) decomposition.

A tensor of order K is stored as a row-major float64 array. Its rank-R CP
form is a set of R nonnegative scales together with one unit vector per mode
and component; the tensor is the sum of the scaled outer products. The
decomposition is computed by alternating least squares over mode unfoldings.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import khatri_rao

from .errors import NormalizationError, ShapeError

UNIT_TOL = 1e-8


@dataclass
class Tensor:
    """Dense order-K real tensor.

    ``data`` is coerced to a C-contiguous float64 array; ``dims`` is its
    shape. Instances are treated as immutable and are safe to share across
    threads.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim < 1 or any(d < 1 for d in arr.shape):
            raise ShapeError(f"tensor dims must all be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor entries must be finite")
        self.data = arr

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def order(self) -> int:
        return self.data.ndim

    def norm(self) -> float:
        """Frobenius norm."""
        return float(np.linalg.norm(self.data))

    def ravel(self) -> np.ndarray:
        """Entries as a flat row-major vector."""
        return self.data.reshape(-1)

    def __eq__(self, other):
        return isinstance(other, Tensor) and self.dims == other.dims and np.array_equal(
            self.data, other.data
        )


@dataclass(eq=False)
class CpForm:
    """Rank-R CP form: scales plus per-mode unit factor vectors.

    Parameters
    ----------
    lambdas : (R,) array
        Component scales, nonnegative and nonincreasing.
    factors : list of K arrays
        ``factors[k]`` has shape ``(I_k, R)``; column r is the mode-k unit
        vector of component r. Columns are renormalized to exact unit length
        on construction (rejected if off by more than ``UNIT_TOL``).
    converged : bool
        Set False by :func:`cp_als` when the sweep limit was reached before
        the stopping rule fired.
    objective_trace : array or None
        Per-sweep Frobenius reconstruction errors recorded by :func:`cp_als`.
    """

    lambdas: np.ndarray
    factors: list[np.ndarray]
    converged: bool = True
    objective_trace: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=np.float64).reshape(-1)
        if lam.size < 1:
            raise ShapeError("CP form needs at least one component")
        if np.any(lam < 0):
            raise ValueError("CP scales must be nonnegative")
        if np.any(np.diff(lam) > 1e-12):
            raise ValueError("CP scales must be nonincreasing")
        facs = []
        for k, f in enumerate(self.factors):
            f = np.ascontiguousarray(f, dtype=np.float64)
            if f.ndim != 2 or f.shape[1] != lam.size:
                raise ShapeError(
                    f"factor {k} must have shape (I_{k}, {lam.size}), got {f.shape}"
                )
            norms = np.linalg.norm(f, axis=0)
            if np.any(np.abs(norms - 1.0) > UNIT_TOL):
                raise NormalizationError(
                    f"factor {k} columns must be unit vectors (norms {norms})"
                )
            facs.append(f / norms)
        self.lambdas = lam
        self.factors = facs

    @property
    def rank(self) -> int:
        return self.lambdas.size

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)


def rank_one(lam: float, vectors) -> Tensor:
    """Scaled outer product of one unit vector per mode.

    Entry (j_1, ..., j_K) of the result is ``lam * prod_k vectors[k][j_k]``.
    """
    if lam < 0:
        raise ValueError("scale must be nonnegative")
    vecs = []
    for k, v in enumerate(vectors):
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 1:
            raise ShapeError(f"mode-{k} vector must be 1-D, got shape {v.shape}")
        nrm = np.linalg.norm(v)
        if abs(nrm - 1.0) > UNIT_TOL:
            raise NormalizationError(f"mode-{k} vector has norm {nrm}, expected 1")
        vecs.append(v)
    return Tensor(lam * functools.reduce(np.multiply.outer, vecs))


def inner(a: Tensor, b: Tensor) -> float:
    """Sum of elementwise products over all entries."""
    if a.dims != b.dims:
        raise ShapeError(f"dims mismatch: {a.dims} vs {b.dims}")
    return float(np.dot(a.ravel(), b.ravel()))


def unfold(data: np.ndarray, mode: int) -> np.ndarray:
    """Mode-k unfolding: rows index mode k, columns the remaining modes in
    ascending axis order with the last one fastest (row-major)."""
    return np.moveaxis(data, mode, 0).reshape(data.shape[mode], -1)


def reconstruct(c: CpForm, dims=None) -> Tensor:
    """Sum of the scaled outer products of a CP form."""
    if dims is not None and tuple(dims) != c.dims:
        raise ShapeError(f"requested dims {tuple(dims)} do not match factors {c.dims}")
    head = c.factors[0] * c.lambdas
    if c.order == 1:
        return Tensor(head.sum(axis=1))
    z = functools.reduce(khatri_rao, c.factors[1:])
    return Tensor((head @ z.T).reshape(c.dims))


def _canonical_parts(lambdas, factors):
    """Canonicalize raw (scales, factors): unit columns, nonnegative scales,
    positive leading entries on modes 0..K-2 (residual sign absorbed by the
    last mode), components sorted by descending scale with lexicographic
    first-mode tie-breaking."""
    lam = np.asarray(lambdas, dtype=np.float64).reshape(-1).copy()
    facs = [np.array(f, dtype=np.float64) for f in factors]
    n_modes = len(facs)
    r = lam.size
    for k in range(n_modes):
        norms = np.linalg.norm(facs[k], axis=0)
        dead = norms == 0
        if np.any(dead):
            # a zero column kills the component; park a basis vector there
            facs[k][0, dead] = 1.0
            norms = np.where(dead, 1.0, norms)
        facs[k] /= norms
        lam *= norms
    neg = lam < 0
    facs[-1][:, neg] *= -1.0
    lam = np.abs(lam)
    for k in range(n_modes - 1):
        lead = np.argmax(np.abs(facs[k]), axis=0)
        signs = np.sign(facs[k][lead, np.arange(r)])
        signs[signs == 0] = 1.0
        facs[k] *= signs
        facs[-1] *= signs
    order = sorted(range(r), key=lambda j: (-lam[j], tuple(facs[0][:, j])))
    lam = lam[order]
    facs = [f[:, order] for f in facs]
    return lam, facs


def canonicalize(c: CpForm) -> CpForm:
    """Canonical representative of a CP form; idempotent and reconstruction
    preserving."""
    lam, facs = _canonical_parts(c.lambdas, c.factors)
    return CpForm(lam, facs, converged=c.converged, objective_trace=c.objective_trace)


def make_cp(lambdas, factors) -> CpForm:
    """Canonical CpForm from raw scales and factor columns (any signs,
    any order, any column norms)."""
    lam, facs = _canonical_parts(lambdas, factors)
    return CpForm(lam, facs)


def random_sign_flip(c: CpForm, rng: np.random.Generator) -> CpForm:
    """Negate a uniformly random even-sized subset of each component's
    factor vectors. The reconstructed tensor is unchanged exactly."""
    if c.order < 2:
        raise ShapeError("sign flipping needs at least two modes")
    signs = np.where(rng.random((c.order - 1, c.rank)) < 0.5, -1.0, 1.0)
    signs = np.vstack([signs, np.prod(signs, axis=0)])
    facs = [f * signs[k] for k, f in enumerate(c.factors)]
    return CpForm(c.lambdas.copy(), facs, converged=c.converged)


def _hosvd_init(x: Tensor, rank: int) -> list[np.ndarray]:
    """Leading left singular vectors of each mode unfolding, padded with
    seeded random unit vectors where the unfolding is rank-deficient."""
    rng = np.random.default_rng(0)
    factors = []
    for k in range(x.order):
        u, s, _ = np.linalg.svd(unfold(x.data, k), full_matrices=False)
        keep = int(np.sum(s > s[0] * 1e-12)) if s.size and s[0] > 0 else 0
        keep = min(keep, rank)
        cols = [u[:, :keep]]
        if keep < rank:
            extra = rng.standard_normal((x.dims[k], rank - keep))
            extra /= np.linalg.norm(extra, axis=0)
            cols.append(extra)
        factors.append(np.hstack(cols))
    return factors


def cp_als(x: Tensor, rank: int, max_iters: int = 500, tol: float = 1e-8) -> CpForm:
    """Rank-R CP decomposition by alternating least squares.

    Each sweep solves one exact least-squares problem per mode, so the
    Frobenius reconstruction error is nonincreasing across sweeps. Stops when
    the relative change of the objective drops below ``tol`` or after
    ``max_iters`` sweeps (the result is then flagged ``converged=False``).
    Factors are initialized from the leading singular vectors of each mode
    unfolding and the output is canonicalized, so results are deterministic.
    """
    dims = x.dims
    if rank < 1:
        raise ValueError("rank must be >= 1")
    total = int(np.prod(dims))
    cap = min(total // d for d in dims)
    if rank > cap:
        raise ValueError(f"rank {rank} exceeds {cap}, the smallest co-dimension product")
    norm_x = x.norm()
    if norm_x == 0.0:
        factors = []
        for d in dims:
            f = np.zeros((d, rank))
            f[0, :] = 1.0
            factors.append(f)
        return CpForm(
            np.zeros(rank), factors, converged=True, objective_trace=np.zeros(1)
        )
    if x.order == 1:
        # a vector is exactly rank one: scale = norm, factor = direction
        return CpForm(
            np.array([norm_x]),
            [x.data.reshape(-1, 1) / norm_x],
            converged=True,
            objective_trace=np.zeros(1),
        )

    factors = _hosvd_init(x, rank)
    lambdas = np.ones(rank)
    unfoldings = [unfold(x.data, k) for k in range(x.order)]
    grams = [f.T @ f for f in factors]
    trace = []
    prev = None
    converged = False
    for _ in range(max_iters):
        for k in range(x.order):
            others = [factors[j] for j in range(x.order) if j != k]
            v = np.ones((rank, rank))
            for j in range(x.order):
                if j != k:
                    v *= grams[j]
            z = functools.reduce(khatri_rao, others)
            w = unfoldings[k] @ z
            a = w @ np.linalg.pinv(v, rcond=1e-12)
            norms = np.linalg.norm(a, axis=0)
            live = norms > 0
            a[:, live] /= norms[live]
            a[0, ~live] = 1.0  # dead component: park a basis vector
            lambdas = norms
            factors[k] = a
            grams[k] = a.T @ a
        # direct residual; Gram identities cancel catastrophically near
        # exact fits and would break the monotone trace
        head = factors[0] * lambdas
        if x.order == 1:
            recon = head.sum(axis=1, keepdims=True)
        else:
            recon = head @ functools.reduce(khatri_rao, factors[1:]).T
        obj = float(np.linalg.norm(unfoldings[0] - recon))
        trace.append(obj)
        if prev is not None and abs(prev - obj) <= tol * max(prev, 1e-300):
            converged = True
            break
        if obj <= 1e-14 * norm_x:
            converged = True
            break
        prev = obj

    lam, facs = _canonical_parts(lambdas, factors)
    return CpForm(lam, facs, converged=converged, objective_trace=np.asarray(trace))
