"""Dataset container and the ATRD v1 on-disk format.

An ATRD v1 file is a plain-text manifest, a blank line, then a binary blob:
n row-major float64 tensors back to back followed by n float64 responses,
all little-endian. Every module reads and writes datasets through this
format only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .tensor import CpForm, Tensor

_MAGIC = "ATRD v1"


@dataclass
class Dataset:
    """Paired tensors and scalar responses, with optional generator metadata.

    ``true_f``, ``cpforms`` and ``noise_var`` are populated by the synthetic
    generators and the epidemic labeler; they are in-memory only and are not
    persisted by the ATRD format (except ``noise_var``, which travels as an
    optional manifest key).
    """

    tensors: list[Tensor]
    y: np.ndarray
    true_f: np.ndarray | None = None
    cpforms: list[CpForm] | None = field(default=None, repr=False)
    noise_var: float | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if len(self.tensors) != self.y.size:
            raise ShapeError(
                f"{len(self.tensors)} tensors but {self.y.size} responses"
            )
        if self.tensors:
            dims = self.tensors[0].dims
            for t in self.tensors[1:]:
                if t.dims != dims:
                    raise ShapeError(f"mixed tensor dims: {dims} vs {t.dims}")

    def __len__(self) -> int:
        return self.y.size

    @property
    def dims(self) -> tuple[int, ...]:
        if not self.tensors:
            raise ShapeError("empty dataset has no dims")
        return self.tensors[0].dims

    def subset(self, indices) -> "Dataset":
        """New dataset restricted to ``indices`` (order preserved)."""
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            tensors=[self.tensors[i] for i in idx],
            y=self.y[idx],
            true_f=None if self.true_f is None else self.true_f[idx],
            cpforms=None if self.cpforms is None else [self.cpforms[i] for i in idx],
            noise_var=self.noise_var,
        )

    def split(self, n_train: int) -> tuple["Dataset", "Dataset"]:
        """Head/tail split into (train, test)."""
        if not 1 <= n_train < len(self):
            raise ValueError(f"n_train {n_train} out of range for size {len(self)}")
        return self.subset(range(n_train)), self.subset(range(n_train, len(self)))


def save_atrd(dataset: Dataset, path) -> None:
    """Write a dataset to an ATRD v1 file."""
    if not dataset.tensors:
        raise ValueError("refusing to write an empty dataset")
    dims = dataset.dims
    lines = [
        _MAGIC,
        f"n = {len(dataset)}",
        f"K = {len(dims)}",
        "dims = " + ",".join(str(d) for d in dims),
        "dtype = float64",
        "endianness = little",
    ]
    if dataset.noise_var is not None:
        lines.append(f"noise_var = {dataset.noise_var!r}")
    header = ("\n".join(lines) + "\n\n").encode("ascii")
    blob = np.concatenate(
        [t.ravel() for t in dataset.tensors] + [dataset.y]
    ).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(blob.tobytes())


def load_atrd(path) -> Dataset:
    """Read a dataset from an ATRD v1 file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    sep = raw.find(b"\n\n")
    if sep < 0:
        raise ValueError(f"{path}: missing manifest terminator")
    manifest = raw[:sep].decode("ascii").splitlines()
    if not manifest or manifest[0] != _MAGIC:
        raise ValueError(f"{path}: not an {_MAGIC} file")
    fields = {}
    for line in manifest[1:]:
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    n = int(fields["n"])
    dims = tuple(int(d) for d in fields["dims"].split(","))
    if int(fields["K"]) != len(dims):
        raise ValueError(f"{path}: K does not match dims")
    if fields.get("dtype", "float64") != "float64":
        raise ValueError(f"{path}: unsupported dtype {fields['dtype']}")
    if fields.get("endianness", "little") != "little":
        raise ValueError(f"{path}: unsupported endianness")
    per = int(np.prod(dims))
    flat = np.frombuffer(raw[sep + 2 :], dtype="<f8", count=n * per + n)
    if flat.size != n * per + n:
        raise ValueError(f"{path}: truncated data blob")
    tensors = [
        Tensor(flat[i * per : (i + 1) * per].reshape(dims).copy()) for i in range(n)
    ]
    y = flat[n * per :].copy()
    noise_var = float(fields["noise_var"]) if "noise_var" in fields else None
    return Dataset(tensors=tensors, y=y, noise_var=noise_var)
