import numpy as np
import pytest

from amnr.data import Dataset, load_atrd, save_atrd
from amnr.errors import ShapeError
from amnr.tensor import Tensor


def toy_dataset(n=4, dims=(2, 3), seed=0, noise_var=None):
    rng = np.random.default_rng(seed)
    return Dataset(
        tensors=[Tensor(rng.standard_normal(dims)) for _ in range(n)],
        y=rng.standard_normal(n),
        noise_var=noise_var,
    )


class TestDataset:
    def test_length_and_dims(self):
        ds = toy_dataset()
        assert len(ds) == 4
        assert ds.dims == (2, 3)

    def test_mismatched_counts(self):
        with pytest.raises(ShapeError):
            Dataset(tensors=[Tensor(np.eye(2))], y=np.zeros(2))

    def test_mixed_dims_rejected(self):
        with pytest.raises(ShapeError):
            Dataset(tensors=[Tensor(np.eye(2)), Tensor(np.eye(3))], y=np.zeros(2))

    def test_subset_preserves_order(self):
        ds = toy_dataset()
        sub = ds.subset([2, 0])
        assert np.array_equal(sub.y, ds.y[[2, 0]])
        assert np.array_equal(sub.tensors[0].data, ds.tensors[2].data)

    def test_split(self):
        ds = toy_dataset()
        train, test = ds.split(3)
        assert len(train) == 3 and len(test) == 1
        with pytest.raises(ValueError):
            ds.split(4)


class TestAtrdFormat:
    def test_roundtrip_bitwise(self, tmp_path):
        ds = toy_dataset(n=5, dims=(3, 2, 2), seed=1)
        path = tmp_path / "data.atrd"
        save_atrd(ds, path)
        back = load_atrd(path)
        assert len(back) == 5
        assert back.dims == (3, 2, 2)
        assert np.array_equal(back.y, ds.y)
        for a, b in zip(back.tensors, ds.tensors):
            assert np.array_equal(a.data, b.data)
        assert back.noise_var is None

    def test_noise_var_travels(self, tmp_path):
        ds = toy_dataset(noise_var=0.125)
        path = tmp_path / "data.atrd"
        save_atrd(ds, path)
        assert load_atrd(path).noise_var == 0.125

    def test_manifest_is_text(self, tmp_path):
        ds = toy_dataset()
        path = tmp_path / "data.atrd"
        save_atrd(ds, path)
        head = path.read_bytes().split(b"\n\n", 1)[0].decode("ascii")
        assert head.splitlines()[0] == "ATRD v1"
        assert "dims = 2,3" in head
        assert "endianness = little" in head

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "bad.atrd"
        path.write_bytes(b"NOPE v9\nn = 1\n\n" + b"\x00" * 8)
        with pytest.raises(ValueError):
            load_atrd(path)

    def test_rejects_truncated_blob(self, tmp_path):
        ds = toy_dataset()
        path = tmp_path / "data.atrd"
        save_atrd(ds, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(ValueError):
            load_atrd(path)

    def test_refuses_empty(self, tmp_path):
        with pytest.raises(ValueError):
            save_atrd(Dataset(tensors=[], y=np.empty(0)), tmp_path / "e.atrd")
