from types import SimpleNamespace

import numpy as np
import pytest

from decnn.data import NormRecord, Volume, normalize
from decnn.errors import ConfigError, GeometryError
from decnn.infer import SynthesisAccumulator, coverage, synthesize, synthesize_metrics
from decnn.model import ModelConfig, build, identity_model
from decnn.tensor import Rng


def enumerate_coverage(d, slices):
    return [sum(1 for z in range(d - slices + 1) if z <= i < z + slices) for i in range(d)]


@pytest.mark.parametrize("d", [3, 4, 10, 50])
def test_coverage_matches_enumeration(d):
    assert coverage(d, 3).tolist() == enumerate_coverage(d, 3)


def test_coverage_worked_example():
    assert coverage(10, 3).tolist() == [1, 2, 3, 3, 3, 3, 3, 3, 2, 1]
    assert coverage(10, 1).tolist() == [1] * 10
    assert coverage(7, 5).tolist() == enumerate_coverage(7, 5)


class WindowStub:
    """Predicts, for every plane of a window, the window's first source value."""

    def __init__(self, slices):
        self.config = SimpleNamespace(in_slices=slices)
        self.calls = []

    def forward(self, x):
        self.calls.append(x.shape)
        return SimpleNamespace(final=np.broadcast_to(x[:, :1, :1, :1], x.shape).copy())


def test_accumulator_counts_after_full_pass():
    vol = Volume(np.arange(10, dtype=np.float32)[:, None, None] * np.ones((1, 3, 4), np.float32))
    acc = SynthesisAccumulator(vol.dims, 3)
    for z in range(8):
        acc.add(z, vol.data[z:z + 3])
    assert acc.count.tolist() == coverage(10, 3).tolist()
    assert np.allclose(acc.result(), vol.data)


def test_average_is_mean_over_covering_windows():
    d = 9
    vol = Volume(np.arange(d, dtype=np.float32)[:, None, None] * np.ones((1, 5, 6), np.float32))
    out = synthesize(WindowStub(3), vol, 3, window_batch=2).data
    for i in range(d):
        windows = [z for z in range(d - 2) if z <= i < z + 3]
        assert out[i, 0, 0] == pytest.approx(np.mean(windows))


def test_slices_one_no_averaging():
    d = 6
    vol = Volume(np.arange(d, dtype=np.float32)[:, None, None] * np.ones((1, 4, 4), np.float32))
    stub = WindowStub(1)
    out = synthesize(stub, vol, 1).data
    assert np.array_equal(out, vol.data)
    assert sum(s[0] for s in stub.calls) == d


@pytest.mark.parametrize("slices", [1, 3, 5])
def test_identity_model_reproduces_source(slices):
    src = normalize(Volume(np.random.default_rng(slices).random((7, 9, 11))))
    model = identity_model(ModelConfig(k=1, channels=slices + 1, in_slices=slices))
    out = synthesize(model, src, slices)
    assert np.abs(out.data - src.data).max() <= 1e-5
    assert out.norm == src.norm


def test_errors():
    model = build(ModelConfig(k=0, channels=2), Rng(0))
    with pytest.raises(ConfigError):
        synthesize(model, Volume(np.zeros((5, 8, 8))), 5)
    with pytest.raises(GeometryError):
        synthesize(model, Volume(np.zeros((2, 8, 8))))
    with pytest.raises(GeometryError):
        coverage(2, 3)


def test_metrics_exact_prediction():
    data = np.random.default_rng(1).random((5, 6, 6)).astype(np.float32)
    tgt = Volume(data, norm=NormRecord(-1000.0, 2000.0))
    src = Volume(data, norm=NormRecord(0.0, 1.0))
    m = synthesize_metrics(identity_model(ModelConfig(k=1, channels=3)), src, tgt)
    assert m["mae_hu"] == 0
    assert m["psnr_db"] == float("inf")


def test_metrics_constant_offset_scales_through_record():
    c, lo, hi = 0.03125, -1000.0, 2000.0
    data = np.random.default_rng(2).uniform(0.2, 0.8, (5, 6, 6)).astype(np.float32)
    tgt = Volume(data, norm=NormRecord(lo, hi))
    src = Volume(data + np.float32(c))
    m = synthesize_metrics(identity_model(ModelConfig(k=1, channels=3)), src, tgt)
    assert m["mae_hu"] == pytest.approx(c * (hi - lo), rel=1e-4)
    assert np.isfinite(m["psnr_db"]) and m["psnr_db"] > 0


def test_metrics_dims_mismatch():
    model = identity_model(ModelConfig(k=0, channels=3))
    with pytest.raises(GeometryError):
        synthesize_metrics(model, Volume(np.zeros((3, 4, 4))), Volume(np.zeros((3, 4, 5))))
