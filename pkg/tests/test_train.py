import numpy as np
import pytest

from decnn import checkpoint
from decnn.config import TrainConfig
from decnn.data import PhantomSpec, phantom_generate
from decnn.errors import ConfigError, DataError
from decnn.train import CSV_COLUMNS, init_model, read_csv, train

# wall_seconds is a measurement, not a result; it is the one column allowed to differ
STABLE = [c for c in CSV_COLUMNS if c != "wall_seconds"]

CFG = TrainConfig(k=1, channels=4, lr=1e-3, batch=8, patch=32, stride=8, epochs=3, seed=5)


@pytest.fixture(scope="module")
def volumes():
    gen = [phantom_generate(PhantomSpec(dims=(4, 40, 40), seed=s)) for s in range(3)]
    return [g[:2] for g in gen[:2]], [g[:2] for g in gen[2:]]


def stable(rows):
    return [[r[c] for c in STABLE] for r in rows]


def test_epochs_zero_writes_initialization(tmp_path, volumes):
    tr, va = volumes
    cfg = CFG.replace(epochs=0)
    res = train(cfg, tr, va, tmp_path / "c.deck", tmp_path / "m.csv")
    assert res.epoch == 0 and res.rows == []
    assert (tmp_path / "m.csv").read_text() == ",".join(CSV_COLUMNS) + "\n"
    ck = checkpoint.load(tmp_path / "c.deck")
    for p, q in zip(init_model(cfg).parameters(), ck.model.parameters()):
        assert p.value.tobytes() == q.value.tobytes()


def test_csv_rows_and_checkpoint_epoch(tmp_path, volumes):
    tr, va = volumes
    res = train(CFG, tr, va, tmp_path / "c.deck", tmp_path / "m.csv")
    rows = read_csv(tmp_path / "m.csv")
    assert [r["epoch"] for r in rows] == ["1", "2", "3"]
    assert list(rows[0]) == CSV_COLUMNS
    assert all(np.isfinite(float(r["val_psnr"])) for r in rows)
    assert checkpoint.load(tmp_path / "c.deck").meta["epoch"] == 3
    assert stable(rows) == stable(res.rows)


def test_determinism(tmp_path, volumes):
    tr, va = volumes
    train(CFG, tr, va, tmp_path / "a.deck", tmp_path / "a.csv")
    train(CFG, tr, va, tmp_path / "b.deck", tmp_path / "b.csv")
    assert (tmp_path / "a.deck").read_bytes() == (tmp_path / "b.deck").read_bytes()
    assert stable(read_csv(tmp_path / "a.csv")) == stable(read_csv(tmp_path / "b.csv"))


def test_resume_matches_uninterrupted(tmp_path, volumes):
    tr, va = volumes
    train(CFG, tr, va, tmp_path / "full.deck", tmp_path / "full.csv")
    train(CFG, tr, va, tmp_path / "cut.deck", tmp_path / "cut.csv", stop_at=1)
    assert len(read_csv(tmp_path / "cut.csv")) == 1
    res = train(CFG, tr, va, tmp_path / "cut.deck", tmp_path / "cut.csv", resume=True)
    assert res.epoch == 3
    assert stable(read_csv(tmp_path / "cut.csv")) == stable(read_csv(tmp_path / "full.csv"))
    assert (tmp_path / "cut.deck").read_bytes() == (tmp_path / "full.deck").read_bytes()


def test_resume_config_mismatch(tmp_path, volumes):
    tr, va = volumes
    train(CFG, tr, va, tmp_path / "c.deck", tmp_path / "m.csv", stop_at=1)
    with pytest.raises(ConfigError):
        train(CFG.replace(lr=2e-3), tr, va, tmp_path / "c.deck", tmp_path / "m.csv", resume=True)


def test_no_training_data():
    with pytest.raises(DataError):
        train(CFG, [])


def test_loss_decreases_over_five_epochs(volumes):
    tr, _ = volumes
    res = train(CFG.replace(epochs=5), tr)
    losses = [float(r["train_loss"]) for r in res.rows]
    assert all(a > b for a, b in zip(losses, losses[1:])), losses
