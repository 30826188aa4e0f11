import numpy as np
import pytest

from decnn import checkpoint
from decnn.errors import FormatError
from decnn.model import ModelConfig, build
from decnn.optim import Adam
from decnn.tensor import Rng


def trained(steps=3):
    m = build(ModelConfig(k=1, channels=4), Rng(0))
    opt = Adam(m.parameters(), lr=1e-3)
    r = Rng(1)
    for _ in range(steps):
        x = r.normal((2, 3, 8, 8))
        m.backward(m.forward(x), x)
        opt.step()
    return m, opt


def test_round_trip_bit_exact(tmp_path):
    m, opt = trained()
    path = tmp_path / "m.deck"
    checkpoint.save(path, m, step=42, adam=opt, meta={"epoch": 3, "note": "x"})
    ck = checkpoint.load(path)
    assert ck.model.config == m.config
    assert ck.step == 42 and ck.meta == {"epoch": 3, "note": "x"}
    for p, q in zip(m.parameters(), ck.model.parameters()):
        assert p.name == q.name and p.value.tobytes() == q.value.tobytes()
    assert ck.adam["t"] == opt.t
    for name in opt.m:
        assert ck.adam["m"][name].tobytes() == opt.m[name].tobytes()
        assert ck.adam["v"][name].tobytes() == opt.v[name].tobytes()
    checkpoint.save(tmp_path / "again.deck", ck.model, 42, None, ck.meta)
    checkpoint.save(tmp_path / "first.deck", m, 42, None, ck.meta)
    assert (tmp_path / "again.deck").read_bytes() == (tmp_path / "first.deck").read_bytes()


def test_resumed_optimizer_continues_identically(tmp_path):
    m, opt = trained()
    checkpoint.save(tmp_path / "m.deck", m, adam=opt)
    ck = checkpoint.load(tmp_path / "m.deck")
    opt2 = Adam(ck.model.parameters())
    opt2.load_state_dict(ck.adam)
    x = Rng(9).normal((1, 3, 8, 8))
    for model, o in ((m, opt), (ck.model, opt2)):
        model.backward(model.forward(x), x)
        o.step()
    for p, q in zip(m.parameters(), ck.model.parameters()):
        assert p.value.tobytes() == q.value.tobytes()


def test_no_adam_section(tmp_path):
    m, _ = trained(0)
    checkpoint.save(tmp_path / "m.deck", m)
    assert checkpoint.load(tmp_path / "m.deck").adam is None


def test_bad_magic(tmp_path):
    m, _ = trained(0)
    checkpoint.save(tmp_path / "m.deck", m)
    raw = bytearray((tmp_path / "m.deck").read_bytes())
    raw[:4] = b"XXXX"
    (tmp_path / "m.deck").write_bytes(bytes(raw))
    with pytest.raises(FormatError) as e:
        checkpoint.load(tmp_path / "m.deck")
    assert e.value.offset == 0


@pytest.mark.parametrize("cut", [10, 200, -3])
def test_truncated(tmp_path, cut):
    m, _ = trained(0)
    checkpoint.save(tmp_path / "m.deck", m, meta={"a": 1})
    raw = (tmp_path / "m.deck").read_bytes()
    (tmp_path / "m.deck").write_bytes(raw[:cut])
    with pytest.raises(FormatError):
        checkpoint.load(tmp_path / "m.deck")


def test_trailing_bytes(tmp_path):
    m, _ = trained(0)
    checkpoint.save(tmp_path / "m.deck", m)
    with open(tmp_path / "m.deck", "ab") as f:
        f.write(b"\0")
    with pytest.raises(FormatError):
        checkpoint.load(tmp_path / "m.deck")


def test_save_is_atomic_replace(tmp_path):
    m, _ = trained(0)
    path = tmp_path / "m.deck"
    path.write_bytes(b"old")
    checkpoint.save(path, m)
    assert checkpoint.load(path).model.config == m.config
    assert not (tmp_path / "m.deck.tmp").exists()
