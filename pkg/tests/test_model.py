import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gradcheck
from decnn.errors import ConfigError, ShapeError, StateError
from decnn.layers import Conv2D, PReLU, concat_forward
from decnn.model import (ALPHA, BETA, DecnnModel, ForwardTrace, ModelConfig, _name_key, build,
                         identity_model, loss)
from decnn.tensor import Rng


def tiny(k=1, channels=4, seed=3, **kw):
    return build(ModelConfig(k=k, channels=channels, **kw), Rng(seed))


@pytest.mark.parametrize("k", range(7))
def test_layer_count_law(k):
    model = DecnnModel(ModelConfig(k=k, channels=4))
    assert len(model.transform_conv_names()) == 3 * k + 5
    assert model.config.transform_layers == 3 * k + 5


def test_named_comparator_depths():
    assert len(DecnnModel(ModelConfig(k=2)).transform_conv_names()) == 11
    assert len(DecnnModel(ModelConfig(k=4)).transform_conv_names()) == 17


def test_layer_shapes_default():
    m = DecnnModel(ModelConfig(k=2))
    assert m.convs["pre.0"].weight.value.shape == (128, 3, 3, 3)
    assert m.convs["pre.1"].weight.value.shape == (128, 128, 3, 3)
    assert m.convs["ebd.0.fuse"].weight.value.shape == (128, 131, 3, 3)
    for name in ("ebd.0.recon", "ebd.1.recon", "recon"):
        assert m.convs[name].weight.value.shape == (3, 128, 3, 3)
        assert name not in m.acts
    assert set(m.acts) == set(m.transform_conv_names())


@pytest.mark.parametrize("bad", [dict(k=-1), dict(channels=0), dict(in_slices=2), dict(pre_layers=0),
                                 dict(kernel=4)])
def test_invalid_config(bad):
    with pytest.raises(ConfigError):
        ModelConfig(**bad)


def test_forward_shapes_training_patch():
    m = tiny(k=2, channels=4)
    tr = m.forward(np.zeros((1, 3, 64, 64), np.float32))
    assert tr.final.shape == (1, 3, 64, 64)
    assert len(tr.tentatives) == 2
    assert all(t.shape == (1, 3, 64, 64) for t in tr.tentatives)


@pytest.mark.parametrize("k", [0, 1, 3])
def test_forward_odd_shape(k):
    m = tiny(k=k, channels=4)
    assert m.forward(np.ones((1, 3, 37, 91), np.float32)).final.shape == (1, 3, 37, 91)


def test_forward_rejects_wrong_channels():
    with pytest.raises(ShapeError):
        tiny().forward(np.zeros((1, 2, 8, 8), np.float32))


def test_output_shape_twenty_random_sizes():
    gen = np.random.default_rng(77)
    m = tiny(k=1, channels=2)
    for _ in range(20):
        h, w = (int(v) for v in gen.integers(16, 97, size=2))
        tr = m.forward(np.zeros((1, 3, h, w), np.float32))
        assert tr.final.shape == (1, 3, h, w)


def test_zero_model_outputs_zero():
    m = tiny(k=2)
    for p in m.parameters():
        p.value[...] = 0
    tr = m.forward(np.random.default_rng(0).standard_normal((1, 3, 8, 8)).astype(np.float32))
    assert (tr.final == 0).all()
    assert all((t == 0).all() for t in tr.tentatives)


def test_zero_model_at_target_has_zero_loss_and_grads():
    m = tiny(k=2)
    for p in m.parameters():
        p.value[...] = 0
    x = np.ones((1, 3, 6, 6), np.float32)
    tr = m.forward(x)
    target = np.zeros_like(x)
    assert m.loss(tr, target).total == 0
    m.backward(tr, target)
    assert all((p.grad == 0).all() for p in m.parameters())


def test_loss_worked_example():
    tr = ForwardTrace(np.zeros((1, 1, 1, 1)), [np.zeros((1, 1, 1, 1))], None)
    target = np.zeros((1, 1, 1, 1))
    tr.final[...] = np.sqrt(2.0)
    tr.tentatives[0][...] = 2.0
    parts = loss(tr, target, beta=0.5, alpha=0.001, reg=10.0)
    assert parts.final_l2 == pytest.approx(2.0)
    assert parts.aux_l2 == [4.0]
    assert parts.total == pytest.approx(4.01, rel=1e-12)


def test_loss_k0_has_no_aux():
    m = tiny(k=0)
    x = np.ones((1, 3, 5, 5), np.float32)
    parts = m.loss(m.forward(x), np.zeros_like(x))
    assert parts.aux_l2 == []
    assert parts.total == pytest.approx(parts.final_l2 + ALPHA * parts.reg, rel=1e-12)


def test_loss_shape_mismatch():
    m = tiny()
    tr = m.forward(np.ones((1, 3, 5, 5), np.float32))
    with pytest.raises(ShapeError):
        m.loss(tr, np.zeros((1, 3, 5, 6), np.float32))


@given(st.integers(0, 2**31), st.integers(0, 3))
@settings(max_examples=20, deadline=None)
def test_loss_recombines_from_parts(seed, k):
    r = Rng(seed)
    m = build(ModelConfig(k=k, channels=3), r.child(0))
    x, target = r.normal((1, 3, 6, 7)), r.normal((1, 3, 6, 7))
    parts = m.loss(m.forward(x), target)
    recombined = parts.final_l2 + 0.5 * sum(parts.aux_l2) + 0.001 * parts.reg
    assert abs(parts.total - recombined) <= 1e-6 * abs(recombined)
    weights = sum(float((c.weight.value.astype(np.float64) ** 2).sum()) for c in m.convs.values())
    assert parts.reg == pytest.approx(weights, rel=1e-12)


def test_plain_cnn_equivalence_at_k0():
    cfg = ModelConfig(k=0, channels=6)
    model = build(cfg, Rng(21))

    rng = Rng(21)
    layers = []
    for j in range(cfg.pre_layers):
        conv = Conv2D(3 if j == 0 else 6, 6)
        conv.he_init(rng.child(_name_key(f"pre.{j}")))
        layers.append((conv, PReLU(6)))
    recon = Conv2D(6, 3)
    recon.he_init(rng.child(_name_key("recon")))

    x = Rng(5).normal((2, 3, 9, 8))
    h = x
    for conv, act in layers:
        h = act.forward(conv.forward(h))
    expected = recon.forward(h)
    assert model.forward(x).final.tobytes() == expected.tobytes()


def test_init_is_deterministic():
    a, b = tiny(k=2, seed=8), tiny(k=2, seed=8)
    for p, q in zip(a.parameters(), b.parameters()):
        assert p.value.tobytes() == q.value.tobytes()
    c = tiny(k=2, seed=9)
    assert a.convs["pre.0"].weight.value.tobytes() != c.convs["pre.0"].weight.value.tobytes()


def _check_k1(m, x, target, dtype):
    """Analytic gradients of ``m`` (computed in ``dtype``) vs the float64 oracle."""
    if dtype != np.float32:
        src, m = m, DecnnModel(m.config, dtype=dtype)
        for p, q in zip(src.parameters(), m.parameters()):
            q.value[...] = p.value
        x, target = x.astype(dtype), target.astype(dtype)
    m.zero_grad()
    grad_x = m.backward(m.forward(x), target, BETA, ALPHA)
    analytic = {name: p.grad for name, p in m.named_parameters().items()}
    analytic["input"] = grad_x
    _, arrays, evaluate = gradcheck.model_oracle(m, x, target, BETA, ALPHA)
    report = gradcheck.check(evaluate, arrays, analytic,
                             scale_floor=gradcheck.SCALE_FLOOR if dtype == np.float32 else 0.0)
    assert report.checked == sum(p.value.size for p in m.parameters()) + x.size
    return report


@pytest.mark.parametrize("seed", range(200, 216))
def test_full_model_gradients_k1(seed):
    # as built: He weights, zero biases, slopes 0.25; 32-bit engine
    r = Rng(seed)
    m = build(ModelConfig(k=1, channels=4), r.child(0))
    report = _check_k1(m, r.normal((1, 3, 5, 5)), r.normal((1, 3, 5, 5)), np.float32)
    assert report.ok, report.failures[:5]


@pytest.mark.parametrize("seed", [100, 101, 209])
def test_full_model_gradients_perturbed(seed):
    # random slopes and biases too; compared in 64-bit because a few entries
    # cancel down to where 32-bit accumulation alone costs ~1e-3 relative
    r = Rng(seed)
    m = build(ModelConfig(k=1, channels=4), r.child(0))
    for act in m.acts.values():
        act.alpha.value[...] = r.uniform(0.05, 0.6, act.alpha.value.shape)
    for conv in m.convs.values():
        conv.bias.value[...] = r.normal(conv.bias.value.shape, std=0.1)
    report = _check_k1(m, r.normal((1, 3, 5, 5)), r.normal((1, 3, 5, 5)), np.float64)
    assert report.ok, report.failures[:5]
    assert report.worst < 1e-5


class Severed(DecnnModel):
    """Same graph, but the tentative is not concatenated back (zeros instead)."""

    def forward(self, x, capture=None):
        orig = concat_forward
        import decnn.model as mod

        mod.concat_forward = lambda a, t: orig(a, np.zeros_like(t))
        try:
            return super().forward(x)
        finally:
            mod.concat_forward = orig


def _recon_fd(model, x, target):
    """Finite-difference gradient of the beta=0 loss w.r.t. ebd.0.recon weights."""
    w = model.convs["ebd.0.recon"].weight.value
    flat = w.reshape(-1)
    out = np.zeros(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + 1e-6
        lp = model.loss(model.forward(x), target, 0.0, 0.0).total
        flat[i] = orig - 1e-6
        lm = model.loss(model.forward(x), target, 0.0, 0.0).total
        flat[i] = orig
        out[i] = (lp - lm) / 2e-6
    return out


def test_reinjection_carries_gradient_without_aux_loss():
    cfg = ModelConfig(k=1, channels=4)
    src = build(cfg, Rng(31), dtype=np.float64)
    live, severed = DecnnModel(cfg, dtype=np.float64), Severed(cfg, dtype=np.float64)
    for a, b, c in zip(src.parameters(), live.parameters(), severed.parameters()):
        b.value[...] = a.value
        c.value[...] = a.value
    r = Rng(32)
    x = r.normal((1, 3, 6, 6)).astype(np.float64)
    target = r.normal((1, 3, 6, 6)).astype(np.float64)

    # graph ablation: with the concat branch cut the recon layer is dead
    assert np.abs(_recon_fd(severed, x, target)).max() == 0

    live.zero_grad()
    live.backward(live.forward(x), target, beta=0.0, alpha=0.0)
    g = live.convs["ebd.0.recon"].weight.grad.ravel()
    assert np.abs(g).max() > 1e-3
    np.testing.assert_allclose(g, _recon_fd(live, x, target), rtol=1e-4, atol=1e-7)


def test_reg_gradient_only_on_weights():
    m = tiny()
    x = np.zeros((1, 3, 4, 4), np.float32)
    for p in m.parameters():
        if not p.decay:
            p.value[...] = 0
    for a in m.acts.values():
        a.alpha.value[...] = 0.25
    tr = m.forward(x)
    m.zero_grad()
    m.backward(tr, tr.final.copy(), beta=0.0, alpha=0.5)
    for p in m.parameters():
        if p.decay:
            np.testing.assert_allclose(p.grad, p.value, rtol=1e-6)
        else:
            assert (p.grad == 0).all(), p.name


def test_stale_trace_rejected():
    from decnn.optim import Adam

    m = tiny()
    x = np.ones((1, 3, 5, 5), np.float32)
    tr = m.forward(x)
    m.backward(tr, np.zeros_like(x))
    Adam(m.parameters()).step()
    with pytest.raises(StateError):
        m.backward(tr, np.zeros_like(x))


def test_identity_model_copies_input():
    m = identity_model(ModelConfig(k=2, channels=4))
    x = np.abs(Rng(1).normal((1, 3, 7, 6)))
    tr = m.forward(x)
    assert np.array_equal(tr.final, x)
    assert all(np.array_equal(t, x) for t in tr.tentatives)


def test_activations_lookup():
    m = tiny(k=1)
    x = Rng(2).normal((1, 3, 6, 6))
    tr = m.forward(x)
    assert np.array_equal(m.activations(x, "recon"), tr.final)
    assert np.array_equal(m.activations(x, "ebd.0.recon"), tr.tentatives[0])
    assert m.activations(x, "pre.2").shape == (1, 4, 6, 6)
    with pytest.raises(KeyError):
        m.activations(x, "nope")
