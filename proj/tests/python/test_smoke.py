import numpy as np
import pytest

import axialseg


def test_variants():
    assert axialseg.variants() == ["unet_like_axial", "gated_axial", "global_only", "local_only", "logo", "medt"]


def test_generate_is_deterministic():
    x1, y1 = axialseg.generate(3, img_size=32, seed=4)
    x2, y2 = axialseg.generate(3, img_size=32, seed=4)
    assert x1.shape == (3, 1, 32, 32) and x1.dtype == np.float32
    assert np.array_equal(x1, x2) and np.array_equal(y1, y2)
    assert set(np.unique(y1)) <= {0.0, 1.0}


def test_width_attention_matches_numpy():
    rng = np.random.default_rng(0)
    q, k, v = (rng.standard_normal((1, 3, 2, 5)) for _ in range(3))
    y, attn = axialseg.axial_attention_width(q, k, v)
    logits = np.einsum("ncij,nciw->nijw", q, k)
    a = np.exp(logits - logits.max(-1, keepdims=True))
    a /= a.sum(-1, keepdims=True)
    assert np.allclose(attn, a, atol=1e-12)
    assert np.allclose(y, np.einsum("nijw,nciw->ncij", a, v), atol=1e-12)


def test_gates_zero_positional_equals_plain():
    rng = np.random.default_rng(1)
    q, k, v = (rng.standard_normal((2, 4, 3, 6)) for _ in range(3))
    rq, rk, rv = (rng.standard_normal((11, 4)) for _ in range(3))
    plain, _ = axialseg.axial_attention_width(q, k, v)
    gated, _ = axialseg.axial_attention_width(q, k, v, rq, rk, rv, gates=(0.0, 0.0, 1.0, 0.0))
    assert np.array_equal(plain, gated)


def test_single_row_matches_full_attention():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 3, 1, 7))
    wq, wk, wv = (rng.standard_normal((4, 3, 1, 1)) for _ in range(3))
    full = axialseg.full_self_attention(x, wq, wk, wv)
    q, k, v = (np.einsum("oc,nchw->nohw", w[:, :, 0, 0], x) for w in (wq, wk, wv))
    y, _ = axialseg.axial_attention_width(q, k, v)
    assert np.max(np.abs(full - y)) < 1e-8


def test_metrics():
    f1, iou = axialseg.f1_iou(np.array([1.0, 1.0, 0.0, 0.0]), np.array([0.0, 1.0, 1.0, 0.0]))
    assert f1 == pytest.approx(0.5) and iou == pytest.approx(1 / 3)
    assert axialseg.bce_loss(np.full(4, 0.5), np.ones(4)) == pytest.approx(np.log(2))


def test_train_predict_save_load(tmp_path):
    x, y = axialseg.generate(2, img_size=32, seed=1)
    m = axialseg.Model("medt", img_size=32, base_channels=2, heads=2, global_depth=1, local_depth=1, seed=3)
    hist = m.train(x, y, epochs=3, batch_size=2, lr=1e-2, gate_freeze_epochs=1, seed=3)
    assert [h["epoch"] for h in hist] == [0, 1, 2]
    assert all(np.isfinite(h["loss"]) for h in hist)
    p = m.predict(x)
    assert p.shape == x.shape and np.all((p > 0) & (p < 1))
    path = str(tmp_path / "m.axsg")
    m.save(path)
    m2 = axialseg.Model.load(path)
    assert m2.parameter_count == m.parameter_count and m2.variant == "medt"
    assert np.array_equal(m2.predict(x), p)
    assert set(m.evaluate(x, y)) == {"f1", "iou", "f1_pooled", "iou_pooled", "loss"}


def test_bad_inputs_raise():
    with pytest.raises(ValueError):
        axialseg.Model("nope")
    m = axialseg.Model("global_only", img_size=32, base_channels=2, heads=2)
    with pytest.raises(ValueError):
        m.predict(np.zeros((1, 1, 16, 16), np.float32))


def test_gradcheck_and_bench():
    results = axialseg.gradcheck(ops=True, layer=False, model=False)
    assert results and all(ok for _, _, ok in results)
    row = axialseg.bench(4)
    assert row["full_macs"] == row["full_analytic"] == 2 * 4**4 * 4
    assert row["axial_macs"] == row["axial_analytic"] == 2 * 4**3 * 4
