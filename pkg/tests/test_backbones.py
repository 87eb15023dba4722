import math

import numpy as np
import pytest

from cvarrec import numerics as N
from cvarrec.backbones import Backbone, BackboneKind, bce_loss, build_backbone
from cvarrec.features import build_schema, generate_synthetic

KINDS = list(BackboneKind)


def model(kind, d=4, n_cat=2, n_cont=1, seed=0):
    return Backbone(kind, d, n_cat, n_cont, np.random.default_rng(seed))


def inputs(m, B=5, seed=1):
    rng = np.random.default_rng(seed)
    return N.Tensor(rng.normal(size=(B, m.d))), N.Tensor(rng.normal(size=(B, m.width - m.d)))


def zero(m, prefix=""):
    for name, t in m.params.items():
        if name.startswith(prefix):
            t.data[...] = 0.0


@pytest.mark.parametrize("kind", KINDS)
def test_zero_weights_and_embeddings_give_half(kind):
    m = model(kind)
    zero(m)
    y = m(N.Tensor(np.zeros((3, m.d))), N.Tensor(np.zeros((3, m.width - m.d))))
    np.testing.assert_array_equal(y.data, 0.5)


def test_fm_orthogonal_factors():
    m = model(BackboneKind.FM, d=2, n_cat=1, n_cont=0)
    zero(m)
    assert m(N.Tensor([[1.0, 0.0]]), N.Tensor([[0.0, 1.0]])).data[0] == 0.5


def test_fm_second_order_by_hand():
    m = model(BackboneKind.FM, d=2, n_cat=1, n_cont=0)
    zero(m)
    y = m(N.Tensor([[1.0, 1.0]]), N.Tensor([[1.0, 1.0]])).data[0]
    assert y == pytest.approx(1 / (1 + math.exp(-2)), rel=1e-12)
    assert y == pytest.approx(0.8808, abs=1e-4)


def test_fm_pairwise_equals_explicit_sum():
    m = model(BackboneKind.FM, d=3, n_cat=3, n_cont=0)
    zero(m, "linear")
    v_i, v_X = inputs(m)
    fields = np.concatenate([v_i.data, v_X.data], axis=1).reshape(5, 4, 3)
    brute = sum(np.sum(fields[:, i] * fields[:, j], axis=1) for i in range(4) for j in range(i + 1, 4))
    np.testing.assert_allclose(m.logit(v_i, v_X).data, brute, rtol=1e-12)


def test_deepfm_with_deep_output_zeroed_is_fm():
    m = model(BackboneKind.DeepFM)
    last = f"deep/w{m.deep.n_layers - 1}"
    m.params[last].data[...] = 0.0
    v_i, v_X = inputs(m)
    flat = N.concat([v_i, v_X], axis=1)
    _, fields = m._inputs(v_i, v_X)
    np.testing.assert_array_equal(m.logit(v_i, v_X).data, m.fm_logit(flat, fields).data)


def test_widedeep_with_deep_zeroed_is_linear():
    m = model(BackboneKind.WideDeep)
    zero(m, "deep/")
    v_i, v_X = inputs(m)
    flat = np.concatenate([v_i.data, v_X.data], axis=1)
    wide = flat @ m.params["linear/w"].data[:, 0] + m.params["linear/b"].data[0]
    np.testing.assert_allclose(m.logit(v_i, v_X).data, wide, rtol=1e-12)


def test_dcn_cross_with_zero_weights_is_identity_plus_bias():
    m = model(BackboneKind.DCN)
    rng = np.random.default_rng(2)
    for name, t in m.params.items():
        if name.startswith("cross/w"):
            t.data[...] = 0.0
        elif name.startswith("cross/b"):
            t.data[...] = rng.normal(size=t.shape)
    x0 = N.Tensor(rng.normal(size=(3, m.width)))
    expected = x0.data + m.params["cross/b0"].data + m.params["cross/b1"].data
    np.testing.assert_allclose(m.cross(x0).data, expected, rtol=1e-12)


@pytest.mark.parametrize("kind", [BackboneKind.IPNN, BackboneKind.OPNN])
def test_pnn_without_products_is_plain_mlp(kind):
    m = model(kind)
    m.params["product/wp"].data[...] = 0.0
    v_i, v_X = inputs(m)
    flat = N.concat([v_i, v_X], axis=1)
    h = N.relu(flat @ m.params["product/wz"] + m.params["product/b"])
    np.testing.assert_allclose(m.logit(v_i, v_X).data, m.deep(h).data[:, 0], rtol=1e-12)


def test_ipnn_products_are_inner_products():
    m = model(BackboneKind.IPNN, n_cont=0)
    v_i, v_X = inputs(m)
    _, fields = m._inputs(v_i, v_X)
    p = m.products(fields).data
    f = fields.data
    for k, (i, j) in enumerate(m.pairs):
        np.testing.assert_allclose(p[:, k], np.sum(f[:, i] * f[:, j], axis=1), rtol=1e-12)


def test_opnn_products_use_kernel():
    m = model(BackboneKind.OPNN, n_cont=0)
    v_i, v_X = inputs(m)
    _, fields = m._inputs(v_i, v_X)
    p = m.products(fields).data
    f, K = fields.data, m.params["product/kernel"].data
    for k, (i, j) in enumerate(m.pairs):
        np.testing.assert_allclose(p[:, k], np.einsum("bm,mn,bn->b", f[:, i], K[k], f[:, j]), rtol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_any_item_vector_slots_in(kind):
    m = model(kind)
    _, v_X = inputs(m)
    for seed in range(3):
        v = N.Tensor(np.random.default_rng(seed).normal(size=(5, m.d)))
        y = m(v, v_X).data
        assert y.shape == (5,) and np.all((y > 0) & (y < 1))


@pytest.mark.parametrize("kind", KINDS)
def test_width_mismatch(kind):
    m = model(kind)
    v_i, v_X = inputs(m)
    with pytest.raises(N.DimensionError):
        m(v_i, N.Tensor(np.zeros((5, m.width))))
    with pytest.raises(N.DimensionError):
        m(N.Tensor(np.zeros((5, m.d + 1))), v_X)


@pytest.mark.parametrize("kind", KINDS)
def test_mlp_layers_are_two_hidden_of_sixteen(kind):
    m = Backbone(kind, 16, 3, 1, np.random.default_rng(0))
    if kind is BackboneKind.FM:
        assert not hasattr(m, "deep")
        return
    hidden = m.deep.sizes[1:3] if kind is not BackboneKind.IPNN and kind is not BackboneKind.OPNN else m.deep.sizes[:2]
    assert hidden == [16, 16]


@pytest.mark.parametrize("kind", KINDS)
def test_training_sanity(kind):
    """200 Adam steps on a linearly separable batch, training theta and the embeddings."""
    rng = np.random.default_rng(0)
    m = Backbone(kind, 16, 3, 1, rng)
    phi = N.ParameterStore()
    v_i = phi.add("v_i", rng.normal(size=(128, 16)) * 0.1)
    v_X = phi.add("v_X", rng.normal(size=(128, m.width - 16)) * 0.1)
    w = rng.normal(size=m.width)
    y = (np.concatenate([v_i.data, v_X.data], axis=1) @ w > 0).astype(float)
    opt_t, opt_p = N.AdamState(), N.AdamState()
    for _ in range(200):
        loss = bce_loss(m(v_i, v_X), y)
        loss.backward()
        N.adam_step(opt_t, m.params)
        N.adam_step(opt_p, phi)
    assert loss.item() < 0.1


# --- loss -------------------------------------------------------------------------


def test_bce_half():
    assert bce_loss(N.Tensor([0.5]), [1]).item() == pytest.approx(math.log(2), rel=1e-12)


def test_bce_perfect_prediction():
    assert bce_loss(N.Tensor([1.0]), [1]).item() < 1e-11


def test_bce_by_hand():
    assert bce_loss(N.Tensor([0.9, 0.1]), [1, 0]).item() == pytest.approx(-math.log(0.9), rel=1e-12)
    assert bce_loss(N.Tensor([0.9, 0.1]), [1, 0]).item() == pytest.approx(0.10536, abs=1e-5)


def test_bce_clamps_zero():
    assert math.isfinite(bce_loss(N.Tensor([0.0]), [1]).item())


# --- persistence ------------------------------------------------------------------


def test_checkpoint_checks_kind_and_schema(tmp_path):
    table = generate_synthetic(n_interactions=2000)
    schema = build_schema(table, table.side_info_fields)
    a = build_backbone("DeepFM", schema, np.random.default_rng(0))
    a.save(tmp_path / "b.ckpt")
    b = build_backbone("DeepFM", schema, np.random.default_rng(1))
    b.load(tmp_path / "b.ckpt")
    assert b.params.checksum() == a.params.checksum()
    with pytest.raises(N.CheckpointError):
        build_backbone("WideDeep", schema, np.random.default_rng(0)).load(tmp_path / "b.ckpt")
    other = build_schema(table, table.side_info_fields, embedding_dim=16, item_catalog=np.arange(5))
    with pytest.raises(N.CheckpointError):
        build_backbone("DeepFM", other, np.random.default_rng(0)).load(tmp_path / "b.ckpt")


def test_kind_parsing():
    assert BackboneKind.parse("Wide&Deep") is BackboneKind.WideDeep
    assert BackboneKind.parse("deepfm") is BackboneKind.DeepFM
    with pytest.raises(ValueError, match="FM"):
        BackboneKind.parse("GBDT")
