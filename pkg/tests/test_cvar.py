import numpy as np
import pytest

from cvarrec import numerics as N
from cvarrec.cvar import CVAR, GaussianLatent, loss_rec, loss_wasserstein, reparameterize
from cvarrec.harness import Trainer
from gradcases import NETWORK_CASES, check_network
from oracles import FD_RTOL, empirical_w2_squared_1d, numeric_grad, rel_error


def make_cvar(d=16, side=8, k=16, seed=0, **kw):
    return CVAR(d, side, np.random.default_rng(seed), latent_dim=k, **kw)


def gaussian(mu, var):
    return GaussianLatent(N.Tensor(np.atleast_2d(mu).astype(float)), N.Tensor(np.log(np.atleast_2d(var).astype(float))))


def zero_params(cv, prefix=""):
    for name, t in cv.params.items():
        if name.startswith(prefix):
            t.data[...] = 0.0


# --- encoders ---------------------------------------------------------------------


def test_zero_regular_encoder_gives_standard_normal():
    cv = make_cvar()
    zero_params(cv, "enc/")
    g = cv.encode_regular(N.Tensor(np.random.default_rng(1).normal(size=(3, 16))))
    assert np.all(g.mu.data == 0) and np.all(g.log_var.data == 0) and np.all(g.std.data == 1)


def test_zero_prior_encoder_gives_unit_variance():
    cv = make_cvar()
    zero_params(cv, "prior/")
    assert np.all(cv.encode_prior(N.Tensor(np.ones((2, 8)))).std.data == 1)


def test_encoders_are_deterministic():
    cv = make_cvar()
    v = N.Tensor(np.random.default_rng(2).normal(size=(4, 16)))
    a, b = cv.encode_regular(v), cv.encode_regular(v)
    assert np.array_equal(a.mu.data, b.mu.data) and np.array_equal(a.log_var.data, b.log_var.data)


def test_identical_side_info_gives_identical_prior():
    cv = make_cvar()
    row = np.random.default_rng(3).normal(size=8)
    g = cv.encode_prior(N.Tensor(np.stack([row, row])))
    assert np.array_equal(g.mu.data[0], g.mu.data[1]) and np.array_equal(g.log_var.data[0], g.log_var.data[1])


def test_encoder_width_mismatch():
    with pytest.raises(N.DimensionError):
        make_cvar().encode_regular(N.Tensor(np.zeros((2, 5))))


def test_log_var_is_clamped():
    cv = make_cvar()
    cv.params["enc/b2"].data[16:] = 1e4
    assert np.all(cv.encode_regular(N.Tensor(np.zeros((2, 16)))).log_var.data == 10.0)


def test_gradient_of_sum_mu_wrt_input():
    cv = make_cvar(d=4, side=3, k=3)
    v = np.random.default_rng(4).normal(size=(5, 4))
    t = N.Tensor(v, requires_grad=True)
    N.backward(N.tsum(cv.encode_regular(t).mu))

    def f():
        return float(cv.encode_regular(N.Tensor(v)).mu.data.sum())

    assert rel_error(t.grad, numeric_grad(f, v)) < FD_RTOL


@pytest.mark.parametrize("name", sorted(NETWORK_CASES))
def test_network_gradients(name):
    worst = max(check_network(name, s) for s in range(20))
    assert worst < FD_RTOL


# --- reparameterization ----------------------------------------------------------


def test_zero_noise_returns_mean():
    g = gaussian([[1.0, -2.0]], [[3.0, 0.5]])
    np.testing.assert_array_equal(reparameterize(g, np.zeros((1, 2))).data, g.mu.data)


def test_vanishing_variance_returns_mean():
    g = GaussianLatent(N.Tensor([[1.0, 2.0]]), N.Tensor([[-1e6, -1e6]]))
    np.testing.assert_array_equal(reparameterize(g, np.ones((1, 2))).data, [[1.0, 2.0]])


def test_sample_mean_monte_carlo():
    mu, var = np.array([0.3, -1.2, 2.0]), np.array([0.5, 2.0, 4.0])
    n = 100_000
    g = GaussianLatent(N.Tensor(np.tile(mu, (n, 1))), N.Tensor(np.tile(np.log(var), (n, 1))))
    z = reparameterize(g, np.random.default_rng(5).standard_normal((n, 3))).data
    assert np.all(np.abs(z.mean(axis=0) - mu) < 3 * np.sqrt(var / n))
    np.testing.assert_allclose(z.var(axis=0), var, rtol=0.03)


def test_reparameterization_jacobians():
    rng = np.random.default_rng(6)
    mu, sd, eps = rng.normal(size=(1, 4)), rng.uniform(0.5, 2, size=(1, 4)), rng.normal(size=(1, 4))

    def z_of(m, s):
        return reparameterize(GaussianLatent(N.Tensor(m), N.Tensor(2 * np.log(s))), eps).data[0]

    for j in range(4):
        dm = numeric_grad(lambda: z_of(mu, sd)[j], mu)
        ds = numeric_grad(lambda: z_of(mu, sd)[j], sd)
        expected_m = np.zeros((1, 4))
        expected_m[0, j] = 1.0
        expected_s = np.zeros((1, 4))
        expected_s[0, j] = eps[0, j]
        np.testing.assert_allclose(dm, expected_m, atol=1e-8)
        np.testing.assert_allclose(ds, expected_s, atol=1e-8)


def test_noise_receives_no_gradient():
    g = GaussianLatent(N.Tensor(np.zeros((1, 2)), requires_grad=True), N.Tensor(np.zeros((1, 2)), requires_grad=True))
    eps = np.array([[0.5, -1.0]])
    N.backward(N.tsum(reparameterize(g, eps)))
    np.testing.assert_array_equal(g.mu.grad, [[1.0, 1.0]])
    np.testing.assert_allclose(g.log_var.grad, 0.5 * eps)


def test_noise_shape_checked():
    with pytest.raises(N.DimensionError):
        reparameterize(gaussian([[0.0, 0.0]], [[1.0, 1.0]]), np.zeros((1, 3)))


# --- decoder ------------------------------------------------------------------------


def test_zero_decoder_outputs_zero():
    cv = make_cvar()
    zero_params(cv, "dec/")
    assert np.all(cv.decode(N.Tensor(np.ones((3, 16))), [0.2, 0.5, 1.0]).data == 0)


def test_frequency_condition_is_live():
    cv = make_cvar()
    z = N.Tensor(np.random.default_rng(7).normal(size=(2, 16)))
    assert not np.allclose(cv.decode(z, [0.0, 0.0]).data, cv.decode(z, [1.0, 1.0]).data)


def test_decoder_gradient_wrt_latent():
    cv = make_cvar(d=4, side=3, k=3)
    z = np.random.default_rng(8).normal(size=(4, 3))
    t = N.Tensor(z, requires_grad=True)
    N.backward(N.tsum(cv.decode(t, np.full(4, 0.3))))

    def f():
        return float(cv.decode(N.Tensor(z), np.full(4, 0.3)).data.sum())

    assert rel_error(t.grad, numeric_grad(f, z)) < FD_RTOL


def test_decoder_shared_by_identity(small_prep, small_cfg):
    """Both decode paths fetch the very same parameter tensors."""
    t = Trainer(small_cfg, small_prep.schema, "DeepFM", 1)
    batch = small_prep.encoded.batch(small_prep.split["old"][:32])
    bundle = t.embedding(batch)
    cv = t.cvar
    seen = {}
    original = N.ParameterStore.__getitem__

    def recording(self, name):
        out = original(self, name)
        if name.startswith("dec/") and recording.tag:
            seen.setdefault(recording.tag, []).append(out)
        return out

    recording.tag = None
    N.ParameterStore.__getitem__ = recording
    try:
        recording.tag = "regular"
        cv.decode(reparameterize(cv.encode_regular(bundle.v_i), cv.noise(np.random.default_rng(0), 32)), batch.x_freq)
        recording.tag = "prior"
        cv.warm_forward(batch, bundle, t.backbone, cv.noise(np.random.default_rng(1), 32))
    finally:
        N.ParameterStore.__getitem__ = original
    assert len(seen["regular"]) == len(seen["prior"]) > 0
    assert all(a is b for a, b in zip(seen["regular"], seen["prior"]))


# --- losses -------------------------------------------------------------------------


def test_rec_loss_examples():
    v = N.Tensor([[1.0, 0.0]])
    assert loss_rec(v, v).item() == 0.0
    assert loss_rec(v, N.Tensor([[0.0, 0.0]])).item() == 1.0


def test_rec_loss_brute_force():
    rng = np.random.default_rng(9)
    a, b = rng.normal(size=(6, 5)), rng.normal(size=(6, 5))
    brute = sum(sum((a[i, j] - b[i, j]) ** 2 for j in range(5)) for i in range(6)) / 6
    assert loss_rec(N.Tensor(a), N.Tensor(b)).item() == pytest.approx(brute, rel=1e-12)


def test_rec_loss_shape_mismatch():
    with pytest.raises(N.DimensionError):
        loss_rec(N.Tensor(np.zeros((2, 3))), N.Tensor(np.zeros((2, 4))))


def test_w2_identical_is_zero():
    g = gaussian([[0.3, -0.2]], [[2.0, 0.5]])
    assert loss_wasserstein(g, g).item() == 0.0


def test_w2_mean_shift():
    assert loss_wasserstein(gaussian([[1.0, 0.0]], [[1.0, 1.0]]), gaussian([[0.0, 0.0]], [[1.0, 1.0]])).item() == 1.0


def test_w2_variance_term_uses_standard_deviations():
    assert loss_wasserstein(gaussian([[0.0]], [[4.0]]), gaussian([[0.0]], [[1.0]])).item() == pytest.approx(1.0, rel=1e-12)


def test_w2_matches_empirical_quantile_matching():
    rng = np.random.default_rng(10)
    for _ in range(10):
        m1, m2 = rng.normal(size=2)
        v1, v2 = rng.uniform(0.2, 3.0, size=2)
        closed = loss_wasserstein(gaussian([[m1]], [[v1]]), gaussian([[m2]], [[v2]])).item()
        emp = empirical_w2_squared_1d(m1, np.sqrt(v1), m2, np.sqrt(v2), 100_000, rng)
        assert abs(emp - closed) <= 0.02 * closed


def test_w2_symmetric_and_nonnegative():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a = gaussian(rng.normal(size=(4, 3)), rng.uniform(0.1, 3, size=(4, 3)))
        b = gaussian(rng.normal(size=(4, 3)), rng.uniform(0.1, 3, size=(4, 3)))
        ab, ba = loss_wasserstein(a, b).item(), loss_wasserstein(b, a).item()
        assert abs(ab - ba) <= 1e-12 and ab > 0


def test_w2_is_batch_mean():
    a = gaussian([[1.0], [0.0]], [[1.0], [1.0]])
    b = gaussian([[0.0], [0.0]], [[1.0], [1.0]])
    assert loss_wasserstein(a, b).item() == 0.5


def _warm_setup(small_prep, small_cfg, rows=64, **cvar_kw):
    t = Trainer(small_cfg, small_prep.schema, "DeepFM", 1)
    if cvar_kw:
        t.cvar = CVAR(t.schema.embedding_dim, t.schema.side_width, np.random.default_rng(0), **cvar_kw)
    freq = small_prep.frequency_through(["old"])
    batch = small_prep.encoded.batch(small_prep.split["old"][:rows], freq)
    return t, batch


def test_degenerate_fusion_is_ctr_only(small_prep, small_cfg):
    t, batch = _warm_setup(small_prep, small_cfg, alpha=0.0, beta=0.0)
    with t.backbone.params.frozen(), t.embedding.params.frozen():
        out = t.cvar.loss_warm(batch, t.embedding(batch), t.backbone, np.random.default_rng(0))
    assert out.total.item() == out.ctr


def test_fusion_arithmetic(small_prep, small_cfg):
    t, batch = _warm_setup(small_prep, small_cfg, alpha=1.0, beta=1.0)
    with t.backbone.params.frozen(), t.embedding.params.frozen():
        out = t.cvar.loss_warm(batch, t.embedding(batch), t.backbone, np.random.default_rng(0))
    assert out.total.item() == pytest.approx(out.ctr + out.rec + out.w, rel=1e-12)
    assert 0.7 + 1.0 * 0.2 + 1.0 * 0.1 == pytest.approx(1.0)


def test_warm_loss_gradient_wrt_prior_encoder(small_prep, small_cfg):
    t, batch = _warm_setup(small_prep, small_cfg, rows=8)
    cv = t.cvar

    def total():
        with t.backbone.params.frozen(), t.embedding.params.frozen():
            return cv.loss_warm(batch, t.embedding(batch), t.backbone, np.random.default_rng(3)).total

    total().backward()
    for name in ("prior/w0", "prior/b2"):
        p = cv.params[name]
        analytic = p.grad.copy()
        num = numeric_grad(lambda: total().item(), p.data)
        assert rel_error(analytic, num) < FD_RTOL, name
    cv.params.zero_grad()


# --- warm path --------------------------------------------------------------------


def test_warm_step_leaves_backbone_bit_identical(small_prep, small_cfg):
    t, batch = _warm_setup(small_prep, small_cfg)
    before = {n: p.data.tobytes() for n, p in t.backbone.params.items()}
    t.cvar_step(batch, audit=True)
    assert all(before[n] == p.data.tobytes() for n, p in t.backbone.params.items())


def test_warm_embedding_shape(small_prep, small_cfg):
    t, batch = _warm_setup(small_prep, small_cfg)
    _, v_warm, _ = t.cvar.warm_forward(batch, t.embedding(batch), t.backbone, t.cvar.noise(np.random.default_rng(0), 64))
    assert v_warm.shape == (64, 16)


def test_copier_reproduces_backbone_prediction(small_prep, small_cfg):
    """With a decoder that emits v_i exactly, the warm prediction equals the native one."""
    t, _ = _warm_setup(small_prep, small_cfg)
    item_rows = np.flatnonzero(small_prep.encoded.item_ids == small_prep.encoded.item_ids[small_prep.split["old"][0]])
    batch = small_prep.encoded.batch(item_rows[:16])
    bundle = t.embedding(batch)
    zero_params(t.cvar, "dec/w")
    t.cvar.params["dec/b2"].data[:] = bundle.v_i.data[0]
    y = t.backbone(bundle.v_i, bundle.v_X).data
    y_warm, v_warm, _ = t.cvar.warm_forward(batch, bundle, t.backbone, t.cvar.noise(np.random.default_rng(0), len(batch)))
    np.testing.assert_array_equal(v_warm.data, bundle.v_i.data)
    np.testing.assert_array_equal(y_warm.data, y)


def test_trained_copier_on_one_item(small_prep, small_cfg):
    """Overfitting the prior path's reconstruction of one item's vector makes predictions match."""
    t, _ = _warm_setup(small_prep, small_cfg)
    rows = np.flatnonzero(small_prep.encoded.item_ids == small_prep.encoded.item_ids[small_prep.split["old"][0]])[:32]
    batch = small_prep.encoded.batch(rows)
    opt = N.AdamState(learning_rate=0.01)
    cv = t.cvar
    cv.params.freeze([n for n in cv.params.names() if n.startswith("enc/")])
    with t.backbone.params.frozen(), t.embedding.params.frozen():
        bundle = t.embedding(batch)
        for _ in range(400):
            eps = cv.noise(np.random.default_rng(0), len(batch))
            _, v_warm, _ = cv.warm_forward(batch, bundle, t.backbone, eps)
            loss_rec(bundle.v_i, v_warm).backward()
            N.adam_step(opt, cv.params)
        y = t.backbone(bundle.v_i, bundle.v_X).data
        v = cv.generate_warm_embedding(bundle.v_I, 0.0, "mean")
    y_warm = t.backbone(N.Tensor(v), bundle.v_X).data
    np.testing.assert_allclose(y_warm, y, atol=1e-4)


# --- generation ---------------------------------------------------------------------


def test_override_equals_max_frequency_column(small_prep, small_cfg):
    t, batch = _warm_setup(small_prep, small_cfg)
    bundle = t.embedding(batch)
    a = t.cvar.generate_warm_embedding(bundle.v_I, 1.0, "mean")
    prior = t.cvar.encode_prior(bundle.v_I)
    b = t.cvar.decode(prior.mu, np.full(len(batch), 1.0)).data
    np.testing.assert_array_equal(a, b)


def test_mean_mode_is_deterministic(small_prep, small_cfg):
    t, batch = _warm_setup(small_prep, small_cfg)
    v_I = t.embedding(batch).v_I
    assert np.array_equal(t.cvar.generate_warm_embedding(v_I, 1.0, "mean"),
                          t.cvar.generate_warm_embedding(v_I, 1.0, "mean"))


def test_sample_mode_is_seeded(small_prep, small_cfg):
    t, batch = _warm_setup(small_prep, small_cfg)
    v_I = t.embedding(batch).v_I
    a = t.cvar.generate_warm_embedding(v_I, 1.0, "sample", np.random.default_rng(4))
    b = t.cvar.generate_warm_embedding(v_I, 1.0, "sample", np.random.default_rng(4))
    assert np.array_equal(a, b)


def test_frequency_sweep_gives_distinct_embeddings(small_prep, small_cfg):
    t, batch = _warm_setup(small_prep, small_cfg)
    v_I = t.embedding(batch).v_I
    outs = [t.cvar.generate_warm_embedding(v_I, x, "mean") for x in (0.01, 0.1, 0.25, 0.5, 1.0)]
    assert len({o.tobytes() for o in outs}) == 5


@pytest.mark.parametrize("x", [-0.1, 1.5])
def test_override_out_of_range(small_prep, small_cfg, x):
    t, batch = _warm_setup(small_prep, small_cfg)
    with pytest.raises(ValueError):
        t.cvar.generate_warm_embedding(t.embedding(batch).v_I, x, "mean")


def test_checkpoint_refuses_latent_mismatch(tmp_path):
    cv = make_cvar(k=16)
    cv.save(tmp_path / "c.ckpt")
    again = make_cvar(k=16, seed=5)
    again.load(tmp_path / "c.ckpt")
    assert again.params.checksum() == cv.params.checksum()
    with pytest.raises(N.CheckpointError):
        make_cvar(k=8).load(tmp_path / "c.ckpt")
