import numpy as np
import pytest

from maxent_subspace.data import SyntheticSpec, gen_images
from maxent_subspace.errors import DimensionError, FormatError, PayloadLengthError
from maxent_subspace.network import (
    TABLE_SPECS,
    LayerSpec,
    NetworkParams,
    NetworkSpec,
    TrainConfig,
    build_network,
    conv2d,
    conv2d_transpose,
    decode,
    encode,
    fit,
    load_checkpoint,
    loss_and_grads,
    pretrain,
    save_checkpoint,
    table_spec,
    train_joint,
)


def direct_conv(x, w, b, pad_h, pad_w):
    """Plain loop convolution, stride 2, explicit zero padding."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.zeros((n, c, h + sum(pad_h), wd + sum(pad_w)))
    xp[:, :, pad_h[0]:pad_h[0] + h, pad_w[0]:pad_w[0] + wd] = x
    ho, wo = -(-h // 2), -(-wd // 2)
    y = np.zeros((n, o, ho, wo))
    for s in range(n):
        for oc in range(o):
            for i in range(ho):
                for j in range(wo):
                    acc = b[oc]
                    for ic in range(c):
                        for a in range(kh):
                            for bb in range(kw):
                                acc += xp[s, ic, 2 * i + a, 2 * j + bb] * w[oc, ic, a, bb]
                    y[s, oc, i, j] = acc
    return y


def test_conv_matches_direct_loop_4x4():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 1, 4, 4))
    w = rng.standard_normal((2, 1, 3, 3))
    b = rng.standard_normal(2)
    y, _ = conv2d(x, w, b)
    # 4 -> 2 with k=3 needs one row of padding, all after
    np.testing.assert_allclose(y, direct_conv(x, w, b, (0, 1), (0, 1)), atol=1e-12)


def test_conv_matches_direct_loop_odd_sizes():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 7, 5))
    w = rng.standard_normal((4, 3, 5, 3))
    b = rng.standard_normal(4)
    y, _ = conv2d(x, w, b)
    # 7 -> 4: total (4-1)*2+5-7 = 4 -> (2, 2); 5 -> 3: total 2 -> (1, 1)
    np.testing.assert_allclose(y, direct_conv(x, w, b, (2, 2), (1, 1)), atol=1e-12)


def zero_insert_transpose(x, w, b, out_hw, pad_h, pad_w):
    """Transposed conv as zero insertion followed by a full correlation
    with the spatially flipped kernel, then cropping the padding."""
    n, c, h, wd = x.shape
    _, o, kh, kw = w.shape
    up = np.zeros((n, c, 2 * h - 1, 2 * wd - 1))
    up[:, :, ::2, ::2] = x
    up = np.pad(up, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    flipped = w[:, :, ::-1, ::-1]
    full_h, full_w = up.shape[2] - kh + 1, up.shape[3] - kw + 1
    full = np.zeros((n, o, full_h, full_w))
    for s in range(n):
        for oc in range(o):
            for i in range(full_h):
                for j in range(full_w):
                    full[s, oc, i, j] = np.sum(up[s, :, i:i + kh, j:j + kw] * flipped[:, oc])
    H, W = out_hw
    out = np.zeros((n, o, H, W))
    avail_h = min(H, full_h - pad_h[0])
    avail_w = min(W, full_w - pad_w[0])
    out[:, :, :avail_h, :avail_w] = full[:, :, pad_h[0]:pad_h[0] + avail_h, pad_w[0]:pad_w[0] + avail_w]
    return out + b[None, :, None, None]


def test_transposed_conv_matches_zero_insertion_4x4():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 2, 2, 2))
    w = rng.standard_normal((2, 1, 3, 3))
    b = rng.standard_normal(1)
    y, _ = conv2d_transpose(x, w, b, (4, 4))
    np.testing.assert_allclose(y, zero_insert_transpose(x, w, b, (4, 4), (0, 1), (0, 1)), atol=1e-12)


def test_transposed_conv_matches_zero_insertion_odd():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3, 4, 3))
    w = rng.standard_normal((3, 2, 5, 3))
    b = rng.standard_normal(2)
    y, _ = conv2d_transpose(x, w, b, (7, 5))
    np.testing.assert_allclose(y, zero_insert_transpose(x, w, b, (7, 5), (2, 2), (1, 1)), atol=1e-12)


def test_transposed_conv_is_adjoint():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 3, 9, 6))
    w = rng.standard_normal((5, 3, 3, 3))
    y, _ = conv2d(x, w, np.zeros(5))
    u = rng.standard_normal(y.shape)
    xt, _ = conv2d_transpose(u, w, np.zeros(3), (9, 6))
    assert abs(np.sum(y * u) - np.sum(x * xt)) <= 1e-10 * np.abs(y * u).sum()


def test_toy_spec_shapes():
    spec = table_spec("toy")
    assert spec.latent_shape == (15, 16, 16)
    assert spec.latent_dim == 3840
    params = build_network(spec, 0)
    latent, Z = encode(np.zeros((2, 1, 32, 32)), params)
    assert latent.shape == (2, 15, 16, 16)
    assert Z.shape == (3840, 2)
    assert not np.any(Z)


@pytest.mark.parametrize("name", sorted(TABLE_SPECS))
def test_round_trip_shape_every_table_spec(name):
    spec = table_spec(name)
    params = build_network(spec, 1)
    X = np.random.default_rng(0).uniform(size=(2, 1) + spec.input_shape)
    latent, Z = encode(X, params)
    assert Z.shape == (spec.latent_dim, 2)
    assert decode(latent, params).shape == X.shape


def test_zero_input_decodes_to_zero():
    params = build_network(table_spec("orl"), 0)
    latent, _ = encode(np.zeros((3, 1, 32, 32)), params)
    assert np.array_equal(decode(latent, params), np.zeros((3, 1, 32, 32)))


def test_flatten_order_channel_then_row_then_column():
    params = build_network(NetworkSpec.mirrored((6, 6), [3], [2]), 0)
    X = np.random.default_rng(5).uniform(size=(2, 1, 6, 6))
    latent, Z = encode(X, params)
    c, h, w = 1, 2, 0
    assert Z[c * 9 + h * 3 + w, 1] == latent[1, c, h, w]


def test_build_network_determinism_and_variance():
    spec = table_spec("coil100")
    a, b = build_network(spec, 3), build_network(spec, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a.kernels, b.kernels))
    assert all(not np.any(x) for x in a.biases)
    k = a.kernels[0]  # 50 x 1 x 5 x 5, fan_in 25
    assert abs(k.var() - 2 / 25) <= 0.1 * 2 / 25
    dec = a.kernels[1]  # 50 x 1 x 5 x 5 transposed, fan_in 5*5*50
    assert abs(dec.var() - 2 / 1250) <= 0.3 * 2 / 1250


def test_spec_validation():
    with pytest.raises(ValueError):
        LayerSpec((0, 3), 1, 2)
    with pytest.raises(ValueError):
        LayerSpec((3, 3), 1, 2, stride=1)
    enc = [LayerSpec((3, 3), 1, 4)]
    with pytest.raises(ValueError):
        NetworkSpec((8, 8), enc, [LayerSpec((3, 3), 5, 1, relu=False, transposed=True)])
    with pytest.raises(ValueError):
        NetworkSpec((8, 8), enc, [])


def test_encode_shape_mismatch():
    params = build_network(table_spec("usps"), 0)
    with pytest.raises(DimensionError):
        encode(np.zeros((2, 1, 15, 16)), params)
    with pytest.raises(DimensionError):
        decode(np.zeros((2, 3, 2, 2)), params)


def small_problem(seed=0):
    spec = NetworkSpec.mirrored((8, 8), [3, 3], [3, 4])
    params = build_network(spec, seed)
    rng = np.random.default_rng(seed)
    # nonzero biases keep pre-activations off the ReLU kink at exactly 0
    params.biases = [rng.uniform(-0.1, 0.1, b.shape) for b in params.biases]
    X = rng.uniform(size=(2, 1, 8, 8))
    C = rng.uniform(0.1, 1.0, (2, 2))
    return spec, params, X, C


def fd_check(X, params, C, cfg, points, rng, h=1e-5):
    _, grads, grad_C = loss_and_grads(X, params, C, cfg)
    tensors = params.tensors()
    names = list(tensors)
    worst = 0.0
    for _ in range(points):
        name = names[rng.integers(len(names))]
        idx = tuple(int(rng.integers(s)) for s in tensors[name].shape)
        vals = []
        for sign in (1, -1):
            t = {k: v.copy() for k, v in tensors.items()}
            t[name][idx] += sign * h
            vals.append(loss_and_grads(X, NetworkParams.from_tensors(params.spec, t), C, cfg)[0].total)
        fd = (vals[0] - vals[1]) / (2 * h)
        worst = max(worst, abs(fd - grads[name][idx]) / max(abs(fd), abs(grads[name][idx]), 1e-6))
    for i in range(C.shape[0]):
        for j in range(C.shape[1]):
            vals = []
            for sign in (1, -1):
                Cs = C.copy()
                Cs[i, j] += sign * h
                vals.append(loss_and_grads(X, params, Cs, cfg)[0].total)
            fd = (vals[0] - vals[1]) / (2 * h)
            worst = max(worst, abs(fd - grad_C[i, j]) / max(abs(fd), 1e-6))
    return worst


@pytest.mark.parametrize("mode", ["decoupled", "coupled"])
def test_gradients_match_finite_differences(mode):
    _, params, X, C = small_problem(1)
    cfg = TrainConfig(mode=mode, lambda1=0.6, lambda2=0.4)
    assert fd_check(X, params, C, cfg, 20, np.random.default_rng(2)) <= 1e-3


@pytest.mark.parametrize("reg", ["l1", "fro", "nuc"])
def test_gradients_with_baseline_penalties(reg):
    # l1 / nuclear are handled by the prox step, so only the smooth part counts
    _, params, X, C = small_problem(2)
    cfg = TrainConfig(lambda1=0.6 if reg == "fro" else 1e-30, lambda2=0.4, regularizer=reg)
    assert fd_check(X, params, C, cfg, 10, np.random.default_rng(3)) <= 1e-3


def test_zero_weights_give_plain_autoencoder():
    _, params, X, C = small_problem(3)
    lc, _, grad_C = loss_and_grads(X, params, C, TrainConfig(lambda1=0, lambda2=0))
    latent, _ = encode(X, params)
    assert lc.total == pytest.approx(0.5 * np.sum((decode(latent, params) - X) ** 2), rel=1e-14)
    assert not np.any(grad_C)


def test_decoupled_and_coupled_reconstruction():
    _, params, X, C = small_problem(4)
    dec = loss_and_grads(X, params, C, TrainConfig(mode="decoupled"))[0]
    cou = loss_and_grads(X, params, C, TrainConfig(mode="coupled"))[0]
    assert dec.reconstruction != cou.reconstruction
    eye = np.eye(2)
    cfg = dict(lambda1=1e-30)
    a = loss_and_grads(X, params, eye + 0, TrainConfig(mode="decoupled", regularizer="fro", **cfg))[0]
    b = loss_and_grads(X, params, eye + 0, TrainConfig(mode="coupled", regularizer="fro", **cfg))[0]
    assert a.reconstruction == b.reconstruction


def test_decoupling_invariant():
    _, params, X, C = small_problem(5)
    C2 = C + 0.3
    for mode, same in (("decoupled", True), ("coupled", False)):
        cfg = TrainConfig(mode=mode)
        r1 = loss_and_grads(X, params, C, cfg)[0].reconstruction
        r2 = loss_and_grads(X, params, C2, cfg)[0].reconstruction
        assert (r1 == r2) is same


def test_infeasible_affinity_rejected():
    _, params, X, C = small_problem(6)
    C[0, 0] = 0.0
    with pytest.raises(ValueError):
        loss_and_grads(X, params, C, TrainConfig())


def test_pretrain_halves_reconstruction_loss():
    ds = gen_images(SyntheticSpec((3, 3, 3), (11, 11, 10), 30, seed=0), 16)
    assert ds.X.shape == (32, 1, 16, 16)
    params = build_network(table_spec("toy", (16, 16)), 0)
    _, hist = pretrain(ds.X, params, TrainConfig(pretrain_steps=500))
    assert len(hist) == 500
    assert hist.reconstruction[-1] <= 0.5 * hist.reconstruction[0]


def test_pretrain_requires_steps():
    _, params, X, _ = small_problem(7)
    with pytest.raises(ValueError):
        pretrain(X, params, TrainConfig(pretrain_steps=0))


def test_zero_steps_leave_params_unchanged():
    _, params, X, C = small_problem(8)
    new, C2, hist = train_joint(X, params, C, TrainConfig(finetune_steps=0))
    assert len(hist) == 0
    assert all(np.array_equal(a, b) for a, b in zip(new.kernels, params.kernels))
    assert np.array_equal(C2, C)


def test_train_joint_without_weights_equals_pretrain():
    _, params, X, C = small_problem(9)
    cfg = TrainConfig(pretrain_steps=25, finetune_steps=25, lambda1=0, lambda2=0)
    p1, h1 = pretrain(X, params, cfg)
    p2, _, h2 = train_joint(X, params, C, cfg)
    assert h1.reconstruction == h2.reconstruction
    assert all(np.array_equal(a, b) for a, b in zip(p1.kernels + p1.biases, p2.kernels + p2.biases))


def test_train_joint_decreases_total_loss_and_is_deterministic():
    ds = gen_images(SyntheticSpec.uniform(3, 3, 12, 30, seed=1), 16)
    spec = table_spec("toy", (16, 16))
    cfg = TrainConfig(pretrain_steps=50, finetune_steps=100)
    r1 = fit(ds.X, spec, cfg)
    r2 = fit(ds.X, spec, cfg)
    h = r1.finetune_history
    assert len(h) == 100 and len(h.regularizer) == 100
    assert h.total[-1] <= h.total[0]
    assert h.total == r2.finetune_history.total
    assert np.array_equal(r1.C, r2.C)
    assert r1.C.min() >= cfg.epsilon


def test_coupled_training_keeps_affinity_feasible():
    _, params, X, C = small_problem(10)
    _, C2, hist = train_joint(X, params, C, TrainConfig(mode="coupled", finetune_steps=20, learning_rate=0.05))
    assert C2.min() >= 1e-12 and len(hist) == 20


def test_checkpoint_round_trip(tmp_path):
    spec = table_spec("orl")
    params = build_network(spec, 11)
    path = tmp_path / "net.mescnet"
    save_checkpoint(path, params)
    raw = path.read_bytes()
    assert raw[:8] == b"MESCNET1"
    loaded = load_checkpoint(path, spec)
    for a, b in zip(params.kernels + params.biases, loaded.kernels + loaded.biases):
        assert np.array_equal(a, b)
    path.write_bytes(raw[:-8])
    with pytest.raises(PayloadLengthError):
        load_checkpoint(path, spec)
    path.write_bytes(raw)
    with pytest.raises(FormatError):
        load_checkpoint(path, table_spec("toy"))
