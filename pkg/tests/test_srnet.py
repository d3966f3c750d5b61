import numpy as np
import pytest

import oracles
from vsrmc.core import FlowField
from vsrmc.errors import ConfigError, DimensionMismatch, InvalidArgument, TrainingDiverged
from vsrmc.srnet import (LayerSpec, MomentumSGD, Sample, SrNetwork, Topology, TrainConfig, conv2d_valid,
                         load_checkpoint, mse_loss, save_checkpoint, smoothness_loss, train)
from vsrmc.srnet.checkpoint import decode, encode
from vsrmc.srnet.train import loss_and_grads
from vsrmc.errors import BadMagic, TruncatedPayload

SMALL = Topology(3, 2, LayerSpec(3, 3, True), (LayerSpec(4, 3, True), LayerSpec(1, 1, False)))


def small_net(seed=0, shared=False, dtype=np.float64):
    topo = Topology(3, 2, LayerSpec(3, 3, True), (LayerSpec(4, 3, True), LayerSpec(1, 1, False)), shared)
    return SrNetwork.init(topo, seed=seed, std=0.4, dtype=dtype)


def test_topology_defaults_and_shrink():
    t = Topology()
    assert t.frame_layer == LayerSpec(64, 9, True)
    assert [l.kernel for l in t.layers] == [5, 5]
    assert t.shrink == 4 + 2 + 2
    with pytest.raises(InvalidArgument):
        LayerSpec(4, 4)
    with pytest.raises(InvalidArgument):
        Topology(layers=(LayerSpec(2, 3),))


def test_init_statistics():
    net = SrNetwork.init(Topology(3, 1), seed=3)
    w = net.frame_layers[0].weight
    assert len(net.frame_layers) == 3
    assert abs(w.std() - 1e-3) < 1e-4 and abs(w.mean()) < 1e-4
    assert not any(l.bias.any() for l in net.frame_layers + net.layers)
    assert len(SrNetwork.init(Topology(3, 1, shared_first=True)).frame_layers) == 1


def test_conv_matches_loop_oracle(rng):
    for _ in range(3):
        x = rng.normal(size=(3, 9, 11))
        w = rng.normal(size=(4, 3, 3, 5))
        b = rng.normal(size=4)
        np.testing.assert_allclose(conv2d_valid(x, w, b), oracles.conv_direct(x, w, b), atol=1e-10)


def test_forward_matches_direct_evaluation(rng):
    net = small_net(1, dtype=np.float32)
    x = rng.random((6, 12, 12))
    feats = []
    for k in range(3):
        l = net.frame_layers[k]
        feats.append(np.maximum(oracles.conv_direct(x[2 * k:2 * k + 2], l.weight, l.bias), 0))
    h = np.concatenate(feats)
    for l in net.layers:
        h = oracles.conv_direct(h, l.weight, l.bias)
        h = np.maximum(h, 0) if l.relu else h
    res = net.forward(x)
    assert res.shrink == 2
    assert res.output.shape == (8, 8)
    np.testing.assert_allclose(res.output, h[0], atol=1e-5)


def test_zero_net_outputs_zero(rng):
    net = SrNetwork.init(SMALL, std=0.0)
    assert not net(rng.random((6, 10, 10))).any()


def test_identity_net_returns_center_channel(rng):
    net = SrNetwork.init(Topology(3, 1, None, (LayerSpec(1, 1, False),)), std=0.0, dtype=np.float64)
    net.layers[0].weight[0, 1, 0, 0] = 1.0
    x = rng.random((3, 7, 6))
    np.testing.assert_array_equal(net(x), x[1])


def test_forward_rejects_wrong_channels(rng):
    with pytest.raises(DimensionMismatch):
        small_net().forward(rng.random((5, 10, 10)))


def test_mse_loss_closed_forms(rng):
    t = rng.random((6, 6))
    loss, g = mse_loss(t, t)
    assert loss == 0 and not g.any()
    loss, g = mse_loss(t + 0.1, t)
    assert loss == pytest.approx(0.01, abs=1e-12)
    loss, g = mse_loss(t + 0.1, t, border=2)
    assert loss == pytest.approx(0.01, abs=1e-12)
    assert not g[:2].any() and not g[:, -2:].any()
    np.testing.assert_allclose(g[2:4, 2:4], 2 * 0.1 / 4)


def test_mse_gradient_finite_differences(rng):
    e, t = rng.random((2, 7, 7))
    _, g = mse_loss(e, t, border=1)
    num = oracles.central_diff(lambda: mse_loss(e, t, border=1)[0], e)
    assert oracles.rel_error(g, num) < 1e-5


def test_smoothness_closed_forms():
    img = np.full((5, 6), 0.3)
    assert smoothness_loss(FlowField.constant((5, 6), 2, -1), img)[0] == 0
    ramp = FlowField(np.tile(np.arange(6.0), (5, 1)), np.zeros((5, 6)))
    assert smoothness_loss(ramp, img)[0] == pytest.approx(5 * 5)


def test_smoothness_edge_weighting():
    img = np.zeros((1, 3))
    img[0, 2] = 2.0
    flow = FlowField(np.array([[0.0, 1.0, 3.0]]), np.zeros((1, 3)))
    assert smoothness_loss(flow, img)[0] == pytest.approx(1.0 + np.exp(-2.0) * 2.0)


def smoothness_instance(rng, size=6):
    # distinct flow differences keep every |.| away from its kink
    u = np.cumsum(rng.uniform(0.1, 1.0, (size, size)) * rng.choice([-1, 1], (size, size)), axis=1)
    v = np.cumsum(rng.uniform(0.1, 1.0, (size, size)), axis=0)
    return rng.random((size, size)), u, v


def test_smoothness_gradient_finite_differences(rng):
    img, u, v = smoothness_instance(rng)
    _, g = smoothness_loss(FlowField(u, v), img)
    loss = lambda: smoothness_loss(FlowField(u, v), img)[0]
    assert oracles.rel_error(g.u, oracles.central_diff(loss, u)) < 1e-4
    assert oracles.rel_error(g.v, oracles.central_diff(loss, v)) < 1e-4


def test_backward_zero_upstream(rng):
    net = small_net()
    res = net.forward(rng.random((6, 9, 9)))
    grads, d_stack = net.backward(res, np.zeros_like(res.output))
    assert not any(g.any() for g in grads) and not d_stack.any()


def test_single_1x1_weight_gradient(rng):
    net = SrNetwork.init(Topology(1, 1, None, (LayerSpec(1, 1, False),)), std=0.5, dtype=np.float64)
    x = rng.random((1, 4, 5))
    up = rng.random((4, 5))
    grads, d_stack = net.backward(net.forward(x), up)
    assert grads[0][0, 0, 0, 0] == pytest.approx(np.sum(up * x[0]))
    assert grads[1][0] == pytest.approx(up.sum())
    np.testing.assert_allclose(d_stack[0], up * net.layers[0].weight[0, 0, 0, 0])


def kink_free_instance(rng, shared, margin=0.02):
    """Random net and input whose ReLU pre-activations all stay ``margin`` away from 0."""
    while True:
        net = small_net(int(rng.integers(1 << 30)), shared)
        for p in net.parameters()[1::2]:
            p[...] = rng.normal(0, 0.3, p.shape)
        x = rng.random((6, 7, 7))
        res = net.forward(x)
        pre = res.cache["frame_pre"] + res.cache["pre"][:-1]
        if min(np.abs(z).min() for z in pre) > margin:
            return net, x, rng.random(res.output.shape)


@pytest.mark.parametrize("shared", [False, True])
def test_backward_matches_finite_differences(rng, shared):
    net, x, t = kink_free_instance(rng, shared)
    _, grads = loss_and_grads(net, x, t)
    res = net.forward(x)
    _, d_stack = net.backward(res, mse_loss(res.output, t)[1])
    loss = lambda: loss_and_grads(net, x, t)[0]
    for p, g in zip(net.parameters(), grads):
        assert oracles.rel_error(g, oracles.central_diff(loss, p)) < 1e-4
    assert oracles.rel_error(d_stack, oracles.central_diff(loss, x)) < 1e-4


def test_train_config_defaults_mirror_published_settings():
    img = TrainConfig.published_defaults("image")
    patch = TrainConfig.published_defaults("patch")
    assert (img.learning_rate, img.momentum, img.weight_decay) == (1e-5, 0.9, 4e-4)
    assert (img.lr_policy, img.gamma, img.step, img.batch_size, img.iterations) == ("multistep", 0.5, 50_000, 2, 300_000)
    assert (patch.learning_rate, patch.momentum, patch.weight_decay) == (1e-5, 0.9, 5e-4)
    assert (patch.lr_policy, patch.batch_size, patch.patch_size, patch.iterations) == ("fixed", 240, 36, 200_000)


def test_multistep_halves_exactly():
    cfg = TrainConfig(learning_rate=0.1, step=50_000)
    assert cfg.lr_at(0) == 0.1 and cfg.lr_at(49_999) == 0.1
    assert cfg.lr_at(50_000) == 0.05 and cfg.lr_at(99_999) == 0.05
    assert cfg.lr_at(100_000) == 0.025
    assert TrainConfig(lr_policy="fixed").lr_at(10 ** 6) == 1e-5


def test_config_validation_lists_every_problem():
    with pytest.raises(ConfigError) as err:
        TrainConfig(learning_rate=-1, gamma=2.0, lr_policy="cosine", batch_size=0).validate()
    assert len(err.value.problems) == 4


def test_momentum_sgd_scalar_quadratic():
    c, target, lr, mu, wd = 3.0, 1.5, 0.05, 0.9, 0.01
    p = np.array([4.0])
    opt = MomentumSGD([p], mu, wd)
    w, v = 4.0, 0.0
    for _ in range(200):
        opt.step([c * (p - target)], lr)
        v = mu * v - lr * (c * (w - target) + wd * w)
        w = w + v
        assert abs(p[0] - w) <= 1e-12


def _scalar_dataset():
    return [Sample(np.ones((1, 1, 1)), np.full((1, 1), 0.75))]


def test_train_matches_hand_rolled_recurrence():
    net = SrNetwork.init(Topology(1, 1, None, (LayerSpec(1, 1, False),)), std=0.0, dtype=np.float64)
    net.layers[0].weight[...] = 0.2
    cfg = TrainConfig(learning_rate=0.1, momentum=0.9, weight_decay=0.001, batch_size=1,
                      lr_policy="multistep", gamma=0.5, step=7, iterations=30, log_every=1)
    res = train(net, _scalar_dataset(), cfg, seed=0)
    w, b, vw, vb = 0.2, 0.0, 0.0, 0.0
    for it in range(30):
        lr = 0.1 * 0.5 ** (it // 7)
        assert res.trace[it][1] == lr
        g = 2 * (w + b - 0.75)
        vw = 0.9 * vw - lr * (g + 0.001 * w)
        vb = 0.9 * vb - lr * (g + 0.001 * b)
        w, b = w + vw, b + vb
    assert abs(net.layers[0].weight[0, 0, 0, 0] - w) < 1e-12
    assert abs(net.layers[0].bias[0] - b) < 1e-12


def test_zero_learning_rate_keeps_parameters(rng):
    net = small_net(dtype=np.float32)
    before = [p.copy() for p in net.parameters()]
    ds = [Sample(rng.random((6, 10, 10)), rng.random((10, 10)))]
    train(net, ds, TrainConfig(learning_rate=0.0, iterations=5, batch_size=2), seed=1)
    for a, b in zip(before, net.parameters()):
        np.testing.assert_array_equal(a, b)


def test_train_is_deterministic(rng):
    ds = [Sample(rng.random((6, 12, 12)), rng.random((12, 12))) for _ in range(3)]
    cfg = TrainConfig(learning_rate=0.01, iterations=20, batch_size=2, log_every=1)
    runs = []
    for _ in range(2):
        net = small_net(5, dtype=np.float32)
        res = train(net, ds, cfg, seed=9)
        runs.append((res.trace, [p.copy() for p in net.parameters()]))
    assert runs[0][0] == runs[1][0]
    for a, b in zip(runs[0][1], runs[1][1]):
        np.testing.assert_array_equal(a, b)


def test_patch_mode_trains(rng):
    ds = [Sample(rng.random((6, 20, 20)), rng.random((20, 20)))]
    cfg = TrainConfig(learning_rate=0.01, iterations=3, batch_size=2, input_mode="patch", patch_size=8)
    res = train(small_net(), ds, cfg, seed=0)
    assert len(res.trace) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_errors(rng):
    with pytest.raises(InvalidArgument):
        train(small_net(), [], TrainConfig(iterations=1))
    ds = [Sample(np.full((6, 8, 8), 1e30), np.zeros((8, 8)))]
    with pytest.raises(TrainingDiverged):
        train(small_net(), ds, TrainConfig(learning_rate=1.0, iterations=3), seed=0)


def test_checkpoint_roundtrip_is_bitwise(tmp_path, rng):
    net = SrNetwork.init(Topology(3, 3, LayerSpec(4, 3), (LayerSpec(3, 3), LayerSpec(1, 3, False))), seed=4, std=0.3)
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, path)
    loaded = load_checkpoint(path)
    assert loaded.topology == net.topology
    for a, b in zip(net.parameters(), loaded.parameters()):
        np.testing.assert_array_equal(a, b)
    x = rng.random((9, 14, 14))
    np.testing.assert_array_equal(net(x), loaded(x))
    assert encode(loaded) == path.read_bytes()


def test_checkpoint_size_and_errors():
    net = SrNetwork.init(Topology(1, 1, None, (LayerSpec(1, 1, False),)), std=0.0)
    buf = encode(net)
    assert len(buf) == 4 + 14 + 4 + 9 + 4 * 2
    with pytest.raises(BadMagic):
        decode(b"XXXX" + buf[4:])
    with pytest.raises(TruncatedPayload):
        decode(buf[:-2])
