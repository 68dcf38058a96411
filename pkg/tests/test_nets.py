"""Forward/backward oracles, optimizer closed forms, and checkpoint round-trips."""

import json
import math

import numpy as np
import pytest

import bida.nets as N


def tiny_net(head: N.Head = N.Head.LINEAR) -> N.NetworkParams:
    """Fixed 2-3-2 net used by the hand-computed oracles."""
    w1 = np.array([[0.1, -0.2], [0.3, 0.4], [-0.5, 0.6]])
    b1 = np.array([0.01, -0.02, 0.03])
    w2 = np.array([[1.0, -1.0, 0.5], [0.2, 0.3, -0.4]])
    b2 = np.array([0.0, 0.1])
    return N.NetworkParams((2, 3, 2), [w1, w2], [b1, b2], N.Activation.TANH, head)


def rand_net(rng: np.random.Generator) -> tuple[N.NetworkParams, np.ndarray]:
    depth = int(rng.integers(2, 5))
    dims = tuple(int(rng.integers(2, 7)) for _ in range(depth + 1))
    act = N.Activation.TANH if rng.random() < 0.5 else N.Activation.RELU
    head = N.Head.SOFTMAX if rng.random() < 0.5 else N.Head.LINEAR
    params = N.init_params(dims, act, head, seed=int(rng.integers(0, 2**31)))
    for b in params.biases:
        b[:] = 0.1 * rng.normal(size=b.shape)
    x = rng.normal(size=dims[0])
    return params, x


def _kink_distance(params: N.NetworkParams, x: np.ndarray) -> float:
    """Smallest |pre-activation| across hidden layers (kink proximity for relu)."""
    h = x
    dist = math.inf
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        if i == params.n_layers - 1:
            break
        dist = min(dist, float(np.min(np.abs(z))))
        h = np.tanh(z) if params.activation == N.Activation.TANH else np.maximum(z, 0.0)
    return dist


# ---------------------------------------------------------------------------
# forward


def test_forward_hand_computed_2_3_2():
    params = tiny_net()
    x = np.array([0.5, -1.0])
    h = [math.tanh(0.1 * 0.5 + -0.2 * -1.0 + 0.01),
         math.tanh(0.3 * 0.5 + 0.4 * -1.0 + -0.02),
         math.tanh(-0.5 * 0.5 + 0.6 * -1.0 + 0.03)]
    expect = [1.0 * h[0] - 1.0 * h[1] + 0.5 * h[2] + 0.0,
              0.2 * h[0] + 0.3 * h[1] - 0.4 * h[2] + 0.1]
    out = N.forward(params, x)
    assert out == pytest.approx(expect, abs=1e-12)

    soft = N.forward(tiny_net(N.Head.SOFTMAX), x)
    exps = [math.exp(v - max(expect)) for v in expect]
    assert soft == pytest.approx([e / sum(exps) for e in exps], abs=1e-12)


def test_zero_weights_softmax_uniform():
    params = N.NetworkParams((4, 3), [np.zeros((3, 4))], [np.zeros(3)],
                             N.Activation.TANH, N.Head.SOFTMAX)
    out = N.forward(params, np.array([5.0, -2.0, 0.0, 9.0]))
    assert out == pytest.approx([1 / 3] * 3, abs=1e-15)


def test_identity_linear_layer():
    params = N.NetworkParams((3, 3), [np.eye(3)], [np.zeros(3)],
                             N.Activation.RELU, N.Head.LINEAR)
    x = np.array([1.5, -2.0, 0.25])
    assert np.array_equal(N.forward(params, x), x)


def test_forward_batch_matches_rows():
    rng = np.random.default_rng(3)
    params, _ = rand_net(rng)
    batch = rng.normal(size=(7, params.layer_dims[0]))
    full = N.forward(params, batch)
    for i in range(7):
        assert full[i] == pytest.approx(N.forward(params, batch[i]), abs=1e-15)


def test_softmax_simplex_many_nets():
    rng = np.random.default_rng(11)
    for _ in range(50):
        params, x = rand_net(rng)
        params.head = N.Head.SOFTMAX
        out = N.forward(params, x * 10.0)
        assert np.all(out >= 0.0)
        assert abs(out.sum() - 1.0) < 1e-6


def test_softmax_extreme_logits_stable():
    params = N.NetworkParams((2, 2), [np.array([[500.0, 0.0], [0.0, -500.0]])],
                             [np.zeros(2)], N.Activation.TANH, N.Head.SOFTMAX)
    out = N.forward(params, np.array([2.0, 2.0]))
    assert np.isfinite(out).all()
    assert out.sum() == pytest.approx(1.0, abs=1e-12)


def test_dimension_errors():
    params = tiny_net()
    with pytest.raises(N.DimensionError):
        N.forward(params, np.zeros(3))
    with pytest.raises(N.DimensionError):
        N.backward(params, np.zeros(2), np.zeros(3))
    bad = N.NetworkParams((2, 3, 2), [np.zeros((3, 2)), np.zeros((2, 2))],
                          [np.zeros(3), np.zeros(2)])
    with pytest.raises(N.DimensionError):
        bad.validate()
    nonfinite = tiny_net()
    nonfinite.weights[0][0, 0] = math.nan
    with pytest.raises(N.DimensionError):
        nonfinite.validate()


# ---------------------------------------------------------------------------
# backward


def test_backward_zero_grad_gives_zero():
    params = tiny_net(N.Head.SOFTMAX)
    grads = N.backward(params, np.array([0.5, -1.0]), np.zeros(2))
    for g in grads.weights + grads.biases:
        assert np.all(g == 0.0)


def test_backward_linear_regression_closed_form():
    w = np.array([[0.5, -1.0, 2.0]])
    b = np.array([0.25])
    params = N.NetworkParams((3, 1), [w], [b])
    x = np.array([1.0, 2.0, -0.5])
    y = 3.0
    out = float(N.forward(params, x)[0])
    residual = out - y
    grads = N.backward(params, x, np.array([residual]))
    assert grads.weights[0] == pytest.approx(np.outer([residual], x), abs=1e-15)
    assert grads.biases[0] == pytest.approx([residual], abs=1e-15)


def test_backward_batch_is_sum_of_rows():
    rng = np.random.default_rng(17)
    params, _ = rand_net(rng)
    batch = rng.normal(size=(5, params.layer_dims[0]))
    gout = rng.normal(size=(5, params.layer_dims[-1]))
    whole = N.backward(params, batch, gout)
    acc = N.Gradients.zeros_like(params)
    for i in range(5):
        acc.add_(N.backward(params, batch[i], gout[i]))
    for a, b in zip(whole.weights + whole.biases, acc.weights + acc.biases):
        assert a == pytest.approx(b, abs=1e-12)


def _numeric_grads(params: N.NetworkParams, x: np.ndarray, g: np.ndarray,
                   h: float = 1e-5) -> N.Gradients:
    def loss() -> float:
        return float(np.dot(N.forward(params, x), g))

    num = N.Gradients.zeros_like(params)
    for store, out in ((params.weights, num.weights), (params.biases, num.biases)):
        for arr, slot in zip(store, out):
            flat = arr.reshape(-1)
            tgt = slot.reshape(-1)
            for k in range(flat.size):
                keep = flat[k]
                flat[k] = keep + h
                hi = loss()
                flat[k] = keep - h
                lo = loss()
                flat[k] = keep
                tgt[k] = (hi - lo) / (2.0 * h)
    return num


def max_rel_error(a: N.Gradients, b: N.Gradients) -> float:
    worst = 0.0
    for ga, gb in zip(a.weights + a.biases, b.weights + b.biases):
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(gb)), 1e-3)
        worst = max(worst, float(np.max(np.abs(ga - gb) / denom)))
    return worst


def test_gradient_check_hundred_random_nets():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        params, x = rand_net(rng)
        # the difference quotient is ill-defined astride a relu kink; keep
        # pre-activations well clear of zero so the oracle itself is valid
        while params.activation == N.Activation.RELU and _kink_distance(params, x) < 1e-3:
            x = rng.normal(size=params.layer_dims[0])
        g = rng.normal(size=params.layer_dims[-1])
        analytic = N.backward(params, x, g)
        numeric = _numeric_grads(params, x, g)
        worst = max(worst, max_rel_error(analytic, numeric))
    assert worst < 1e-4, f"worst relative gradient error {worst}"


# ---------------------------------------------------------------------------
# optimizer


def test_adam_zero_grads_no_motion():
    params = N.init_params((3, 4, 2), seed=5)
    before = params.copy()
    state = N.OptimizerState.for_params(params, learning_rate=0.1)
    N.optimizer_step(params, N.Gradients.zeros_like(params), state)
    assert state.step_count == 1
    for w0, w1 in zip(before.weights, params.weights):
        assert np.array_equal(w0, w1)


def test_adam_single_step_closed_form():
    params = N.NetworkParams((2, 1), [np.array([[1.0, -2.0]])], [np.array([0.5])])
    state = N.OptimizerState.for_params(params, learning_rate=0.01,
                                        beta1=0.9, beta2=0.999, epsilon=1e-8)
    g = np.array([[0.3, -0.7]])
    gb = np.array([0.2])
    N.optimizer_step(params, N.Gradients([g.copy()], [gb.copy()]), state)
    # bias correction makes the first step  -lr * g / (|g| + eps)
    expect_w = np.array([[1.0, -2.0]]) - 0.01 * g / (np.abs(g) + 1e-8)
    expect_b = np.array([0.5]) - 0.01 * gb / (np.abs(gb) + 1e-8)
    assert params.weights[0] == pytest.approx(expect_w, abs=1e-12)
    assert params.biases[0] == pytest.approx(expect_b, abs=1e-12)
    assert state.m_weights[0] == pytest.approx(0.1 * g, abs=1e-15)
    assert state.v_weights[0] == pytest.approx(0.001 * g * g, abs=1e-15)


def test_adam_moments_decay_on_zero_grad():
    params = N.init_params((2, 2), seed=1)
    state = N.OptimizerState.for_params(params)
    g = N.Gradients([np.ones((2, 2))], [np.ones(2)])
    N.optimizer_step(params, g, state)
    m1 = state.m_weights[0].copy()
    v1 = state.v_weights[0].copy()
    N.optimizer_step(params, N.Gradients.zeros_like(params), state)
    assert state.m_weights[0] == pytest.approx(0.9 * m1, abs=1e-15)
    assert state.v_weights[0] == pytest.approx(0.999 * v1, abs=1e-15)


def test_adam_deterministic():
    def run() -> list[float]:
        params = N.init_params((3, 5, 2), seed=9)
        state = N.OptimizerState.for_params(params, learning_rate=0.05)
        rng = np.random.default_rng(4)
        for _ in range(20):
            x = rng.normal(size=3)
            g = rng.normal(size=2)
            N.optimizer_step(params, N.backward(params, x, g), state)
        return [float(w.sum()) for w in params.weights]

    assert run() == run()


def test_adam_descends_quadratic():
    params = N.NetworkParams((1, 1), [np.array([[4.0]])], [np.array([0.0])])
    state = N.OptimizerState.for_params(params, learning_rate=0.1)
    for _ in range(400):
        w = params.weights[0][0, 0]
        N.optimizer_step(params, N.Gradients([np.array([[2.0 * w]])],
                                             [np.zeros(1)]), state)
    assert abs(params.weights[0][0, 0]) < 1e-3


def test_optimizer_shape_mismatch():
    params = N.init_params((2, 2), seed=0)
    state = N.OptimizerState.for_params(params)
    bad = N.Gradients([np.zeros((3, 2))], [np.zeros(2)])
    with pytest.raises(N.DimensionError):
        N.optimizer_step(params, bad, state)


# ---------------------------------------------------------------------------
# init and checkpointing


def test_init_bounds_and_seeding():
    params = N.init_params((10, 20, 5), seed=42)
    again = N.init_params((10, 20, 5), seed=42)
    other = N.init_params((10, 20, 5), seed=43)
    for w, w2, w3, bound in zip(params.weights, again.weights, other.weights,
                                (math.sqrt(6 / 30), math.sqrt(6 / 25))):
        assert np.array_equal(w, w2)
        assert not np.array_equal(w, w3)
        assert np.max(np.abs(w)) <= bound
    for b in params.biases:
        assert np.all(b == 0.0)


def test_checkpoint_round_trip_exact(tmp_path):
    params = N.policy_network(29, 5, seed=7)
    path = tmp_path / "policy.json"
    N.save_checkpoint(params, path)
    loaded = N.load_checkpoint(path)
    assert loaded.layer_dims == params.layer_dims
    assert loaded.activation == params.activation
    assert loaded.head == params.head
    for a, b in zip(params.weights + params.biases, loaded.weights + loaded.biases):
        assert np.array_equal(a, b)
    # decimal serialization is reproducible byte for byte
    N.save_checkpoint(loaded, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_malformed(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"layer_dims": [2, 2], "activation": "tanh",
                                "head": "linear", "weights": [[[1.0]]],
                                "biases": [[0.0, 0.0]]}))
    with pytest.raises(N.DimensionError):
        N.load_checkpoint(path)
    path.write_text(json.dumps({"layer_dims": [2]}))
    with pytest.raises(N.DimensionError):
        N.load_checkpoint(path)


def test_policy_value_factories():
    pol = N.policy_network(29, 5, seed=1)
    assert pol.layer_dims == (29, 64, 64, 5)
    assert pol.head == N.Head.SOFTMAX
    val = N.value_network(29, seed=1)
    assert val.layer_dims == (29, 64, 64, 1)
    assert val.head == N.Head.LINEAR
    out = N.forward(pol, np.zeros(29))
    assert out.sum() == pytest.approx(1.0, abs=1e-9)
