import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from modcap import checkpoint
from modcap.gradcheck import check_gradients
from modcap.optim import AdamState, adam_step, clip_grad_norm
from modcap.tensor import (
    ContractError,
    DimensionError,
    Tensor,
    clip,
    concat,
    exp,
    linear,
    log,
    log1p,
    matmul,
    no_grad,
    relu,
    sigmoid,
    softmax,
    stack,
    tanh,
)


def test_matmul_examples():
    eye = Tensor(np.eye(2))
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(eye, m).data, m.data)
    np.testing.assert_array_equal(matmul(Tensor([[1.0, 2.0]]), Tensor([[0.0], [0.0]])).data, [[0.0]])
    np.testing.assert_array_equal(matmul(m, Tensor([[5.0], [6.0]])).data, [[17.0], [39.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_elementwise_examples():
    assert sigmoid(Tensor(0.0)).item() == 0.5
    assert relu(Tensor(-3.2)).item() == 0.0
    assert tanh(Tensor(0.0)).item() == 0.0
    with pytest.raises(DimensionError):
        Tensor(np.ones(3)) + Tensor(np.ones(4))
    with pytest.raises(DimensionError):
        concat([Tensor(np.ones((2, 2))), Tensor(np.ones((3, 3)))], axis=0)


def test_sigmoid_is_stable_for_large_inputs():
    out = sigmoid(Tensor([-800.0, -40.0, 40.0, 800.0])).data
    assert np.all(np.isfinite(out))
    assert out[0] == 0.0 and out[-1] == 1.0


def test_softmax_examples():
    np.testing.assert_allclose(softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    for c in (-1e3, 0.0, 7.5, 1e3):
        np.testing.assert_allclose(softmax(Tensor([c] * 4)).data, [0.25] * 4, rtol=0, atol=1e-15)
    np.testing.assert_allclose(softmax(Tensor([math.log(2.0), 0.0])).data, [2 / 3, 1 / 3], rtol=1e-14)
    with pytest.raises(DimensionError):
        softmax(Tensor(np.zeros(0)))


def test_backward_examples():
    x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    w = Tensor(0.0, requires_grad=True)
    (sigmoid(w) * 1.0).backward()
    assert w.grad == pytest.approx(0.25, abs=1e-15)

    with pytest.raises(ContractError):
        (x * 2.0).backward()


def test_backward_twice_is_deterministic():
    rng = np.random.default_rng(3)
    a = Tensor(rng.uniform(-1, 1, (3, 4)), requires_grad=True)
    b = Tensor(rng.uniform(-1, 1, (4, 2)), requires_grad=True)
    loss = (tanh(a @ b) * sigmoid(a @ b)).sum()
    loss.backward()
    first = a.grad.copy(), b.grad.copy()
    a.zero_grad()
    b.zero_grad()
    loss.backward()
    np.testing.assert_array_equal(a.grad, first[0])
    np.testing.assert_array_equal(b.grad, first[1])


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad


def _rand(rng, *shape):
    return Tensor(rng.uniform(-1, 1, shape), requires_grad=True)


OPS = {
    "add_broadcast": lambda t: (t[0] + t[1][0]).sum(),
    "sub": lambda t: (t[0] - t[1] * 2.0).sum(),
    "mul": lambda t: (t[0] * t[1]).sum(),
    "div": lambda t: (t[0] / (t[1] * t[1] + 1.0)).sum(),
    "matmul": lambda t: (matmul(t[0], t[2]) * matmul(t[0], t[2])).sum(),
    "linear": lambda t: (linear(t[0], t[2], t[3]) * linear(t[0], t[2], t[3])).sum(),
    "sigmoid": lambda t: (sigmoid(t[0]) * t[1]).sum(),
    "tanh": lambda t: (tanh(t[0]) * t[1]).sum(),
    "relu": lambda t: (relu(t[0]) * t[1]).sum(),
    "exp": lambda t: (exp(t[0]) * t[1]).sum(),
    "log": lambda t: (log(t[0] * t[0] + 0.5) * t[1]).sum(),
    "log1p": lambda t: (log1p(t[0] * 0.5) * t[1]).sum(),
    "clip": lambda t: (clip(t[0], -0.5, 0.5) * t[1]).sum(),
    "softmax": lambda t: (softmax(t[0], axis=-1) * t[1]).sum(),
    "concat": lambda t: (concat([t[0], t[1]], axis=-1) * concat([t[1], t[0]], axis=-1)).sum(),
    "stack": lambda t: (stack([t[0], t[1]], axis=1) * stack([t[1], t[1]], axis=1)).sum(),
    "getitem": lambda t: (t[0][:, 1:] * t[1][:, :-1]).sum() + t[0][np.array([0, 0, 1]), np.array([1, 1, 2])].sum(),
    "reshape_transpose": lambda t: (t[0].reshape(4, 3).T * t[1]).sum(),
    "mean": lambda t: (t[0].mean(axis=0) * t[1][0]).sum(),
    "batched_matmul": lambda t: matmul(t[0].reshape(3, 1, 4), t[2].reshape(1, 4, 2) * 1.0).sum(),
}


def _setup_tensors(seed):
    rng = np.random.default_rng(seed)
    return [_rand(rng, 3, 4), _rand(rng, 3, 4), _rand(rng, 4, 2), _rand(rng, 2)]


@pytest.mark.parametrize("name", sorted(OPS))
def test_operation_gradients_match_finite_differences(name):
    for seed in range(3):
        tensors = _setup_tensors(seed)
        params = {str(i): t for i, t in enumerate(tensors)}
        fn = OPS[name]
        errors = check_gradients(lambda: fn(tensors), params, h=1e-5)
        assert max(errors.values()) < 1e-5, (name, errors)


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, st.integers(1, 8), elements=st.floats(-50, 50)),
    st.floats(-100, 100),
)
def test_softmax_properties(v, shift):
    p = softmax(Tensor(v)).data
    assert np.all(p > 0)
    assert abs(p.sum() - 1.0) <= 1e-9
    np.testing.assert_allclose(softmax(Tensor(v + shift)).data, p, rtol=1e-9, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 16), elements=st.floats(-15, 15)))
def test_activation_ranges(v):
    assert np.all(relu(Tensor(v)).data >= 0)
    s = sigmoid(Tensor(v)).data
    assert np.all((s > 0) & (s < 1))
    t = tanh(Tensor(v)).data
    assert np.all((t > -1) & (t < 1))


# -- Adam --------------------------------------------------------------
def test_adam_zero_gradient_leaves_params():
    p = {"w": Tensor(np.array([0.3, -0.2]), requires_grad=True)}
    state = AdamState(learning_rate=0.1)
    adam_step(p, {"w": np.zeros(2)}, state)
    np.testing.assert_array_equal(p["w"].data, [0.3, -0.2])
    assert state.step_count == 1


@pytest.mark.parametrize("g", [3.0, -0.02, 1e-3])
def test_adam_first_step_is_signed_learning_rate(g):
    # bias correction makes m_hat = g and v_hat = g^2 on step one
    lr = 1e-2
    p = {"w": Tensor(np.array([1.0]), requires_grad=True)}
    adam_step(p, {"w": np.array([g])}, AdamState(learning_rate=lr))
    expected = 1.0 - lr * g / (abs(g) + 1e-8)
    assert p["w"].data[0] == pytest.approx(expected, rel=1e-12)
    assert p["w"].data[0] == pytest.approx(1.0 - lr * np.sign(g), rel=1e-5)


def test_adam_moves_monotonically_against_constant_gradient():
    p = {"w": Tensor(np.array([0.0]), requires_grad=True)}
    state = AdamState(learning_rate=1e-2)
    values = [0.0]
    for _ in range(2):
        adam_step(p, {"w": np.array([0.7])}, state)
        values.append(p["w"].data[0])
    assert values[0] > values[1] > values[2]
    assert state.step_count == 2


def test_adam_shape_mismatch():
    p = {"w": Tensor(np.zeros(2), requires_grad=True)}
    with pytest.raises(ContractError):
        adam_step(p, {"w": np.zeros(3)}, AdamState())


def test_clip_grad_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    norm = clip_grad_norm(grads, 1.0)
    assert norm == pytest.approx(5.0)
    total = np.sqrt(grads["a"] ** 2 + grads["b"] ** 2)[0]
    assert total == pytest.approx(1.0, rel=1e-9)


# -- checkpoints -----------------------------------------------------
def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    params = {
        "zeta": rng.standard_normal((3, 2)),
        "alpha": np.array([np.pi, -0.0, 1e-300, np.finfo(float).max]),
        "mid.scalar_like": rng.standard_normal((1,)),
    }
    path = tmp_path / "ckpt.bin"
    checkpoint.save_checkpoint(path, params)
    blob = path.read_bytes()
    assert blob[:8] == b"MODCAP01"
    loaded = checkpoint.load_checkpoint(path)
    assert list(loaded) == sorted(params)
    for name, values in params.items():
        assert loaded[name].tobytes() == values.astype("<f8").tobytes()
    assert checkpoint.dumps(loaded) == blob


def test_checkpoint_rejects_bad_input():
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"NOTMAGIC")
    blob = checkpoint.dumps({"w": np.ones(4)})
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(blob[:-3])
