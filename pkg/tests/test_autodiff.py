import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsmfeedback import autodiff as ad
from gsmfeedback.errors import DimensionError, NumericalDomainError


def P(rng, *shape, low=None):
    v = rng.standard_normal(shape)
    if low is not None:
        v = np.abs(v) + low
    return ad.Parameter(v)


def fd_ok(f, params, rng, tol=1e-6):
    worst, _ = ad.finite_difference_check(f, params, n_coords=20, rng=rng)
    assert worst < tol, worst


def weighted(t, w):
    return ad.sum(ad.mul(t, w))


UNARY = {
    "neg": (ad.neg, None),
    "square": (ad.square, None),
    "sqrt": (ad.sqrt, 0.5),
    "log": (ad.log, 0.5),
    "cos": (ad.cos, None),
    "sin": (ad.sin, None),
    "tanh": (ad.tanh, None),
    "relu": (ad.relu, 0.1),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(rng, name):
    op, low = UNARY[name]
    x = P(rng, 3, 5, low=low)
    w = rng.standard_normal((3, 5))
    fd_ok(lambda: weighted(op(x), w), [x], rng)


@pytest.mark.parametrize("op", [ad.add, ad.sub, ad.mul, ad.div])
def test_binary_broadcast_gradients(rng, op):
    a = P(rng, 4, 3, 5)
    b = P(rng, 3, 1, low=0.5)
    w = rng.standard_normal((4, 3, 5))
    fd_ok(lambda: weighted(op(a, b), w), [a, b], rng)


def test_matmul_batched_broadcast(rng):
    a = P(rng, 2, 3, 4, 5)
    b = P(rng, 5, 2)
    w = rng.standard_normal((2, 3, 4, 2))
    fd_ok(lambda: weighted(ad.matmul(a, b), w), [a, b], rng)
    with pytest.raises(DimensionError):
        ad.matmul(a, P(rng, 4, 2))


def test_structural_gradients(rng):
    a = P(rng, 2, 3, 4)
    b = P(rng, 2, 2, 4)
    w = rng.standard_normal((2, 5, 4))
    fd_ok(lambda: weighted(ad.concat([a, b], axis=1), w), [a, b], rng)
    fd_ok(lambda: weighted(ad.transpose(a, (2, 0, 1)), np.transpose(w[:, :3], (2, 0, 1))), [a], rng)
    fd_ok(lambda: weighted(ad.reshape(a, (6, 4)), w[:, :3].reshape(6, 4)), [a], rng)
    fd_ok(lambda: ad.sum(ad.square(ad.mean(a, axis=(0, 2)))), [a], rng)


def test_getitem_repeated_index(rng):
    a = P(rng, 5)
    out = ad.sum(ad.getitem(a, np.array([0, 0, 3])))
    ad.backward(out)
    np.testing.assert_array_equal(a.grad, [2, 0, 0, 1, 0])


def test_conv1d_against_loop(rng):
    x = rng.standard_normal((2, 3, 6))
    w = rng.standard_normal((4, 3, 5))
    out = ad.conv1d(x, w).values
    xp = np.pad(x, ((0, 0), (0, 0), (2, 2)))
    ref = np.zeros((2, 4, 6))
    for o in range(4):
        for t in range(6):
            ref[:, o, t] = np.sum(xp[:, :, t:t + 5] * w[o], axis=(1, 2))
    np.testing.assert_allclose(out, ref, atol=1e-12)


@pytest.mark.parametrize("k", [1, 4, 7, 15])
def test_conv1d_gradient(rng, k):
    x, w, b = P(rng, 2, 3, 8), P(rng, 4, 3, k), P(rng, 4)
    wt = rng.standard_normal((2, 4, 8))
    fd_ok(lambda: weighted(ad.conv1d(x, w, b), wt), [x, w, b], rng)


def test_batchnorm_gradient_and_stats(rng):
    x = P(rng, 6, 3, 4)
    wt = rng.standard_normal((6, 3, 4))
    fd_ok(lambda: weighted(ad.batch_norm(x, (0, 2))[0], wt), [x], rng)
    xhat = ad.batch_norm(x, (0, 2))[0].values
    np.testing.assert_allclose(xhat.mean(axis=(0, 2)), 0, atol=1e-12)
    np.testing.assert_allclose(xhat.var(axis=(0, 2)), 1, atol=1e-4)


def test_batchnorm_running_average(rng):
    bn = ad.BatchNorm(3, momentum=0.9)
    x = rng.normal(2.0, 3.0, (50, 3, 4))
    bn(x)
    flat = x.transpose(1, 0, 2).reshape(3, -1)
    np.testing.assert_allclose(bn.running_mean.values, 0.1 * flat.mean(axis=1), atol=1e-12)
    np.testing.assert_allclose(bn.running_var.values, 0.9 + 0.1 * flat.var(axis=1, ddof=1), atol=1e-12)
    bn.eval()
    before = bn.running_mean.values.copy()
    bn(x)
    np.testing.assert_array_equal(bn.running_mean.values, before)


def test_hermitian_logdet_gradient(rng):
    a = rng.standard_normal((3, 4, 4)) + 1j * rng.standard_normal((3, 4, 4))
    z = a @ np.conj(np.swapaxes(a, -1, -2)) + np.eye(4)
    re, im = ad.Parameter(z.real.copy()), ad.Parameter(z.imag.copy())
    ld = ad.hermitian_logdet(re, im)
    np.testing.assert_allclose(ld.values, [np.sum(np.log(np.linalg.eigvalsh(m))) for m in z], atol=1e-10)
    fd_ok(lambda: ad.sum(ad.mul(ad.hermitian_logdet(re, im), np.array([1.0, -0.5, 2.0]))), [re, im], rng)


def test_hermitian_logdet_errors():
    with pytest.raises(NumericalDomainError):
        ad.hermitian_logdet(np.diag([1.0, -2.0]), np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        ad.hermitian_logdet(np.zeros((2, 3)), np.zeros((2, 3)))


def test_sign_ste():
    x = ad.Parameter(np.array([-2.0, 0.0, 0.3]))
    y = ad.sign_ste(x)
    np.testing.assert_array_equal(y.values, [-1, 1, 1])
    ad.backward(ad.sum(y))
    np.testing.assert_allclose(x.grad, 1 - np.tanh(x.values) ** 2)


def test_sign_surrogate_matches_fd(rng):
    x = P(rng, 10)
    fd_ok(lambda: ad.sum(ad.mul(ad.sign_ste(x, surrogate_forward=True), np.arange(10.0))), [x], rng)


def test_diamond_graph_accumulates():
    x = ad.Parameter(np.array([3.0]))
    y = ad.mul(x, x)
    z = ad.add(ad.mul(y, 2.0), ad.sin(y))
    ad.backward(ad.sum(z))
    assert abs(x.grad[0] - (2 + np.cos(9.0)) * 6.0) < 1e-12


def test_backward_requires_scalar(rng):
    with pytest.raises(ValueError):
        ad.backward(ad.square(P(rng, 3)))


def test_no_grad_builds_no_graph(rng):
    x = P(rng, 3)
    with ad.no_grad():
        y = ad.square(x)
    assert not y.requires_grad and y.parents == ()
    assert ad.is_grad_enabled()


def test_complex_multiply_oracle(rng):
    a = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    ca, cb = ad.Complex(a.real, a.imag), ad.Complex(b.real, b.imag)
    np.testing.assert_allclose(ad.cmatmul(ca, cb).numpy(), a @ b, atol=1e-12)
    np.testing.assert_allclose((ca * ca).numpy(), a * a, atol=1e-12)
    np.testing.assert_allclose(ca.H.numpy(), a.conj().T)
    np.testing.assert_allclose(ca.abs2().values, np.abs(a) ** 2, atol=1e-12)


def test_complex_matmul_gradient(rng):
    ar, ai, br, bi = P(rng, 2, 3, 4), P(rng, 2, 3, 4), P(rng, 4, 2), P(rng, 4, 2)

    def f():
        c = ad.cmatmul(ad.Complex(ar, ai), ad.Complex(br, bi))
        return ad.sum(ad.log(ad.add(c.abs2(), 1.0)))
    fd_ok(f, [ar, ai, br, bi], rng)


def test_layers_shapes_and_init(rng):
    lin = ad.Linear(30, 20, rng)
    bound = np.sqrt(6 / 50)
    assert np.all(np.abs(lin.weight.values) <= bound)
    assert lin(rng.standard_normal((7, 30))).shape == (7, 20)
    conv = ad.Conv1d(2, 5, 3, rng)
    assert conv(rng.standard_normal((4, 2, 9))).shape == (4, 5, 9)


class _Net(ad.Module):
    def __init__(self, rng):
        self.first = ad.Linear(4, 3, rng)
        self.blocks = [ad.BatchNorm(3), ad.Linear(3, 2, rng)]


def test_module_state_and_checkpoint_roundtrip(tmp_path, rng):
    net = _Net(rng)
    names = [n for n, _ in net.named_parameters()]
    assert names == ["first.weight", "first.bias", "blocks.0.gamma", "blocks.0.beta",
                     "blocks.0.running_mean", "blocks.0.running_var", "blocks.1.weight", "blocks.1.bias"]
    assert len(net.parameters()) == 6
    path = tmp_path / "m.bin"
    ad.save_checkpoint(path, net.state_dict())
    other = _Net(np.random.default_rng(99))
    other.load_state_dict(ad.load_checkpoint(path))
    for (_, p), (_, q) in zip(net.named_parameters(), other.named_parameters()):
        assert p.values.tobytes() == q.values.tobytes()
    raw = path.read_bytes()
    assert raw[:4] == b"ADCK"
    with pytest.raises(KeyError):
        other.load_state_dict({"first.weight": np.zeros((4, 3))})
    with pytest.raises(DimensionError):
        other.load_state_dict({**net.state_dict(), "first.bias": np.zeros(4)})


def test_checkpoint_rejects_corruption(tmp_path):
    path = tmp_path / "c.bin"
    ad.save_checkpoint(path, {"a": np.arange(3.0)})
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(ValueError):
        ad.load_checkpoint(path)
    path.write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(ValueError):
        ad.load_checkpoint(path)


@settings(max_examples=30, deadline=None)
@given(shape=st.lists(st.integers(1, 4), min_size=1, max_size=3), seed=st.integers(0, 1000))
def test_sum_of_squares_gradient_property(shape, seed):
    rng = np.random.default_rng(seed)
    x = ad.Parameter(rng.standard_normal(shape))
    ad.backward(ad.sum(ad.square(x)))
    np.testing.assert_allclose(x.grad, 2 * x.values)
