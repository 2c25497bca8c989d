import numpy as np
import pytest

from cucl import diffmath as dm
from cucl.losses import LossConfig, cucl_loss, ntxent_loss, siamese_stopgrad_loss, total_loss
from conftest import central_diff, rel_error

E = np.eye(2)


def test_loss_config_validation():
    assert LossConfig().tau_l == 0.5
    with pytest.raises(ValueError):
        LossConfig(tau_l=0)
    with pytest.raises(ValueError):
        LossConfig(backbone="byol")


def test_cucl_aligned_pair():
    # cos(positive) = 1, cos(negative) = 0
    got = float(cucl_loss(E, E, E, E, tau_l=0.5))
    assert got == pytest.approx(-np.log(np.e**2 / (np.e**2 + 1)), abs=1e-12)
    assert got == pytest.approx(0.1269, abs=1e-4)


def test_cucl_uniform_similarities_is_log_b():
    X = np.ones((2, 3))
    assert float(cucl_loss(X, X, X, X)) == pytest.approx(np.log(2), abs=1e-12)
    X5 = np.ones((5, 4))
    assert float(cucl_loss(X5, X5, X5, X5)) == pytest.approx(np.log(5), abs=1e-12)


def test_cucl_misaligned_pair_is_larger():
    Z = E[::-1]
    got = float(cucl_loss(E, Z, E, Z, tau_l=0.5))
    assert got == pytest.approx(-np.log(1 / (1 + np.e**2)), abs=1e-12)
    assert got == pytest.approx(2.1269, abs=1e-4)
    assert got > float(cucl_loss(E, E, E, E, tau_l=0.5))


def test_cucl_literal_indicator_drops_positive():
    got = float(cucl_loss(E, E, E, E, tau_l=0.5, literal_indicator=True))
    # only the negative remains in the denominator: -log(e^2 / e^0)
    assert got == pytest.approx(-2.0, abs=1e-12)


def test_cucl_needs_two_rows():
    x = np.ones((1, 3))
    with pytest.raises(ValueError, match="two"):
        cucl_loss(x, x, x, x)


def test_cucl_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        cucl_loss(np.ones((2, 3)), np.ones((2, 3)), np.ones((2, 4)), np.ones((2, 4)))


def test_cucl_symmetric_under_branch_swap(rng):
    Xa, Zb, Xb, Za = (rng.standard_normal((6, 8)) for _ in range(4))
    assert float(cucl_loss(Xa, Zb, Xb, Za)) == pytest.approx(float(cucl_loss(Xb, Za, Xa, Zb)), abs=1e-14)


def test_cucl_nonnegative_and_scale_invariant(rng):
    for _ in range(50):
        Xa, Zb, Xb, Za = (rng.standard_normal((5, 8)) for _ in range(4))
        base = float(cucl_loss(Xa, Zb, Xb, Za))
        assert base >= 0
        scaled = Xa * rng.uniform(0.1, 10, size=(5, 1))
        assert float(cucl_loss(scaled, Zb, Xb, Za)) == pytest.approx(base, abs=1e-9)


def test_ntxent_hand_value():
    got = float(ntxent_loss(E, E, tau_l=0.5))
    assert got == pytest.approx(-np.log(np.e**2 / (np.e**2 + 2)), abs=1e-12)


def test_ntxent_uniform_is_log_2b_minus_1():
    X = np.ones((3, 4))
    assert float(ntxent_loss(X, X)) == pytest.approx(np.log(5), abs=1e-12)


def test_ntxent_decreases_as_positive_aligns():
    # anchors e0, e1 with negatives fixed orthogonal; rotate positives towards the anchor
    values = []
    for theta in np.linspace(np.pi / 2, 0, 12):
        Xa = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
        Xb = np.array([[np.cos(theta), 0, np.sin(theta), 0], [0, np.cos(theta), 0, np.sin(theta)]])
        values.append(float(ntxent_loss(Xa, Xb)))
    assert all(b < a for a, b in zip(values, values[1:]))


def test_ntxent_needs_two_rows():
    with pytest.raises(ValueError):
        ntxent_loss(np.ones((1, 3)), np.ones((1, 3)))


def test_siamese_examples(rng):
    p = rng.standard_normal((4, 6))
    assert float(siamese_stopgrad_loss(p, p, p, p)) == pytest.approx(-1.0, abs=1e-12)
    a = np.array([[1.0, 0.0], [0.0, 2.0]])
    b = np.array([[0.0, 3.0], [-1.0, 0.0]])
    assert float(siamese_stopgrad_loss(a, b, a, b)) == pytest.approx(0.0, abs=1e-12)


def test_siamese_detached_targets_get_zero_gradient(rng):
    pa, za, pb, zb = (rng.standard_normal((4, 6)) for _ in range(4))
    _, grads = dm.forward_backward(siamese_stopgrad_loss, [pa, za, pb, zb])
    assert np.array_equal(grads[1], np.zeros_like(za))
    assert np.array_equal(grads[3], np.zeros_like(zb))
    assert np.abs(grads[0]).max() > 0


def test_total_loss():
    assert float(total_loss(0.5, 0.3)) == pytest.approx(0.8)
    assert float(total_loss(1.25, 0.0)) == 1.25
    with pytest.raises(ValueError, match="l_cucl"):
        total_loss(0.1, float("nan"))


def test_total_loss_matches_fused_graph(rng):
    Xa, Xb, Za, Zb = (rng.standard_normal((4, 16)) for _ in range(4))

    def fused(Xa, Xb, Za, Zb):
        return total_loss(ntxent_loss(Xa, Xb), cucl_loss(Xa, Zb, Xb, Za))

    value, _ = dm.forward_backward(fused, [Xa, Xb, Za, Zb])
    separate = float(ntxent_loss(Xa, Xb)) + float(cucl_loss(Xa, Zb, Xb, Za))
    assert value == pytest.approx(separate, abs=1e-12)


def _check_grads(program, shapes, rng, trials=100):
    worst = 0.0
    for _ in range(trials):
        inputs = [rng.standard_normal(s) for s in shapes]
        _, grads = dm.forward_backward(program, inputs)
        fd = central_diff(program, inputs)
        worst = max(worst, *(rel_error(g, f) for g, f in zip(grads, fd)))
    return worst


def test_cucl_gradients(rng):
    assert _check_grads(cucl_loss, [(4, 16)] * 4, rng, trials=20) < 1e-4


def test_cucl_literal_gradients(rng):
    program = lambda *xs: cucl_loss(*xs, literal_indicator=True)  # noqa: E731
    assert _check_grads(program, [(4, 16)] * 4, rng, trials=20) < 1e-4


def test_ntxent_gradients(rng):
    assert _check_grads(ntxent_loss, [(4, 16)] * 2, rng, trials=20) < 1e-4


def test_siamese_gradients(rng):
    # targets are detached, so the oracle differentiates w.r.t. the predictions only
    worst = 0.0
    for _ in range(20):
        pa, za, pb, zb = (rng.standard_normal((4, 16)) for _ in range(4))
        _, grads = dm.forward_backward(siamese_stopgrad_loss, [pa, za, pb, zb])
        fd = central_diff(lambda pa, pb: siamese_stopgrad_loss(pa, za, pb, zb), [pa, pb])
        worst = max(worst, rel_error(grads[0], fd[0]), rel_error(grads[2], fd[1]))
    assert worst < 1e-4
