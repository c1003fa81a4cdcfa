"""Reverse-mode tape: every primitive's gradient against central differences,
plus the untaped/taped value identity the evaluation path relies on."""

import numpy as np
import pytest

import oracles
from falsevfl import autodiff as ad
from falsevfl.errors import ConfigurationError, UsageError

TOL = 1e-4


def check_grads(build, inputs, tol=TOL):
    """build(*args) must work for plain arrays and Vars alike and return a
    scalar; compares tape gradients to finite differences per input."""
    inputs = [np.asarray(a, dtype=np.float64) for a in inputs]
    tape = ad.Tape()
    leaves = [tape.leaf(a.copy()) for a in inputs]
    root = build(*leaves)
    grads = ad.backward(root)
    for i in range(len(inputs)):
        def f(arr, i=i):
            args = [arr if j == i else inputs[j] for j in range(len(inputs))]
            return float(ad.value_of(build(*args)))

        num = oracles.fd_gradient(f, inputs[i].copy())
        err = oracles.grad_rel_err(grads.wrt(leaves[i]), num)
        assert err < tol, f"input {i}: rel err {err:.3e}"


def wsum(x, w):
    # weighted scalarization so per-element gradients stay distinguishable
    return ad.reduce_sum(ad.mul(x, w))


def test_add_sub_mul_broadcast_grads():
    rng = np.random.default_rng(0)
    for _ in range(3):
        x = rng.normal(size=(3, 4))
        y = rng.normal(size=(4,))
        w = rng.normal(size=(3, 4))
        check_grads(lambda a, b: wsum(ad.add(a, b), w), [x, y])
        check_grads(lambda a, b: wsum(ad.sub(a, b), w), [x, y])
        check_grads(lambda a, b: wsum(ad.mul(a, b), w), [x, y])


def test_neg_grad():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 3))
    w = rng.normal(size=(2, 3))
    check_grads(lambda a: wsum(ad.neg(a), w), [x])


def test_matmul_grads_both_sides():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(3, 5))
    b = rng.normal(size=(5, 2))
    w = rng.normal(size=(3, 2))
    check_grads(lambda p, q: wsum(ad.matmul(p, q), w), [a, b])


def test_matmul_requires_2d():
    with pytest.raises(ConfigurationError):
        ad.matmul(np.ones(3), np.ones((3, 2)))


def test_elementwise_nonlinearity_grads():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(2, 4))
    x = rng.normal(size=(2, 4))
    for op in (ad.tanh, ad.sigmoid, ad.softplus, ad.exp):
        check_grads(lambda a, op=op: wsum(op(a), w), [x])
    xpos = 0.5 + rng.random(size=(2, 4))
    check_grads(lambda a: wsum(ad.log(a), w), [xpos])


def test_relu_and_clamp_grads_away_from_kinks():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 3))
    x[np.abs(x) < 0.05] = 0.3  # keep FD probes off the kink
    w = rng.normal(size=(3, 3))
    check_grads(lambda a: wsum(ad.relu(a), w), [x])
    check_grads(lambda a: wsum(ad.clamp_min(a, 0.0), w), [x])
    x2 = x.copy()
    x2[np.abs(np.abs(x2) - 1.0) < 0.05] = 0.4
    check_grads(lambda a: wsum(ad.clip(a, -1.0, 1.0), w), [x2])


def test_clamp_min_zero_grad_on_clamped_side():
    tape = ad.Tape()
    x = tape.leaf(np.array([-2.0, 3.0]))
    out = ad.reduce_sum(ad.clamp_min(x, 0.0))
    g = ad.backward(out).wrt(x)
    assert g.tolist() == [0.0, 1.0]


def test_reshape_repeat_concat_grads():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 6))
    w = rng.normal(size=(3, 4))
    check_grads(lambda a: wsum(ad.reshape(a, (3, 4)), w), [x])
    w2 = rng.normal(size=(6, 6))
    check_grads(lambda a: wsum(ad.repeat_rows(ad.reshape(a, (2, 6)), 3), w2), [x])
    a = rng.normal(size=(3, 2))
    b = rng.normal(size=(3, 4))
    w3 = rng.normal(size=(3, 6))
    check_grads(lambda p, q: wsum(ad.concat_cols([p, q]), w3), [a, b])


def test_repeat_rows_grad_direct():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(2, 3))
    w = rng.normal(size=(4, 3))
    check_grads(lambda a: wsum(ad.repeat_rows(a, 2), w), [x])


def test_repeat_rows_requires_2d():
    with pytest.raises(ConfigurationError):
        ad.repeat_rows(np.ones(4), 2)


def test_reduce_sum_variants_grads():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(3, 4))
    check_grads(lambda a: ad.reduce_sum(a), [x])
    w0 = rng.normal(size=(4,))
    check_grads(lambda a: ad.reduce_sum(ad.mul(ad.reduce_sum(a, axis=0), w0)), [x])
    w1 = rng.normal(size=(3,))
    check_grads(lambda a: ad.reduce_sum(ad.mul(ad.reduce_sum(a, axis=1), w1)), [x])
    wk = rng.normal(size=(3, 1))
    check_grads(lambda a: ad.reduce_sum(ad.mul(ad.reduce_sum(a, axis=1, keepdims=True), wk)), [x])


def test_gather_rows_grad_and_validation():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(4, 3))
    idx = np.array([2, 0, 1, 2])
    w = rng.normal(size=(4,))
    check_grads(lambda a: ad.reduce_sum(ad.mul(ad.gather_rows(a, idx), w)), [x])
    with pytest.raises(ConfigurationError):
        ad.gather_rows(x, np.array([0, 1]))


def test_logsumexp_grads():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(3, 5))
    w = rng.normal(size=(3,))
    check_grads(lambda a: ad.reduce_sum(ad.mul(ad.logsumexp(a, axis=-1), w)), [x])
    w0 = rng.normal(size=(5,))
    check_grads(lambda a: ad.reduce_sum(ad.mul(ad.logsumexp(a, axis=0), w0)), [x])


def test_logsumexp_extreme_values():
    out = ad.logsumexp(np.array([[1000.0, 1000.0]]), axis=-1)
    assert abs(float(out[0]) - (1000.0 + np.log(2.0))) < 1e-12
    out2 = ad.logsumexp(np.array([[-1e8, 0.0]]), axis=-1)
    assert np.isfinite(out2).all()


def test_logsumexp_shift_invariance():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(4, 6)) * 3.0
        c = float(rng.normal()) * 100.0
        a = ad.logsumexp(x + c, axis=-1)
        b = ad.logsumexp(x, axis=-1) + c
        assert np.max(np.abs(a - b)) < 1e-9


def test_log_softmax_grads_and_normalization():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(4, 3)) * 2.0
    idx = np.array([0, 2, 1, 1])
    check_grads(lambda a: ad.reduce_sum(ad.gather_rows(ad.log_softmax(a), idx)), [x])
    rows = np.exp(ad.log_softmax(x))
    assert np.max(np.abs(rows.sum(axis=1) - 1.0)) < 1e-12


def test_gaussian_logpdf_grads_each_argument():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(3, 4))
    mean = rng.normal(size=(3, 4))
    log_var = rng.normal(size=(3, 4)) * 0.5
    w = rng.normal(size=(3,))
    check_grads(lambda a, b, c: ad.reduce_sum(ad.mul(ad.gaussian_logpdf(a, b, c), w)), [x, mean, log_var])


def test_gaussian_logpdf_broadcast_grad():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(4, 2))
    mean = rng.normal(size=(2,))  # broadcast over rows
    log_var = rng.normal(size=(2,)) * 0.3
    w = rng.normal(size=(4,))
    check_grads(lambda b, c: ad.reduce_sum(ad.mul(ad.gaussian_logpdf(x, b, c), w)), [mean, log_var])


def test_gaussian_logpdf_matches_formula():
    # one frozen spot value: standard normal at 0 in 3 dims
    out = ad.gaussian_logpdf(np.zeros((1, 3)), np.zeros(3), np.zeros(3))
    assert abs(float(out[0]) - 3 * -0.9189385332046727) < 1e-12


def test_fanout_accumulates():
    tape = ad.Tape()
    x = tape.leaf(np.array([1.5, -0.5]))
    y = ad.add(ad.mul(x, x), ad.mul(x, 3.0))  # x^2 + 3x, grad 2x + 3
    g = ad.backward(ad.reduce_sum(y)).wrt(x)
    assert np.max(np.abs(g - (2.0 * np.array([1.5, -0.5]) + 3.0))) < 1e-12


def test_unused_leaf_gets_zero_grad():
    tape = ad.Tape()
    x = tape.leaf(np.ones(3))
    y = tape.leaf(np.ones(3))
    g = ad.backward(ad.reduce_sum(ad.mul(x, 2.0))).wrt(y)
    assert g.tolist() == [0.0, 0.0, 0.0]


def test_backward_requires_scalar_var_root():
    tape = ad.Tape()
    x = tape.leaf(np.ones((2, 2)))
    with pytest.raises(UsageError):
        ad.backward(x)
    with pytest.raises(UsageError):
        ad.backward(np.float64(3.0))


def test_mixed_tapes_rejected():
    t1, t2 = ad.Tape(), ad.Tape()
    a = t1.leaf(np.ones(2))
    b = t2.leaf(np.ones(2))
    with pytest.raises(UsageError):
        ad.add(a, b)
    g = ad.backward(ad.reduce_sum(a))
    with pytest.raises(UsageError):
        g.wrt(b)


def test_untaped_ops_record_nothing_and_match_taped_values():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(4, 2))

    def chain(a):
        return ad.logsumexp(ad.tanh(ad.matmul(a, w)), axis=-1)

    plain = chain(x)
    tape = ad.Tape()
    taped = chain(tape.leaf(x))
    assert isinstance(plain, np.ndarray)
    assert taped.value.tobytes() == plain.tobytes()
    n_before = len(tape)
    chain(x)  # untaped call must leave the tape untouched
    assert len(tape) == n_before


def test_multiple_backward_passes_on_one_tape():
    tape = ad.Tape()
    x = tape.leaf(np.array([2.0]))
    y = ad.reduce_sum(ad.mul(x, x))
    g1 = ad.backward(y).wrt(x)
    g2 = ad.backward(y).wrt(x)
    assert g1.tolist() == g2.tolist() == [4.0]
