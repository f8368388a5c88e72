import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedperl.errors import ConfigError, ShapeError
from fedperl.nn import ModelParams, forward_batch, init_params, logits, loss_and_grads, one_hot
from fedperl.data import soft_augment
from fedperl.ssl import (
    AugmentParams,
    SslHyper,
    anonymize_peers,
    ensemble_probs,
    local_ssl_loss,
    pa_pseudo_label,
    peer_pseudo_label,
    solo_pseudo_label,
    threshold,
)
from oracles import central_diff, grad_rel_error, ref_ssl_loss


def fixed(p, dim=2):
    """A linear model that outputs probabilities ``p`` for every input."""
    p = np.asarray(p, dtype=float)
    return ModelParams.from_layers([(np.zeros((p.size, dim)), np.log(p))])


X1 = np.array([0.3, -0.2])


def test_solo_accept():
    d = solo_pseudo_label(fixed([0.7, 0.2, 0.1]), X1, 0.6, 0)
    assert d.accepted and d.class_index == 0
    assert d.score == pytest.approx(0.7)


def test_solo_reject():
    d = solo_pseudo_label(fixed([0.5, 0.3, 0.2]), X1, 0.6, 0)
    assert not d.accepted and d.class_index is None


def test_local_threshold_rejects_more():
    P = np.random.default_rng(0).dirichlet(np.ones(3) * 0.5, size=500)
    a6, _, _ = threshold(P, 0.6)
    a9, _, _ = threshold(P, 0.9)
    assert a9.sum() < a6.sum() and not (a9 & ~a6).any()


def test_peer_ensemble_mean():
    p = ensemble_probs([fixed([0.4, 0.6]), fixed([0.8, 0.2])], X1[None])
    np.testing.assert_allclose(p[0], [0.6, 0.4], atol=1e-12)
    acc, cls, _ = threshold(np.array([[0.6, 0.4]]), 0.6)
    assert acc[0] and cls[0] == 0


def test_peer_veto():
    d = peer_pseudo_label(fixed([0.4, 0.6]), [fixed([0.7, 0.3])], X1, 0.6, 0)
    assert not d.accepted
    assert d.score == pytest.approx(0.55)


def test_pa_reject():
    d = pa_pseudo_label(fixed([0.9, 0.1]), fixed([0.1, 0.9]), X1, 0.6, 0)
    assert not d.accepted and d.score == pytest.approx(0.5)


def test_sum_norm_keeps_argmax(rng):
    models = [init_params([4, 6, 3], s) for s in range(3)]
    x = rng.normal(size=(30, 4))
    m = ensemble_probs(models, x, "mean")
    s = ensemble_probs(models, x, "sum")
    assert np.array_equal(m.argmax(axis=1), s.argmax(axis=1))
    np.testing.assert_allclose(s, 3 * m, atol=1e-12)


def test_arch_mismatch():
    with pytest.raises(ShapeError):
        peer_pseudo_label(init_params([2, 3], 0), [init_params([2, 4], 0)], X1, 0.6, 0)
    with pytest.raises(ShapeError):
        anonymize_peers([init_params([2, 3], 0), init_params([2, 2, 3], 0)])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.floats(0.3, 1.0))
def test_identical_peers_equal_solo(seed, T, tau):
    m = init_params([3, 5, 4], seed)
    m = m.replace(m.flat * 3)
    x = np.random.default_rng(seed).normal(size=3)
    solo = solo_pseudo_label(m, x, tau, seed)
    assert peer_pseudo_label(m, [m] * T, x, tau, seed) == solo
    assert pa_pseudo_label(m, anonymize_peers([m] * T), x, tau, seed) == solo
    assert pa_pseudo_label(m, m, x, tau, seed) == solo


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_acceptance_monotone_in_tau(seed, t1, t2):
    lo, hi = sorted((t1, t2))
    rng = np.random.default_rng(seed)
    self_m = init_params([3, 4, 3], seed)
    self_m = self_m.replace(self_m.flat * 4)
    peers = [init_params([3, 4, 3], seed + k + 1) for k in range(2)]
    X = rng.normal(size=(40, 3))
    for helpers in ([], peers, [anonymize_peers(peers)]):
        p = ensemble_probs([self_m, *helpers], soft_augment(X, seed))
        a_lo, _, _ = threshold(p, lo)
        a_hi, _, _ = threshold(p, hi)
        assert a_hi.sum() <= a_lo.sum()


def test_anonymize_basics():
    m = init_params([2, 3, 2], 0)
    assert anonymize_peers([m]).equal(m)
    a = ModelParams((1, 1), np.array([1.0, 0.0]))
    b = ModelParams((1, 1), np.array([3.0, 0.0]))
    assert anonymize_peers([a, b]).flat[0] == 2.0


def test_anonymize_linear_equivalence(rng):
    peers = [init_params([4, 3], s) for s in range(3)]
    x = rng.normal(size=(10, 4))
    mean_logits = np.mean([logits(p, x) for p in peers], axis=0)
    assert np.abs(logits(anonymize_peers(peers), x) - mean_logits).max() <= 1e-10


def test_anonymize_tanh_witness():
    w = np.array([[2.0, -1.0], [1.5, 0.5], [-1.0, 2.0]])
    v = np.array([[3.0, 1.0, -2.0], [-1.0, 2.0, 1.0]])
    zb1, zb2 = np.zeros(3), np.zeros(2)
    a = ModelParams.from_layers([(w, zb1), (v, zb2)])
    b = ModelParams.from_layers([(-w, zb1), (-v, zb2)])  # same function: tanh is odd
    x = np.array([[0.7, -0.4]])
    mean_fwd = (forward_batch(a, x) + forward_batch(b, x)) / 2
    gap = np.abs(forward_batch(anonymize_peers([a, b]), x) - mean_fwd).max()
    assert gap > 1e-3


# -- local objective ---------------------------------------------------------


def _batch(seed, dim=4, C=3, n_l=4, n_u=4):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n_l, dim)), rng.integers(0, C, n_l), rng.normal(size=(n_u, dim))


def test_supervised_only_when_beta_gamma_zero():
    p = init_params([4, 5, 3], 0)
    xl, yl, xu = _batch(0)
    h = SslHyper(tau=0.3, beta=0.0, gamma=0.0)
    loss, g, _ = local_ssl_loss(p, p, [init_params([4, 5, 3], 1)], xl, yl, xu, h, "pa", 11)
    ref, gref = loss_and_grads(p, soft_augment(xl, np.random.default_rng(11)), one_hot(yl, 3))
    assert loss == ref and np.array_equal(g.flat, gref.flat)


def test_all_rejected_equals_supervised():
    p = init_params([4, 5, 3], 0)
    xl, yl, xu = _batch(1)
    h = SslHyper(tau=1.0, beta=0.5, gamma=0.0)
    loss, _, info = local_ssl_loss(p, p, [], xl, yl, xu, h, "solo", 5)
    assert info.n_accepted == 0 and loss == info.supervised


@pytest.mark.parametrize("mode", ["solo", "peers", "pa"])
def test_full_loss_gradient(mode):
    arch = (4, 5, 3)
    rng = np.random.default_rng(3)
    p = init_params(arch, 0)
    p = p.replace(p.flat + rng.normal(scale=0.5, size=p.n_params))
    frozen = p.replace(p.flat * 2.0)  # confident teacher so some labels pass
    peers = [init_params(arch, s) for s in (4, 5)]
    helpers = {"solo": [], "peers": peers, "pa": [anonymize_peers(peers)]}[mode]
    xl, yl, xu = _batch(2)
    h = SslHyper(tau=0.4, beta=0.5, gamma=0.3)
    aug = AugmentParams()
    loss, g, info = local_ssl_loss(p, frozen, helpers, xl, yl, xu, h, mode, 9, aug)
    assert info.n_accepted > 0

    def f(flat):
        return ref_ssl_loss(flat, arch, frozen.flat, [m.flat for m in helpers], xl, yl, xu,
                            h.tau, h.beta, h.gamma, 9, aug)

    assert loss == pytest.approx(f(p.flat), rel=1e-12)
    assert grad_rel_error(g.flat, central_diff(f, p.flat)) < 1e-4


def test_empty_labeled_batch():
    p = init_params([4, 3], 0)
    with pytest.raises(ConfigError):
        local_ssl_loss(p, p, [], np.zeros((0, 4)), np.zeros(0, int), np.ones((2, 4)), SslHyper(), "solo", 0)


def test_empty_unlabeled_batch_is_supervised():
    p = init_params([4, 3], 0)
    xl, yl, _ = _batch(0)
    loss, _, info = local_ssl_loss(p, p, [], xl, yl, np.zeros((0, 4)), SslHyper(), "solo", 0)
    assert loss == info.supervised and info.n_unlabeled == 0


@pytest.mark.parametrize("kw", [{"tau": 0.0}, {"tau": 1.5}, {"beta": -1}, {"gamma": -0.1}, {"T": -1}, {"T": 1.5}])
def test_hyper_validation(kw):
    with pytest.raises(ConfigError):
        SslHyper(**kw)


def test_unknown_mode():
    p = init_params([4, 3], 0)
    xl, yl, xu = _batch(0)
    with pytest.raises(ConfigError):
        local_ssl_loss(p, p, [], xl, yl, xu, SslHyper(), "both", 0)
