import warnings

import numpy as np
import pytest

from lgi import predict
from lgi.data import build_taxonomy_correlation
from lgi.posterior import PosteriorDraws
from lgi.predict import COL, ROW, NewSpecies


def fake_draws(L_draws, A, samples=None, meta=None):
    L = np.asarray(L_draws, dtype=float)        # (chains, draws, nB, nP)
    return PosteriorDraws(model="latent-bc", A=np.asarray(A), L_sum=L.sum(axis=1), Lprob_sum=L.sum(axis=1),
                          n_kept=np.full(L.shape[0], L.shape[1]), samples=samples or {}, meta=meta or {})


def test_posterior_mean_and_recorded():
    L = np.zeros((1, 4, 1, 2))
    L[0, :, 0, 0] = (0, 1, 1, 1)
    L[0, :, 0, 1] = 1
    post = predict.posterior_interaction_matrix(fake_draws(L, [[0, 1]]))
    assert post.prob[0, 0] == 0.75
    assert post.prob[0, 1] == 1.0
    assert post.flags.tolist() == [["unrecorded", "recorded"]]


def test_mcse_from_chains():
    L = np.zeros((2, 2, 1, 1))
    L[0] = 1
    post = predict.posterior_interaction_matrix(fake_draws(L, [[0]]))
    assert post.prob[0, 0] == 0.5
    assert post.mcse[0, 0] == pytest.approx(np.std([1, 0], ddof=1) / np.sqrt(2))


def test_empty_draws_rejected():
    with pytest.raises(ValueError):
        predict.posterior_interaction_matrix(fake_draws(np.zeros((1, 0, 1, 1)), [[0]]))


def latent_draws(U, rho, H=1):
    R = len(rho)
    U = np.asarray(U, dtype=float).reshape(1, R, -1, H)
    return fake_draws(np.zeros((1, R, U.shape[2], 1)), np.zeros((U.shape[2], 1)),
                      samples=dict(U=U, rho_U=np.asarray(rho, dtype=float).reshape(1, R)))


def test_unrelated_new_species_is_standard_normal():
    d = latent_draws(np.full((4000, 2), 3.0), np.full(4000, 0.7))
    C = np.array([[1, 0.5, 0], [0.5, 1, 0], [0, 0, 1.0]])
    lat = predict.sample_new_latents(d, NewSpecies([np.nan]), C, np.random.default_rng(0))
    assert abs(lat.mean()) < 0.06 and lat.std() == pytest.approx(1, rel=0.04)


def test_rho_zero_is_standard_normal():
    d = latent_draws(np.full((4000, 2), 3.0), np.zeros(4000))
    C = np.array([[1, 0.5, 0.75], [0.5, 1, 0.5], [0.75, 0.5, 1.0]])
    lat = predict.sample_new_latents(d, NewSpecies([np.nan]), C, np.random.default_rng(1))
    assert abs(lat.mean()) < 0.06 and lat.std() == pytest.approx(1, rel=0.04)


def test_same_genus_conditional_normal():
    u = 1.3
    d = latent_draws(np.full((20000, 1), u), np.ones(20000))
    C = np.array([[1, 0.75], [0.75, 1.0]])
    lat = predict.sample_new_latents(d, NewSpecies([np.nan]), C, np.random.default_rng(2))
    # joint N(0, C): E[new | u] = 0.75 u, Var = 1 - 0.75^2
    assert lat.mean() == pytest.approx(0.75 * u, abs=0.02)
    assert lat.var() == pytest.approx(1 - 0.75 ** 2, rel=0.04)


def _weight_draws(beta0, B, s2, kinds):
    R = len(beta0)
    return fake_draws(np.zeros((1, R, 1, 1)), [[0]],
                      samples=dict(beta0=np.asarray(beta0, float).reshape(1, R, -1),
                                   B=np.asarray(B, float).reshape(1, R, 1, -1),
                                   sigma2_X=np.asarray(s2, float).reshape(1, R, -1)),
                      meta=dict(row_trait_kinds=list(kinds)))


def test_weight_examples():
    d = _weight_draws([[0.0]], [[0.0]], [[1.0]], ["continuous"])
    w = predict.importance_weights(d, NewSpecies([0.0]), np.zeros((1, 1)))
    assert w[0] == pytest.approx(0.39894, abs=1e-5)
    w = predict.importance_weights(d, NewSpecies([np.nan]), np.zeros((1, 1)))
    assert w[0] == 1.0
    d = _weight_draws([[0.0, 0.5]], [[0.0, 1.0]], [[1.0, 1.0]], ["continuous", "binary"])
    w = predict.importance_weights(d, NewSpecies([np.nan, 1.0]), np.array([[0.2]]))
    assert w[0] == pytest.approx(1 / (1 + np.exp(-0.7)))


def test_weighted_mean_examples():
    prob, ess = predict._weighted(np.log(np.array([[1.0], [3.0]])), np.array([[0.0], [1.0]]))
    assert prob[0] == pytest.approx(0.75)
    assert ess[0] == pytest.approx(16 / 10)
    prob, _ = predict._weighted(np.zeros((4, 1)), np.array([[0.0], [1.0], [1.0], [0.0]]))
    assert prob[0] == 0.5


def _fitted_like(R=200, nB=3, nP=4, H=2, seed=0):
    rng = np.random.default_rng(seed)
    s = dict(U=rng.normal(size=(1, R, nB, H)), V=rng.normal(size=(1, R, nP, H)),
             lam0=rng.normal(size=(1, R)) - 1, lam=rng.normal(size=(1, R, H)),
             rho_U=np.full((1, R), 0.5), rho_V=np.full((1, R), 0.5),
             beta0=np.zeros((1, R, 1)), B=rng.normal(size=(1, R, H, 1)) * 0.3, sigma2_X=np.ones((1, R, 1)),
             gamma0=np.zeros((1, R, 1)), G=rng.normal(size=(1, R, H, 1)) * 0.3, sigma2_W=np.ones((1, R, 1)))
    meta = dict(row_trait_kinds=["continuous"], col_trait_kinds=["continuous"])
    d = fake_draws(np.zeros((1, R, nB, nP)), np.zeros((nB, nP)), samples=s, meta=meta)
    tax_r = build_taxonomy_correlation([dict(genus=f"g{i}", family="f") for i in range(nB)])
    tax_c = build_taxonomy_correlation([dict(genus=f"h{j}", family="f") for j in range(nP)])
    return d, tax_r, tax_c


def test_predict_block_in_sample_matches_plain_average():
    d, tr, tc = _fitted_like()
    out = predict.predict_block(d, np.random.default_rng(0), [0, 1], [2], tr, tc, rao_blackwell=True)
    U, V = d.pooled("U"), d.pooled("V")
    psi = d.pooled("lam0") + np.einsum("rh,rh,rh->r", U[:, 1], d.pooled("lam"), V[:, 2])
    assert out.prob[1, 0] == pytest.approx(np.mean(1 / (1 + np.exp(-psi))))
    assert out.ess[1, 0] == pytest.approx(200)


def test_predict_new_pair_and_weights_nonnegative():
    d, tr, tc = _fitted_like()
    new_r = NewSpecies([0.4], ROW, dict(genus="g0", family="f"), "nb")
    new_c = NewSpecies([np.nan], COL, dict(genus="zz", family="ff"), "np")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = predict.predict_out_of_sample(d, np.random.default_rng(1), new_row=new_r, new_col=new_c,
                                            C_row=tr, C_col=tc)
    assert 0 <= out.prob <= 1 and 1 <= out.ess <= 200
    lat = predict.sample_new_latents(d, new_r, predict.extend_correlation(tr.C, tr.correlation_with(new_r.taxonomy)),
                                     np.random.default_rng(2))
    assert (predict.importance_weights(d, new_r, lat) >= 0).all()
    with pytest.raises(ValueError):
        predict.predict_out_of_sample(d, np.random.default_rng(1), row=0, col=1)


def test_degenerate_weights_warn():
    d, tr, tc = _fitted_like(R=300)
    d.samples["B"] = d.samples["B"] * 30
    d.samples["sigma2_X"] = d.samples["sigma2_X"] * 1e-3
    new = NewSpecies([2.0], ROW, dict(genus="g0", family="f"))
    with pytest.warns(RuntimeWarning, match="ESS"):
        predict.predict_block(d, np.random.default_rng(3), [new], [0], tr, tc)


def test_multiple_proposals():
    d, tr, tc = _fitted_like()
    new = NewSpecies([np.nan], ROW, dict(genus="g0", family="f"))
    # in-sample pairs are unchanged by repeating draws
    a = predict.predict_block(d, np.random.default_rng(0), [0, new], [1, 2], tr, tc, rao_blackwell=True)
    b = predict.predict_block(d, np.random.default_rng(0), [0, new], [1, 2], tr, tc, rao_blackwell=True,
                              n_proposals=4)
    np.testing.assert_allclose(b.prob[0], a.prob[0])
    assert b.n_draws == 800
    # all traits missing: weights are 1, so ESS equals the number of proposals
    np.testing.assert_allclose(b.ess[1], 800)
    assert 0 <= b.prob[1].min() and b.prob[1].max() <= 1
    with pytest.raises(ValueError, match="n_proposals"):
        predict.predict_block(d, np.random.default_rng(0), [0], [1], tr, tc, n_proposals=0)
