import numpy as np
import pytest

from lgi import diagnostics
from lgi.posterior import PosteriorDraws


def test_running_means():
    np.testing.assert_allclose(diagnostics.running_means(np.array([1, 0, 1, 0])), [1, 0.5, 2 / 3, 0.5])
    assert diagnostics.running_means(np.array([1.0])).shape == (1,)


def test_chain_agreement():
    x = np.random.default_rng(0).normal(size=1000)
    assert diagnostics.chain_agreement(np.stack([x, x])) == 1.0
    assert diagnostics.chain_agreement(np.array([[0.0] * 5, [1.0] * 5])) == float("inf")
    assert diagnostics.chain_agreement(np.array([[0, 0.1] * 50, [5, 5.1] * 50])) > 10
    mixed = np.random.default_rng(1).normal(size=(3, 2000))
    assert diagnostics.chain_agreement(mixed) < 1.01
    with pytest.raises(ValueError):
        diagnostics.chain_agreement(np.zeros((1, 4)))


def _draws():
    A = np.array([[1, 0], [0, 0]])
    Lt = np.zeros((2, 4, 2), dtype=np.int8)
    Lt[0, :, 0] = (1, 0, 1, 0)
    Lt[:, :, 1] = 1
    rng = np.random.default_rng(0)
    s = dict(rho_U=rng.random((2, 4)), s2_pB=rng.random((2, 4)), p_row=rng.random((2, 4, 2)),
             p_col=rng.random((2, 4, 2)))
    return PosteriorDraws("latent-bc", A, np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), np.array([4, 4]), s,
                          tracked_cells=np.array([[0, 1], [1, 1]]), L_tracked=Lt)


def test_cell_running_means_and_recorded_warning():
    d = _draws()
    rm = diagnostics.cell_running_means(d)
    np.testing.assert_allclose(rm[0, 0], [1, 0.5, 2 / 3, 0.5])
    with pytest.warns(RuntimeWarning, match="recorded"):
        rec = diagnostics.cell_running_means(d, [(0, 0)])
    np.testing.assert_array_equal(rec, 1.0)
    with pytest.raises(KeyError):
        diagnostics.cell_running_means(d, [(1, 0)])


def test_export(tmp_path):
    ratios = diagnostics.export_diagnostics(_draws(), str(tmp_path))
    assert "rho_U" in ratios
    assert (tmp_path / "rhat.csv").exists() and (tmp_path / "trace_rho_U.csv").exists()
    lines = (tmp_path / "running_means.csv").read_text().splitlines()
    assert lines[0] == "row,col,chain,draw,running_mean" and len(lines) == 1 + 2 * 2 * 4


def test_well_mixed_toy_rho_ratio():
    from lgi import gibbs
    from lgi.posterior import ChainConfig
    from test_gibbs import _toy_fit_inputs
    from geweke_util import TEST_PRIOR

    data, tr, tc, C_U, C_V = _toy_fit_inputs(3)
    cfg = ChainConfig(n_iter=1500, burn_in=300, thin=2, n_chains=3, seed=11)
    d = gibbs.run_chain(cfg, TEST_PRIOR, data, tr, tc, C_U, C_V, threads=1)
    assert diagnostics.chain_agreement(d.samples["rho_U"]) < 1.1
