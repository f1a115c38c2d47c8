"""Filter tests, anchored by a brute-force joint-Gaussian conditioning oracle.

The oracle assembles the full covariance of (beta_N, dR_0..dR_{N-1}) from the
linear-Gaussian recursions and conditions by block inversion; the recursive
filter must reproduce it to near machine precision.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from futopt import (
    MarketParams,
    SingularModelError,
    neutrality_diagnostics,
    run_filter,
    run_filter_batch,
    simulate_path,
)
from futopt.filtering import default_p_cov0


def _params(**over):
    base = dict(d=1, n_steps=252, delta_t=1.0 / 252, sigma=0.2, rho=1.0,
                alpha=-0.5, varsigma=0.1, f=1.0, c_spread=0.0,
                m=0.0, r=0.0, k=1.0, F0=100.0, beta0=0.08)
    base.update(over)
    return MarketParams(**base)


def gaussian_conditioning_oracle(params, delta_R, p_cov0, beta_hat0):
    """E[beta_N | dR_0..dR_{N-1}] by explicit covariance assembly (d=1).

    beta_{n+1} = a beta_n + vs dW2_n,  dR_n = beta_n dt + s dW_n, with
    beta_0 ~ N(beta_hat0, p0) independent of both noise sequences.
    """
    n = delta_R.shape[0]
    dt = params.delta_t
    a = 1.0 + params.alpha[0, 0] * dt
    vs2 = params.varsigma[0, 0] ** 2 * dt
    s2 = (params.sigma[0, 0] ** 2) * params.rho[0, 0] * dt
    p0 = float(np.atleast_2d(p_cov0)[0, 0])
    b0 = float(np.atleast_1d(beta_hat0)[0])

    # Cov(beta_i, beta_j) = a^{|i-j|} Var(beta_min(i,j))
    var_beta = np.empty(n + 1)
    var_beta[0] = p0
    for i in range(n):
        var_beta[i + 1] = a * a * var_beta[i] + vs2
    cov_bb = np.empty((n + 1, n + 1))
    for i in range(n + 1):
        for j in range(n + 1):
            lo = min(i, j)
            cov_bb[i, j] = a ** abs(i - j) * var_beta[lo]

    # observations dR_k involve beta_k; target is beta_N
    cov_rr = cov_bb[:n, :n] * dt * dt + s2 * np.eye(n)
    cov_tr = cov_bb[n, :n] * dt                    # Cov(beta_N, dR_k)
    mean_beta = b0 * a ** np.arange(n + 1)
    mean_r = mean_beta[:n] * dt

    w = np.linalg.solve(cov_rr, delta_R[:, 0] - mean_r)
    return mean_beta[n] + cov_tr @ w


def test_recursive_filter_matches_gaussian_conditioning():
    p = _params(n_steps=10, alpha=-0.4, varsigma=0.15)
    path = simulate_path(p, seed=42)
    p_cov0 = np.array([[0.02]])
    beta_hat0 = np.array([0.05])
    hist = run_filter(path, p, p_cov0=p_cov0, beta_hat0=beta_hat0)
    oracle = gaussian_conditioning_oracle(p, path.delta_R(), p_cov0, beta_hat0)
    assert hist.beta_hat[-1, 0] == pytest.approx(oracle, rel=1e-8)


def test_oracle_agreement_across_seeds():
    p = _params(n_steps=10, alpha=-1.0, varsigma=0.2)
    for seed in (0, 1, 2, 3):
        path = simulate_path(p, seed=seed)
        hist = run_filter(path, p)
        oracle = gaussian_conditioning_oracle(
            p, path.delta_R(), default_p_cov0(p), p.beta0
        )
        assert hist.beta_hat[-1, 0] == pytest.approx(oracle, rel=1e-8)


# -- degenerate and hand-evaluated cases ------------------------------------

def test_perfectly_known_drift_has_zero_gain():
    p = _params(varsigma=0.0, alpha=-1.0, delta_t=0.1, beta0=0.1, n_steps=5)
    path = simulate_path(p, seed=0)
    hist = run_filter(path, p, p_cov0=np.zeros((1, 1)), beta_hat0=p.beta0)
    # beta_hat follows the deterministic recursion regardless of returns
    expected = 0.1 * 0.9 ** np.arange(6)
    assert np.allclose(hist.beta_hat[:, 0], expected, atol=1e-15)
    assert np.all(hist.p_cov == 0.0)


def test_one_step_estimate_hand_value():
    p = _params(varsigma=0.0, alpha=-1.0, delta_t=0.1, beta0=0.1, n_steps=1)
    path = simulate_path(p, seed=0)
    hist = run_filter(path, p, p_cov0=np.zeros((1, 1)), beta_hat0=np.array([0.1]))
    assert hist.beta_hat[1, 0] == pytest.approx(0.09, abs=1e-15)


def test_innovation_hand_value():
    # d_nu = (dR - beta_pre dt) / sigma with the pre-update estimate
    p = _params(varsigma=0.0, alpha=0.0, beta0=0.08, n_steps=1)
    delta_R = np.array([[0.01]])
    hist = run_filter(delta_R, p, p_cov0=np.zeros((1, 1)), beta_hat0=np.array([0.08]))
    assert hist.d_nu[0, 0] == pytest.approx((0.01 - 0.08 / 252) / 0.2, rel=1e-12)
    assert hist.d_nu[0, 0] == pytest.approx(0.0484127, abs=5e-8)


def test_singular_sigma_rejected():
    p = _params(sigma=0.0)
    with pytest.raises(SingularModelError, match="sigma"):
        run_filter(np.zeros((4, 1)), p)


def test_innovation_shape_and_start():
    p = _params(n_steps=37)
    path = simulate_path(p, seed=5)
    hist = run_filter(path, p)
    assert hist.d_nu.shape == (37, 1)
    nu = hist.nu
    assert nu.shape == (38, 1)
    assert nu[0, 0] == 0.0
    assert np.allclose(np.diff(nu, axis=0), hist.d_nu)


def test_covariance_psd_along_the_path():
    p = _params(d=2, rho=np.array([[1.0, 0.3], [0.3, 1.0]]), sigma=0.25,
                alpha=np.diag([-0.5, -1.0]), varsigma=0.1,
                F0=np.array([100.0, 2.0]), beta0=np.array([0.08, -0.04]),
                n_steps=64)
    path = simulate_path(p, seed=14)
    hist = run_filter(path, p)
    for P in hist.p_cov:
        eig = np.linalg.eigvalsh(P)
        assert eig.min() >= -1e-12


def test_frozen_drift_estimate_converges():
    p = _params(varsigma=0.0, alpha=0.0, beta0=0.08)
    gaps = []
    for n in (100, 1_000, 10_000):
        pn = p.with_updates(n_steps=n)
        path = simulate_path(pn, seed=7)
        hist = run_filter(path, pn, p_cov0=np.array([[0.05]]), beta_hat0=np.array([0.0]))
        gaps.append(abs(hist.beta_hat[-1, 0] - 0.08))
    assert gaps[2] < gaps[0]


def test_frozen_drift_matches_bayes_least_squares():
    """With a static state the filter reduces to conjugate Bayes regression.

    Posterior precision: 1/p0 + n dt^2 / (s^2 rho dt); posterior mean is the
    precision-weighted blend of the prior and the observation average.
    """
    p = _params(varsigma=0.0, alpha=0.0, beta0=0.08, n_steps=500)
    path = simulate_path(p, seed=19)
    p0, b0 = 0.05, 0.02
    hist = run_filter(path, p, p_cov0=np.array([[p0]]), beta_hat0=np.array([b0]))

    dt = p.delta_t
    obs_var = p.sigma[0, 0] ** 2 * dt
    dR = path.delta_R()[:, 0]
    precision = 1.0 / p0 + dR.size * dt * dt / obs_var
    mean = (b0 / p0 + dt * dR.sum() / obs_var) / precision
    assert hist.beta_hat[-1, 0] == pytest.approx(mean, rel=1e-10)
    assert hist.p_cov[-1, 0, 0] == pytest.approx(1.0 / precision, rel=1e-10)


def test_batch_filter_matches_single():
    p = _params(n_steps=48)
    paths = [simulate_path(p, seed=s) for s in range(3)]
    delta_R = np.stack([q.delta_R() for q in paths])
    batch = run_filter_batch(delta_R, p)
    for i, q in enumerate(paths):
        single = run_filter(q, p)
        assert np.allclose(batch.beta_hat[i], single.beta_hat, atol=1e-15)
    # gain schedule is observation independent: shared covariance
    assert batch.p_cov.ndim == 3


def test_filter_uses_only_returns():
    p = _params(n_steps=40)
    path = simulate_path(p, seed=23)
    from_path = run_filter(path, p)
    from_returns = run_filter(path.delta_R(), p)
    assert np.array_equal(from_path.beta_hat, from_returns.beta_hat)


# -- diagnostics ------------------------------------------------------------

def test_diagnostics_on_injected_brownian_innovations():
    # feed the filter's own noise model directly: residuals that are exact
    # Brownian increments must produce centered diagnostics
    p = _params(varsigma=0.0, alpha=0.0, beta0=0.0, n_steps=20_000)
    rng = np.random.default_rng(3)
    dW = np.sqrt(p.delta_t) * rng.standard_normal((p.n_steps, 1))
    delta_R = p.sigma[0, 0] * dW  # beta = 0: returns are pure noise
    path = simulate_path(p, seed=10)
    hist = run_filter(delta_R, p, p_cov0=np.zeros((1, 1)), beta_hat0=np.zeros(1))
    report = neutrality_diagnostics(hist, path, p)
    rows = {(r[0], r[1]): (r[2], r[3]) for r in report.rows}
    mean, se = rows[("innovation_mean", "1")]
    assert abs(mean) <= 3.0 * se
    cov_err, cov_se = rows[("innovation_cov_error", "1,1")]
    assert abs(cov_err) <= 3.0 * cov_se


def test_diagnostics_csv(tmp_path):
    p = _params(n_steps=256)
    path = simulate_path(p, seed=2)
    hist = run_filter(path, p)
    report = neutrality_diagnostics(hist, path, p)
    out = tmp_path / "diag.csv"
    report.to_csv(out)
    header = out.read_text().splitlines()[0]
    assert header == "metric,component,value,stderr"


def test_diagnostics_reject_short_paths():
    p = _params(n_steps=10)
    path = simulate_path(p, seed=2)
    hist = run_filter(path, p)
    with pytest.raises(Exception):
        neutrality_diagnostics(hist, path, p)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.3))
def test_estimate_is_deterministic_in_returns(seed, varsigma):
    p = _params(n_steps=16, varsigma=varsigma)
    path = simulate_path(p, seed=seed)
    a = run_filter(path, p)
    b = run_filter(path.delta_R().copy(), p)
    assert np.array_equal(a.beta_hat, b.beta_hat)
    assert np.array_equal(a.d_nu, b.d_nu)
