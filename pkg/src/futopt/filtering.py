"""Conditional-expectation filter for the latent drift.

The drift and the observed return increments form a linear-Gaussian pair

    beta_{n+1} = (I + alpha dt) beta_n + varsigma dW2_n
    dR_n       = beta_n dt + sigma dW_n

so the conditional expectation beta_hat_n = E[beta_n | returns through n-1]
is computed exactly by a discrete Kalman recursion.  Each step folds the
newest return increment into the estimate and then propagates it forward,
which keeps beta_hat_n measurable with respect to returns observed strictly
before t_n.  The innovation increments

    d_nu_n = sigma^{-1} (dR_n - beta_hat_n dt)

are serially uncorrelated with covariance rho dt under the model, and they
are uncorrelated with any function of past returns, prices included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError, SingularModelError
from .market import PathState
from .params import MarketParams

__all__ = [
    "FilterState",
    "FilterHistory",
    "default_p_cov0",
    "filter_step",
    "run_filter",
    "run_filter_batch",
    "neutrality_diagnostics",
    "DiagnosticsReport",
]


def default_p_cov0(params: MarketParams) -> np.ndarray:
    """Weakly informative prior covariance varsigma varsigma* max(dt, 0.01)."""
    scale = max(params.delta_t, 0.01)
    return params.varsigma @ params.varsigma.T * scale


@dataclass(frozen=True)
class FilterState:
    """Filter state at one grid time.

    beta_hat is the drift estimate given returns observed so far, p_cov its
    error covariance, and d_nu the innovation increments accumulated to date
    (one row per processed return increment).
    """

    beta_hat: np.ndarray
    p_cov: np.ndarray
    d_nu: np.ndarray
    step: int = 0


class _FilterMats:
    """Precomputed matrices shared by every filter step."""

    def __init__(self, params: MarketParams):
        d, dt = params.d, params.delta_t
        if np.linalg.matrix_rank(params.sigma) < d:
            raise SingularModelError("volatility matrix sigma")
        self.dt = dt
        self.A = np.eye(d) + params.alpha * dt
        self.Q = params.varsigma @ params.varsigma.T * dt
        self.R_obs = params.noise_cov()
        self.sigma_inv = np.linalg.inv(params.sigma)
        self.I = np.eye(d)


def _kalman_step(beta_hat, p_cov, delta_R, mats, step):
    """One update + predict cycle; beta_hat may carry a leading path axis."""
    dt = mats.dt
    resid = delta_R - beta_hat * dt
    d_nu = resid @ mats.sigma_inv.T

    S = p_cov * dt * dt + mats.R_obs
    try:
        gain = dt * np.linalg.solve(S, p_cov).T       # K = P H* S^{-1}, H = dt I
    except np.linalg.LinAlgError:
        raise SingularModelError("innovation covariance", step) from None
    if not np.all(np.isfinite(gain)):
        raise SingularModelError("innovation covariance", step)

    beta_post = beta_hat + resid @ gain.T
    ikh = mats.I - gain * dt
    p_post = ikh @ p_cov @ ikh.T + gain @ mats.R_obs @ gain.T   # Joseph form

    beta_next = beta_post @ mats.A.T
    p_next = mats.A @ p_post @ mats.A.T + mats.Q
    p_next = 0.5 * (p_next + p_next.T)
    return beta_next, p_next, d_nu


def filter_step(state: FilterState, delta_R: np.ndarray, params: MarketParams) -> FilterState:
    """Advance the filter by one observed return increment.

    The returned state estimates the drift at the next grid time; the
    appended innovation uses the pre-update estimate, so its estimate
    argument never depends on the increment being processed.
    """
    mats = _FilterMats(params)
    beta_next, p_next, d_nu = _kalman_step(
        np.asarray(state.beta_hat, dtype=float),
        np.asarray(state.p_cov, dtype=float),
        np.asarray(delta_R, dtype=float),
        mats,
        state.step,
    )
    stacked = np.vstack([state.d_nu, d_nu[None]]) if state.d_nu.size else d_nu[None]
    return FilterState(beta_hat=beta_next, p_cov=p_next, d_nu=stacked, step=state.step + 1)


@dataclass
class FilterHistory:
    """Full filter trajectory over a path (or batch of paths).

    beta_hat rows are the estimates available at the start of each step;
    d_nu holds the N innovation increments and nu their running sum with
    nu_0 = 0.
    """

    beta_hat: np.ndarray     # (..., N + 1, d)
    p_cov: np.ndarray        # (N + 1, d, d), shared across paths
    d_nu: np.ndarray         # (..., N, d)

    @property
    def nu(self) -> np.ndarray:
        out = np.zeros(self.d_nu.shape[:-2] + (self.d_nu.shape[-2] + 1, self.d_nu.shape[-1]))
        np.cumsum(self.d_nu, axis=-2, out=out[..., 1:, :])
        return out


def _resolve_returns(path_or_returns) -> np.ndarray:
    if isinstance(path_or_returns, PathState):
        return path_or_returns.delta_R()
    return np.asarray(path_or_returns, dtype=float)


def run_filter(
    path_or_returns,
    params: MarketParams,
    p_cov0: np.ndarray | None = None,
    beta_hat0: np.ndarray | None = None,
) -> FilterHistory:
    """Filter a single path; consumes only its return increments."""
    delta_R = _resolve_returns(path_or_returns)
    if delta_R.ndim != 2:
        raise ModelError("expected a single path of return increments (N, d)")
    hist = run_filter_batch(delta_R[None], params, p_cov0, beta_hat0)
    return FilterHistory(beta_hat=hist.beta_hat[0], p_cov=hist.p_cov, d_nu=hist.d_nu[0])


def run_filter_batch(
    delta_R: np.ndarray,
    params: MarketParams,
    p_cov0: np.ndarray | None = None,
    beta_hat0: np.ndarray | None = None,
) -> FilterHistory:
    """Filter many paths at once.

    The gain schedule does not depend on the observations, so the error
    covariance is computed once and shared across the path axis.
    """
    delta_R = np.asarray(delta_R, dtype=float)
    n_paths, n, d = delta_R.shape
    mats = _FilterMats(params)

    p = default_p_cov0(params) if p_cov0 is None else np.asarray(p_cov0, dtype=float)
    b0 = params.beta0 if beta_hat0 is None else np.asarray(beta_hat0, dtype=float)

    beta_hat = np.empty((n_paths, n + 1, d))
    beta_hat[:, 0, :] = b0
    p_cov = np.empty((n + 1, d, d))
    p_cov[0] = p
    d_nu = np.empty((n_paths, n, d))

    b = np.broadcast_to(b0, (n_paths, d)).copy()
    for i in range(n):
        b, p, nu_i = _kalman_step(b, p, delta_R[:, i, :], mats, i)
        beta_hat[:, i + 1, :] = b
        p_cov[i + 1] = p
        d_nu[:, i, :] = nu_i

    return FilterHistory(beta_hat=beta_hat, p_cov=p_cov, d_nu=d_nu)


# -- innovation diagnostics -------------------------------------------------


@dataclass
class DiagnosticsReport:
    """Flat collection of (metric, component, value, stderr) rows."""

    rows: list[tuple[str, str, float, float]]

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "component", "value", "stderr"])
            for metric, comp, value, stderr in self.rows:
                writer.writerow([metric, comp, repr(float(value)), repr(float(stderr))])

    def value(self, metric: str, component: str) -> float:
        for m, c, v, _ in self.rows:
            if m == metric and c == component:
                return v
        raise KeyError((metric, component))


def neutrality_diagnostics(
    filter_hist: FilterHistory, path: PathState, params: MarketParams
) -> DiagnosticsReport:
    """Check that innovations look like model noise and ignore price levels.

    Computes per-component innovation means, the sample covariance against
    its target rho dt, and the correlation between each innovation component
    and the matching futures price at the step start.
    """
    d_nu = filter_hist.d_nu
    if d_nu.ndim != 2:
        raise ModelError("diagnostics expect a single-path filter history")
    n, d = d_nu.shape
    if n < 30:
        raise ModelError(f"need at least 30 steps for diagnostics, got {n}")

    dt = params.delta_t
    rows: list[tuple[str, str, float, float]] = []

    mean = d_nu.mean(axis=0)
    sd = d_nu.std(axis=0, ddof=1)
    for i in range(d):
        rows.append(("innovation_mean", f"{i + 1}", float(mean[i]), float(sd[i] / np.sqrt(n))))

    cov = np.cov(d_nu.T, ddof=1).reshape(d, d)
    target = params.rho * dt
    for i in range(d):
        for j in range(i, d):
            # Var of a normal sample covariance entry: (s_ii s_jj + s_ij^2) / (n - 1).
            se = np.sqrt((target[i, i] * target[j, j] + target[i, j] ** 2) / (n - 1))
            rows.append(("innovation_cov_error", f"{i + 1},{j + 1}", float(cov[i, j] - target[i, j]), float(se)))

    F_at_start = path.F[:-1, :]
    for i in range(d):
        x, y = d_nu[:, i], F_at_start[:n, i]
        corr = float(np.corrcoef(x, y)[0, 1])
        rows.append(("innovation_price_corr", f"{i + 1}", corr, float(1.0 / np.sqrt(n))))

    return DiagnosticsReport(rows=rows)
