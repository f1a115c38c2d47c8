"""Relative risk, exponential martingale, and state price density.

Given a relative risk process theta solving rho sigma theta = beta_eff, the
exponential martingale

    Z_n = exp{ -sum theta* dW - 1/2 sum theta* rho theta dt }

defines the measure change; the shifted increments dW~ = dW + rho theta dt
behave like Brownian increments under the new measure.  Discounting by the
margin-adjusted factor gamma = exp{-(1 - m) r t} gives the state price
density H = gamma Z.  The optional projection zeta plays the same role for
an observable estimate theta_hat, on the shifted increments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError, SingularModelError
from .params import MarketParams

__all__ = [
    "MeasureState",
    "relative_risk",
    "cap_relative_risk",
    "exponential_martingale",
    "martingale_recursion",
    "change_measure",
    "discount_and_density",
    "zeta_projection",
    "build_measure_state",
]


def relative_risk(beta_eff: np.ndarray, params: MarketParams) -> np.ndarray:
    """Solve rho sigma theta = beta_eff row-wise.

    beta_eff is typically the drift (or its estimate) net of the relative
    cost term; with zero costs it is the drift itself.
    """
    beta_eff = np.asarray(beta_eff, dtype=float)
    A = params.rho @ params.sigma
    try:
        flat = beta_eff.reshape(-1, params.d)
        theta = np.linalg.solve(A, flat.T).T
    except np.linalg.LinAlgError:
        raise SingularModelError("rho sigma product") from None
    if not np.all(np.isfinite(theta)):
        raise SingularModelError("rho sigma product")
    return theta.reshape(beta_eff.shape)


def cap_relative_risk(theta: np.ndarray, theta_max: float = 10.0) -> tuple[np.ndarray, int]:
    """Scale rows with Euclidean norm above theta_max back onto the cap.

    A crude integrability safeguard: with the cap in force the exponential
    martingale has moments of every order, and E[Z] = 1 can be checked by
    simulation rather than assumed.
    """
    theta = np.asarray(theta, dtype=float)
    norms = np.linalg.norm(theta, axis=-1, keepdims=True)
    over = norms > theta_max
    n_capped = int(np.count_nonzero(over))
    if n_capped == 0:
        return theta.copy(), 0
    scale = np.where(over, theta_max / np.where(norms > 0, norms, 1.0), 1.0)
    return theta * scale, n_capped


def _quad_form(theta: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """theta* rho theta per row, any leading shape."""
    return np.einsum("...i,ij,...j->...", theta, rho, theta)


def exponential_martingale(theta: np.ndarray, dW: np.ndarray, params: MarketParams) -> np.ndarray:
    """Closed-form Z along the path; Z_0 = 1 and Z stays positive.

    theta and dW have shape (..., N, d); the result has shape (..., N + 1).
    Raises if the exponent overflows to a non-finite value.
    """
    theta = np.asarray(theta, dtype=float)
    dW = np.asarray(dW, dtype=float)
    a = np.einsum("...i,...i->...", theta, dW)
    q = _quad_form(theta, params.rho) * params.delta_t
    log_z = np.zeros(a.shape[:-1] + (a.shape[-1] + 1,))
    np.cumsum(-a - 0.5 * q, axis=-1, out=log_z[..., 1:])
    with np.errstate(over="ignore"):
        Z = np.exp(log_z)
    if not np.all(np.isfinite(Z)):
        bad = np.argwhere(~np.isfinite(Z))
        raise ModelError(f"exponential martingale overflowed at step {int(bad[0][-1])}")
    return Z


def martingale_recursion(theta: np.ndarray, dW: np.ndarray) -> np.ndarray:
    """First-order recursion Z_{n+1} = Z_n (1 - theta* dW).

    Kept as an independent cross-check of the closed form; the two agree to
    first order in dt step by step.
    """
    a = np.einsum("...i,...i->...", np.asarray(theta, float), np.asarray(dW, float))
    Z = np.ones(a.shape[:-1] + (a.shape[-1] + 1,))
    np.cumprod(1.0 - a, axis=-1, out=Z[..., 1:])
    return Z


def martingale_recursion_gap(theta, dW, params) -> tuple[float, float]:
    """Max per-step gap between closed-form and recursion growth factors.

    Returns (max_gap, c_hat) where c_hat = max_gap / dt estimates the
    constant in the first-order agreement bound.
    """
    theta = np.asarray(theta, dtype=float)
    dW = np.asarray(dW, dtype=float)
    a = np.einsum("...i,...i->...", theta, dW)
    q = _quad_form(theta, params.rho) * params.delta_t
    gap = np.abs(np.exp(-a - 0.5 * q) - (1.0 - a))
    max_gap = float(np.max(gap))
    return max_gap, max_gap / params.delta_t


def change_measure(theta: np.ndarray, dW: np.ndarray, params: MarketParams) -> np.ndarray:
    """Shifted Brownian increments dW~ = dW + rho theta dt."""
    theta = np.asarray(theta, dtype=float)
    return np.asarray(dW, dtype=float) + (theta @ params.rho) * params.delta_t


def discount_and_density(params: MarketParams, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Adjusted discount gamma and state price density H = gamma Z.

    Margin m scales the financed fraction: gamma_n = exp{-(1 - m) r t_n}.
    """
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[-1] - 1
    rate = (1.0 - params.m) * params.r
    gamma = np.exp(-rate * params.delta_t * np.arange(n + 1))
    return gamma, gamma * Z


def zeta_projection(
    theta_hat: np.ndarray, dW_tilde: np.ndarray, params: MarketParams
) -> tuple[np.ndarray, float]:
    """Observable density factor on the shifted increments.

    zeta_n = exp{ -sum theta_hat* dW~ + 1/2 sum theta_hat* rho theta_hat dt }

    Also validates the growth recursion d(1/zeta) = (1/zeta) theta_hat* dW~
    step by step: the closed-form growth factor of 1/zeta is compared with
    its Taylor polynomial through third order in the increment, which keeps
    every term of order below dt^2.  The maximum relative mismatch over the
    path is returned alongside zeta.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    dW_tilde = np.asarray(dW_tilde, dtype=float)
    a = np.einsum("...i,...i->...", theta_hat, dW_tilde)
    q = _quad_form(theta_hat, params.rho) * params.delta_t

    log_zeta = np.zeros(a.shape[:-1] + (a.shape[-1] + 1,))
    np.cumsum(-a + 0.5 * q, axis=-1, out=log_zeta[..., 1:])
    zeta = np.exp(log_zeta)
    if not np.all(np.isfinite(zeta)):
        raise ModelError("zeta projection overflowed")

    # Growth factor of 1/zeta is exp(u) with u = a - q/2; the recursion keeps
    # terms up to and including u^3 ~ dt^{3/2}.
    u = a - 0.5 * q
    poly = 1.0 + u + 0.5 * u * u + u * u * u / 6.0
    gap = float(np.max(np.abs(np.exp(u) - poly) / np.exp(u))) if u.size else 0.0
    return zeta, gap


@dataclass
class MeasureState:
    """Measure-change quantities along one path (or batch of paths)."""

    theta: np.ndarray        # (..., N, d), after any cap
    Z: np.ndarray            # (..., N + 1)
    W_tilde: np.ndarray      # (..., N + 1, d), cumulative, starts at 0
    gamma: np.ndarray        # (N + 1,)
    H: np.ndarray            # (..., N + 1)
    n_capped: int = 0

    def validate(self) -> None:
        if not np.allclose(self.Z[..., 0], 1.0):
            raise ModelError("Z must start at 1")
        if np.any(self.Z <= 0):
            raise ModelError("Z must stay positive")
        if not np.allclose(self.gamma[0], 1.0):
            raise ModelError("gamma must start at 1")
        if np.any(np.diff(self.gamma) > 1e-15):
            raise ModelError("gamma must be non-increasing for r >= 0")
        if not np.allclose(self.H, self.gamma * self.Z):
            raise ModelError("H must equal gamma * Z")


def build_measure_state(
    theta: np.ndarray,
    dW: np.ndarray,
    params: MarketParams,
    theta_max: float | None = 10.0,
) -> MeasureState:
    """Assemble Z, W~, gamma, H from a relative risk path and increments."""
    theta = np.asarray(theta, dtype=float)
    n_capped = 0
    if theta_max is not None:
        theta, n_capped = cap_relative_risk(theta, theta_max)
    Z = exponential_martingale(theta, dW, params)
    dW_t = change_measure(theta, dW, params)
    W_tilde = np.zeros(dW_t.shape[:-2] + (dW_t.shape[-2] + 1, dW_t.shape[-1]))
    np.cumsum(dW_t, axis=-2, out=W_tilde[..., 1:, :])
    gamma, H = discount_and_density(params, Z)
    return MeasureState(theta=theta, Z=Z, W_tilde=W_tilde, gamma=gamma, H=H, n_capped=n_capped)
