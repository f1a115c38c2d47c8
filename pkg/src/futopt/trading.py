"""Contract-level mechanics: prices, positions, slippage, optimal weights.

Futures positions are counted in contracts.  A contract on asset i trades at
C_i = f_i F_i where f_i is the fixed unit value of one futures point.  The
only trading friction is slippage: a trade of |dP| contracts pays half the
spread c per contract, f c |dP| / 2 in cash.  Expressed relative to position
value and step length that cash cost becomes

    c_tilde_i = c_i f_i |dP_i| / (2 P_i C_i dt)

which carries the sign of the current position and scales like 1 / dt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError
from .params import MarketParams

__all__ = [
    "PositionBook",
    "contract_price",
    "position_from_weights",
    "cost_term",
    "approx_cost_term",
    "payoff_transform",
    "log_optimal_weights",
    "write_position_ledger",
]

#: Positions smaller than this many contracts cannot anchor a relative cost.
ZERO_POSITION_THRESHOLD = 1.0


def contract_price(F: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Cash price of one contract per asset, C = f * F (elementwise)."""
    F = np.asarray(F, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(F <= 0):
        raise ModelError("futures prices must be strictly positive")
    if np.any(f <= 0):
        raise ModelError("contract unit values must be strictly positive")
    return f * F


def position_from_weights(
    X,
    pi: np.ndarray,
    C: np.ndarray,
    k: np.ndarray,
    cap: np.ndarray | None = None,
    integer_contracts: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Contracts held for portfolio weights pi at wealth X.

    P_i = X k_i pi_i / C_i, clipped to +-cap_i when a cap (for instance the
    top of the order book) is given, then optionally rounded toward zero to
    whole contracts.  Returns (P, clipped) where clipped marks components
    that hit the cap.
    """
    X = np.asarray(X, dtype=float)
    P = (X[..., None] if X.ndim else X) * np.asarray(k, float) * np.asarray(pi, float)
    P = P / np.asarray(C, dtype=float)
    if cap is not None:
        cap = np.asarray(cap, dtype=float)
        if np.any(cap < 0):
            raise ModelError("position caps must be nonnegative")
        clipped = np.abs(P) > cap
        P = np.clip(P, -cap, cap)
    else:
        clipped = np.zeros(np.shape(P), dtype=bool)
    if integer_contracts:
        P = np.trunc(P)
    return P, clipped


def cost_term(
    P_now: np.ndarray,
    P_prev: np.ndarray,
    C: np.ndarray,
    params: MarketParams,
    threshold: float = ZERO_POSITION_THRESHOLD,
) -> tuple[np.ndarray, np.ndarray]:
    """Relative slippage cost of the trade P_prev -> P_now.

    Returns (c_tilde, flagged).  A zero trade costs nothing regardless of
    the position.  Components whose current position is below the threshold
    (in absolute contracts) while the trade is not cannot express the cost
    relative to the position; they get NaN and a raised flag so the caller
    can charge the cash amount directly.
    """
    P_now = np.asarray(P_now, dtype=float)
    P_prev = np.asarray(P_prev, dtype=float)
    dP = np.abs(P_now - P_prev)
    trade = dP > 0
    small = np.abs(P_now) < threshold
    flagged = trade & small

    denom = 2.0 * P_now * np.asarray(C, float) * params.delta_t
    with np.errstate(divide="ignore", invalid="ignore"):
        c_tilde = params.c_spread * params.f * dP / denom
    c_tilde = np.where(trade, c_tilde, 0.0)
    c_tilde = np.where(flagged, np.nan, c_tilde)
    return c_tilde, flagged


def approx_cost_term(
    P_star: np.ndarray,
    P_prev: np.ndarray,
    C: np.ndarray,
    params: MarketParams,
    threshold: float = ZERO_POSITION_THRESHOLD,
) -> tuple[np.ndarray, np.ndarray]:
    """Cost estimate anchored at the zero-cost optimal position P_star.

    Same formula as cost_term but with the hypothetical trade P_prev ->
    P_star and P_star in the denominator, so the estimate is available
    before the actual trade is chosen.  Carries the sign of P_star.
    """
    return cost_term(P_star, P_prev, C, params, threshold)


def payoff_transform(
    beta_hat: np.ndarray, c_hat: np.ndarray, mode: str = "soft_threshold"
) -> np.ndarray:
    """Cost-adjusted drift signal feeding the optimal weights.

    "literal" evaluates max(b - c, 0) + min(b - c, 0) verbatim, which is
    algebraically b - c.  "soft_threshold" (default) keeps a component only
    when the estimated edge clears the estimated cost,

        sign(b) * max(|b| - |c|, 0),

    matching the feasibility reading of the cost adjustment: positions whose
    drift cannot pay for their own slippage are parked at zero.
    """
    b = np.asarray(beta_hat, dtype=float)
    c = np.asarray(c_hat, dtype=float)
    if mode == "literal":
        diff = b - c
        return np.maximum(diff, 0.0) + np.minimum(diff, 0.0)
    if mode == "soft_threshold":
        return np.sign(b) * np.maximum(np.abs(b) - np.abs(c), 0.0)
    raise ModelError(f"unknown payoff transform mode: {mode!r}")


def log_optimal_weights(
    upsilon: np.ndarray, params: MarketParams, literal_product: bool = False
) -> np.ndarray:
    """Growth-optimal weights pi = (sigma* rho sigma)^{-1} upsilon.

    literal_product=True uses sigma rho sigma without the transpose; the two
    coincide whenever sigma commutes with rho (scalar or symmetric sigma).
    """
    upsilon = np.asarray(upsilon, dtype=float)
    if literal_product:
        M = params.sigma @ params.rho @ params.sigma
    else:
        M = params.sigma.T @ params.rho @ params.sigma
    try:
        flat = upsilon.reshape(-1, params.d)
        pi = np.linalg.solve(M, flat.T).T
    except np.linalg.LinAlgError:
        from .errors import SingularModelError

        raise SingularModelError("sigma rho sigma product") from None
    return pi.reshape(upsilon.shape)


@dataclass
class PositionBook:
    """Per-step record of positions and trading costs along a path."""

    C: np.ndarray            # (..., N, d) contract prices at step start
    pi: np.ndarray           # (..., N, d) weights as traded
    P: np.ndarray            # (..., N, d) positions in contracts
    trade: np.ndarray        # (..., N, d) signed contract changes
    c_tilde: np.ndarray      # (..., N, d) relative cost, NaN where flagged
    cash_cost: np.ndarray    # (..., N, d) cash slippage paid
    clipped: np.ndarray      # (..., N, d) bool
    cap: np.ndarray | None = None


def write_position_ledger(path, book: PositionBook, F: np.ndarray, t_grid: np.ndarray) -> None:
    """Long-format CSV: one row per (time, asset)."""
    import csv

    if book.P.ndim != 2:
        raise ModelError("ledger writer expects a single-path position book")
    n, d = book.P.shape
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["time", "asset", "price", "contract_price", "weight", "position",
             "trade", "cost_relative", "cost_cash", "clipped"]
        )
        for i in range(n):
            for j in range(d):
                writer.writerow(
                    [
                        repr(float(t_grid[i])),
                        j + 1,
                        repr(float(F[i, j])),
                        repr(float(book.C[i, j])),
                        repr(float(book.pi[i, j])),
                        repr(float(book.P[i, j])),
                        repr(float(book.trade[i, j])),
                        repr(float(book.c_tilde[i, j])),
                        repr(float(book.cash_cost[i, j])),
                        int(book.clipped[i, j]),
                    ]
                )
