"""Self-financing wealth accounting over a market path.

The primitive bookkeeping identity is the cash form

    X_{n+1} = X_n + (1 - m) r X_n dt + P_n* diag(f) dF_n
              - 1/2 c* diag(f) |dP_n|

with positions P in contracts and slippage charged when the trade happens.
When positions come from weights, P_i = X k_i pi_i / C_i, the same step can
be written against the return decomposition,

    X_{n+1} = X_n (1 + (1 - m) r dt + pi_eff* (beta - c_tilde) dt
              + pi_eff* sigma dW),        pi_eff = k * pi,

and the two agree to rounding whenever the relative cost is finite.  Wealth
is admissible while nonnegative; a path whose wealth would go below zero is
absorbed at zero and stays there.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ModelError
from .filtering import run_filter_batch
from .market import PathBatch, PathState
from .measure import MeasureState
from .params import MarketParams
from .strategies import Strategy, StrategyObs
from .trading import PositionBook, contract_price, cost_term, position_from_weights

__all__ = [
    "WealthLedger",
    "step_wealth",
    "step_wealth_cash",
    "run_backtest",
    "discounted_series",
    "write_wealth_csv",
    "summary_dict",
]


def step_wealth(
    X,
    pi: np.ndarray,
    beta: np.ndarray,
    c_tilde: np.ndarray,
    dW: np.ndarray,
    params: MarketParams,
) -> tuple[np.ndarray, np.ndarray]:
    """One step of the return-form recursion.

    pi is the effective weight vector (gearing already applied).  Returns
    (X_next, violated); wealth that would go negative is floored at zero
    and reported through the flag.
    """
    X = np.asarray(X, dtype=float)
    pi = np.asarray(pi, dtype=float)
    dt = params.delta_t
    drift = np.einsum("...i,...i->...", pi, np.asarray(beta, float) - np.asarray(c_tilde, float))
    noise = np.einsum("...i,ij,...j->...", pi, params.sigma, np.asarray(dW, float))
    X_next = X * (1.0 + (1.0 - params.m) * params.r * dt + drift * dt + noise)
    violated = X_next < 0
    return np.where(violated, 0.0, X_next), violated


def step_wealth_cash(
    X,
    P: np.ndarray,
    P_prev: np.ndarray,
    delta_F: np.ndarray,
    params: MarketParams,
) -> tuple[np.ndarray, np.ndarray]:
    """One step of the cash-form recursion with positions in contracts."""
    X = np.asarray(X, dtype=float)
    P = np.asarray(P, dtype=float)
    dP = np.abs(P - np.asarray(P_prev, float))
    gains = np.einsum("...i,...i->...", P, params.f * np.asarray(delta_F, float))
    slippage = 0.5 * np.einsum("...i,...i->...", dP, params.c_spread * params.f)
    X_next = X + (1.0 - params.m) * params.r * params.delta_t * X + gains - slippage
    violated = X_next < 0
    return np.where(violated, 0.0, X_next), violated


@dataclass
class WealthLedger:
    """Backtest output: wealth path plus the per-step trading record.

    Arrays carry a leading path axis when the backtest ran on a batch.
    events is a list of (path, step, kind) tuples for guard, clip, zero-cost
    fallback and admissibility incidents.
    """

    t_grid: np.ndarray
    X: np.ndarray                     # (..., N + 1)
    book: PositionBook
    events: list[tuple[int, int, str]] = field(default_factory=list)
    dead: np.ndarray | None = None    # (...,) bool, absorbed at zero
    beta_hat: np.ndarray | None = None

    @property
    def pi_hist(self) -> np.ndarray:
        return self.book.pi

    @property
    def P_hist(self) -> np.ndarray:
        return self.book.P

    @property
    def cost_hist(self) -> np.ndarray:
        return self.book.c_tilde

    @property
    def cash_cost_hist(self) -> np.ndarray:
        return self.book.cash_cost

    def terminal(self) -> np.ndarray:
        return self.X[..., -1]


def run_backtest(
    paths: PathState | PathBatch,
    strategy: Strategy,
    params: MarketParams,
    x0: float,
    cap: np.ndarray | None = None,
    integer_contracts: bool = False,
    p_cov0: np.ndarray | None = None,
    beta_hat0: np.ndarray | None = None,
) -> WealthLedger:
    """Run a policy over simulated or ingested paths.

    The filter (when the volatility matrix is invertible) is advanced in
    lockstep with the loop: the estimate handed to the strategy at step n
    has seen returns only up to t_n, and the increment over [t_n, t_{n+1}]
    is revealed after the weights are committed.  The cash form is the
    primitive recursion; the relative cost per step is recorded in the
    ledger for diagnostics and cross-checks.
    """
    if x0 < 0:
        raise ModelError("initial wealth must be nonnegative")
    single = isinstance(paths, PathState)
    if single:
        F = paths.F[None]
        dR_all = paths.delta_R()[None]
    else:
        F = paths.F
        dR_all = paths.delta_R()
    n_paths, n_grid, d = F.shape
    n = n_grid - 1
    t_grid = paths.t_grid

    use_filter = params.sigma_invertible()
    if use_filter:
        fhist = run_filter_batch(dR_all, params, p_cov0, beta_hat0)
        beta_hat_all = fhist.beta_hat
    else:
        beta_hat_all = None

    X = np.full(n_paths, float(x0))
    dead = X <= 0
    P_prev = np.zeros((n_paths, d))

    X_hist = np.empty((n_paths, n + 1))
    X_hist[:, 0] = X
    pi_hist = np.zeros((n_paths, n, d))
    P_hist = np.zeros((n_paths, n, d))
    trade_hist = np.zeros((n_paths, n, d))
    ct_hist = np.zeros((n_paths, n, d))
    cash_hist = np.zeros((n_paths, n, d))
    clip_hist = np.zeros((n_paths, n, d), dtype=bool)
    C_hist = np.zeros((n_paths, n, d))
    events: list[tuple[int, int, str]] = []

    strategy.reset(n_paths, params)

    for i in range(n):
        F_i = F[:, i, :]
        C_i = contract_price(F_i, params.f)
        obs = StrategyObs(
            n=i,
            t=float(t_grid[i]),
            F=F_i,
            C=C_i,
            R=(paths.R[None] if single else paths.R)[:, i, :],
            X=X,
            P_prev=P_prev,
            beta_hat=None if beta_hat_all is None else beta_hat_all[:, i, :],
        )
        pi = np.asarray(strategy.weights(obs), dtype=float)
        if pi.shape != (n_paths, d):
            raise ModelError(f"strategy returned weights with shape {pi.shape}")
        pi = np.where(dead[:, None], 0.0, pi)

        P, clipped = position_from_weights(X, pi, C_i, params.k, cap, integer_contracts)
        P = np.where(dead[:, None], 0.0, P)
        trade = P - P_prev

        c_tilde, flagged = cost_term(P, P_prev, C_i, params)
        delta_F = F[:, i + 1, :] - F_i
        X_next, violated = step_wealth_cash(X, P, P_prev, delta_F, params)

        for p_idx in np.flatnonzero(violated & ~dead):
            events.append((int(p_idx), i, "admissibility"))
        if np.any(clipped):
            for p_idx, a_idx in zip(*np.nonzero(clipped)):
                events.append((int(p_idx), i, f"clip:{a_idx + 1}"))
        if np.any(flagged):
            for p_idx, a_idx in zip(*np.nonzero(flagged)):
                events.append((int(p_idx), i, f"cash_cost_fallback:{a_idx + 1}"))

        X_hist[:, i + 1] = X_next
        pi_hist[:, i, :] = pi
        P_hist[:, i, :] = P
        trade_hist[:, i, :] = trade
        ct_hist[:, i, :] = c_tilde
        cash_hist[:, i, :] = 0.5 * params.c_spread * params.f * np.abs(trade)
        clip_hist[:, i, :] = clipped
        C_hist[:, i, :] = C_i

        dead = dead | violated | (X_next <= 0)
        X = X_next
        P_prev = np.where(dead[:, None], 0.0, P)

        strategy.observe(dR_all[:, i, :])

    book = PositionBook(
        C=C_hist[0] if single else C_hist,
        pi=pi_hist[0] if single else pi_hist,
        P=P_hist[0] if single else P_hist,
        trade=trade_hist[0] if single else trade_hist,
        c_tilde=ct_hist[0] if single else ct_hist,
        cash_cost=cash_hist[0] if single else cash_hist,
        clipped=clip_hist[0] if single else clip_hist,
        cap=cap,
    )
    return WealthLedger(
        t_grid=t_grid,
        X=X_hist[0] if single else X_hist,
        book=book,
        events=events,
        dead=dead[0] if single else dead,
        beta_hat=None if beta_hat_all is None else (beta_hat_all[0] if single else beta_hat_all),
    )


def discounted_series(ledger: WealthLedger, measure: MeasureState) -> tuple[np.ndarray, np.ndarray]:
    """Discounted wealth gamma X and density-weighted wealth H X."""
    return measure.gamma * ledger.X, measure.H * ledger.X


def realized_monetary_vol(ledger: WealthLedger, params: MarketParams, window: int = 20) -> float:
    """Annualized std of per-step position gains relative to wealth.

    The gain over step i, P_i* diag(f) dF_i, is recovered exactly from the
    ledger as the wealth change net of interest plus the slippage paid.
    """
    X = ledger.X
    cash = ledger.book.cash_cost
    if X.ndim != 1:
        X, cash = X[0], cash[0]
    n = cash.shape[0]
    interest = (1.0 - params.m) * params.r * params.delta_t * X[:n]
    gains = np.diff(X) - interest + cash.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rets = np.where(X[:n] > 0, gains / np.where(X[:n] > 0, X[:n], 1.0), 0.0)
    w = min(window, n)
    tail = rets[-w:]
    return float(tail.std(ddof=1) / np.sqrt(params.delta_t)) if w > 1 else 0.0


def write_wealth_csv(
    path: str | Path,
    ledger: WealthLedger,
    measure: MeasureState | None = None,
) -> None:
    """Per-time CSV with wealth, discounted wealth, and per-asset columns."""
    X = ledger.X
    if X.ndim != 1:
        raise ModelError("wealth CSV writer expects a single-path ledger")
    n = X.shape[0] - 1
    d = ledger.book.P.shape[-1]
    gamma_X = measure.gamma * X if measure is not None else np.full(n + 1, np.nan)
    H_X = measure.H * X if measure is not None else np.full(n + 1, np.nan)

    header = ["time", "wealth", "discounted_wealth", "H_wealth"]
    for j in range(d):
        header += [f"weight_{j + 1}", f"position_{j + 1}", f"trade_{j + 1}",
                   f"cost_relative_{j + 1}", f"cost_cash_{j + 1}"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(n + 1):
            row = [repr(float(ledger.t_grid[i])), repr(float(X[i])),
                   repr(float(gamma_X[i])), repr(float(H_X[i]))]
            for j in range(d):
                if i < n:
                    row += [
                        repr(float(ledger.book.pi[i, j])),
                        repr(float(ledger.book.P[i, j])),
                        repr(float(ledger.book.trade[i, j])),
                        repr(float(ledger.book.c_tilde[i, j])),
                        repr(float(ledger.book.cash_cost[i, j])),
                    ]
                else:
                    row += [""] * 5
            writer.writerow(row)


def summary_dict(
    ledger: WealthLedger,
    params: MarketParams,
    x0: float,
    measure: MeasureState | None = None,
    h_window: int = 20,
) -> dict:
    """Aggregate statistics for the summary JSON artifact."""
    X_T = np.atleast_1d(ledger.terminal())
    n_paths = X_T.shape[0]
    out = {
        "n_paths": int(n_paths),
        "x0": float(x0),
        "terminal_mean": float(X_T.mean()),
        "terminal_std": float(X_T.std(ddof=1)) if n_paths > 1 else 0.0,
        "terminal_min": float(X_T.min()),
        "terminal_max": float(X_T.max()),
        "admissibility_violations": sum(1 for _, _, kind in ledger.events if kind == "admissibility"),
        "clip_events": sum(1 for _, _, kind in ledger.events if kind.startswith("clip")),
        "cash_cost_fallbacks": sum(1 for _, _, kind in ledger.events if kind.startswith("cash_cost_fallback")),
        "dead_paths": int(np.count_nonzero(np.atleast_1d(ledger.dead))) if ledger.dead is not None else 0,
        "realized_monetary_vol": realized_monetary_vol(ledger, params, h_window),
    }
    if measure is not None:
        HX_T = np.atleast_1d(measure.H[..., -1] * ledger.X[..., -1])
        mean = float(HX_T.mean())
        se = float(HX_T.std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
        out["budget_mean_HX"] = mean
        out["budget_stderr"] = se
        out["budget_z_score"] = (mean - x0) / se if se > 0 else 0.0
    return out
