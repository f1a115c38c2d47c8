"""Simulation of futures prices, returns, and the latent drift.

Price dynamics follow a guarded multiplicative Euler scheme,

    F_{n+1} = F_n * max(1 + beta_n dt + (sigma dW)_n, floor)

so prices stay strictly positive, and the cumulative return process R
accumulates exactly dR = dF / F, keeping the price and return filtrations
interchangeable.  The latent drift follows a linear recursion

    beta_{n+1} = beta_n + alpha beta_n dt + varsigma dW2_n

driven by a second, independent Brownian increment stream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ModelError
from .params import MarketParams

__all__ = [
    "PathState",
    "PathBatch",
    "correlated_increments",
    "simulate_drift",
    "simulate_path",
    "simulate_batch",
    "build_path",
    "returns_from_prices",
    "prices_from_returns",
    "read_path_csv",
]


@dataclass
class PathState:
    """One simulated (or ingested) market path on the grid t_0 .. t_N.

    F, R and beta have N + 1 rows; the increment arrays dW, dW2 have N rows.
    Latent fields are None for paths ingested from price data alone.
    """

    t_grid: np.ndarray
    F: np.ndarray
    R: np.ndarray
    beta: np.ndarray | None = None
    dW: np.ndarray | None = None
    dW2: np.ndarray | None = None
    guard_events: int = 0
    guard_warning: bool = False

    @property
    def n_steps(self) -> int:
        return self.F.shape[0] - 1

    @property
    def d(self) -> int:
        return self.F.shape[1]

    def delta_R(self) -> np.ndarray:
        return np.diff(self.R, axis=0)

    def delta_F(self) -> np.ndarray:
        return np.diff(self.F, axis=0)

    def to_csv(self, path: str | Path) -> None:
        """Write (time, F_1..F_d, R_1..R_d, beta_1..beta_d) rows."""
        d = self.d
        header = (
            ["time"]
            + [f"F_{i + 1}" for i in range(d)]
            + [f"R_{i + 1}" for i in range(d)]
            + [f"beta_{i + 1}" for i in range(d)]
        )
        beta = self.beta
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for n in range(self.n_steps + 1):
                row = [repr(float(self.t_grid[n]))]
                row += [repr(float(v)) for v in self.F[n]]
                row += [repr(float(v)) for v in self.R[n]]
                if beta is not None:
                    row += [repr(float(v)) for v in beta[n]]
                else:
                    row += [""] * d
                writer.writerow(row)


@dataclass
class PathBatch:
    """A set of paths sharing one grid; arrays carry a leading path axis."""

    t_grid: np.ndarray
    F: np.ndarray       # (n_paths, N + 1, d)
    R: np.ndarray
    beta: np.ndarray
    dW: np.ndarray      # (n_paths, N, d)
    dW2: np.ndarray
    guard_events: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def n_paths(self) -> int:
        return self.F.shape[0]

    @property
    def n_steps(self) -> int:
        return self.F.shape[1] - 1

    def delta_R(self) -> np.ndarray:
        return np.diff(self.R, axis=1)

    def path(self, i: int) -> PathState:
        return PathState(
            t_grid=self.t_grid,
            F=self.F[i],
            R=self.R[i],
            beta=self.beta[i],
            dW=self.dW[i],
            dW2=self.dW2[i],
            guard_events=int(self.guard_events[i]),
        )


# -- increment generation ---------------------------------------------------


def _generator(seed_seq: np.random.SeedSequence) -> np.random.Generator:
    # Philox is counter based, so spawned sub-streams are cheap and disjoint.
    return np.random.Generator(np.random.Philox(seed_seq))


def _seed_seq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def correlated_increments(params: MarketParams, seed, n_steps: int | None = None) -> np.ndarray:
    """Draw (N, d) Brownian increments with E[dW dW*] = rho dt.

    Deterministic given the seed.  Uses the Cholesky factor of rho; a
    non-positive-definite rho raises with the offending leading minor.
    """
    n = params.n_steps if n_steps is None else int(n_steps)
    if n < 1:
        raise ModelError("n_steps must be a positive integer")
    L = params.rho_cholesky()
    z = _generator(_seed_seq(seed)).standard_normal((n, params.d))
    return np.sqrt(params.delta_t) * (z @ L.T)


def _independent_increments(params, seed_seq, shape) -> np.ndarray:
    z = _generator(seed_seq).standard_normal(shape)
    return np.sqrt(params.delta_t) * z


def simulate_drift(params: MarketParams, dW2: np.ndarray) -> np.ndarray:
    """Latent drift path from given independent increments.

    dW2 may be (N, d) or (n_paths, N, d); output gains one grid row.
    """
    dW2 = np.asarray(dW2, dtype=float)
    n = dW2.shape[-2]
    A = np.eye(params.d) + params.alpha * params.delta_t
    shock = dW2 @ params.varsigma.T
    beta = np.empty(dW2.shape[:-2] + (n + 1, params.d))
    beta[..., 0, :] = params.beta0
    for i in range(n):
        beta[..., i + 1, :] = beta[..., i, :] @ A.T + shock[..., i, :]
    return beta


def build_path(params: MarketParams, dW: np.ndarray, dW2: np.ndarray) -> PathState:
    """Deterministically assemble a path from given increment arrays."""
    batch = _assemble(params, dW[None], dW2[None])
    return batch.path(0)


def _assemble(params: MarketParams, dW: np.ndarray, dW2: np.ndarray) -> PathBatch:
    n_paths, n, d = dW.shape
    dt = params.delta_t
    beta = simulate_drift(params, dW2)

    noise = dW @ params.sigma.T
    factor = 1.0 + beta[:, :n, :] * dt + noise
    guarded = np.maximum(factor, params.pos_floor)
    guard_events = (factor < params.pos_floor).sum(axis=(1, 2))

    F = np.empty((n_paths, n + 1, d))
    F[:, 0, :] = params.F0
    F[:, 1:, :] = params.F0 * np.cumprod(guarded, axis=1)

    dR = guarded - 1.0
    R = np.zeros((n_paths, n + 1, d))
    np.cumsum(dR, axis=1, out=R[:, 1:, :])

    return PathBatch(
        t_grid=params.t_grid[: n + 1],
        F=F,
        R=R,
        beta=beta,
        dW=dW,
        dW2=dW2,
        guard_events=guard_events,
    )


def simulate_batch(params: MarketParams, seed, n_paths: int) -> PathBatch:
    """Simulate n_paths independent paths from one seed.

    The price noise and the drift noise come from disjoint sub-streams of a
    single counter-based generator, so runs are reproducible bit for bit.
    """
    if n_paths < 1:
        raise ModelError("n_paths must be a positive integer")
    ss_w, ss_w2 = _seed_seq(seed).spawn(2)
    n, d = params.n_steps, params.d
    L = params.rho_cholesky()
    z = _generator(ss_w).standard_normal((n_paths, n, d))
    dW = np.sqrt(params.delta_t) * (z @ L.T)
    dW2 = _independent_increments(params, ss_w2, (n_paths, n, d))
    return _assemble(params, dW, dW2)


def simulate_path(params: MarketParams, seed) -> PathState:
    """Simulate a single path; see simulate_batch for the RNG contract."""
    batch = simulate_batch(params, seed, 1)
    path = batch.path(0)
    frac = path.guard_events / (params.n_steps * params.d)
    path.guard_warning = frac > params.guard_warn_fraction
    return path


# -- price / return conversions --------------------------------------------


def returns_from_prices(F: np.ndarray) -> np.ndarray:
    """Cumulative return process with R_0 = 0 and dR = dF / F."""
    F = np.asarray(F, dtype=float)
    dR = np.diff(F, axis=-2) / F[..., :-1, :]
    R = np.zeros_like(F)
    np.cumsum(dR, axis=-2, out=R[..., 1:, :])
    return R


def prices_from_returns(F0: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Invert returns_from_prices: F_n = F0 * prod(1 + dR)."""
    R = np.asarray(R, dtype=float)
    dR = np.diff(R, axis=-2)
    F = np.empty_like(R)
    F[..., 0, :] = F0
    F[..., 1:, :] = F0 * np.cumprod(1.0 + dR, axis=-2)
    return F


def read_path_csv(path: str | Path) -> PathState:
    """Read a path previously written by PathState.to_csv."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    d = sum(1 for h in header if h.startswith("F_"))
    t = np.array([float(r[0]) for r in rows])
    F = np.array([[float(v) for v in r[1 : 1 + d]] for r in rows])
    R = np.array([[float(v) for v in r[1 + d : 1 + 2 * d]] for r in rows])
    beta_cells = [r[1 + 2 * d : 1 + 3 * d] for r in rows]
    if all(all(c != "" for c in row) for row in beta_cells):
        beta = np.array([[float(v) for v in row] for row in beta_cells])
    else:
        beta = None
    return PathState(t_grid=t, F=F, R=R, beta=beta)
