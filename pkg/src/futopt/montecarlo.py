"""Deterministic chunked Monte Carlo with mergeable moment accumulators.

Work is split into fixed-size chunks of paths.  Each chunk derives its own
generator from a spawned seed sequence keyed by the chunk index, and chunk
results merge in index order through a numerically stable parallel-moments
update.  The chunk layout depends only on (n_paths, chunk_size), never on
how many workers happened to execute the chunks, so the aggregate is
bit-for-bit identical at any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RunningMoments",
    "run_chunked",
    "resolve_workers",
    "DEFAULT_CHUNK",
    "WORKERS_ENV_VAR",
]

DEFAULT_CHUNK = 8192
WORKERS_ENV_VAR = "FUTOPT_WORKERS"


@dataclass
class RunningMoments:
    """Streaming mean and second central moment, mergeable across chunks."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def update(self, samples: np.ndarray) -> None:
        samples = np.asarray(samples, dtype=float).ravel()
        if samples.size == 0:
            return
        other = RunningMoments(
            n=samples.size,
            mean=float(samples.mean()),
            m2=float(((samples - samples.mean()) ** 2).sum()),
        )
        self.merge(other)

    def merge(self, other: "RunningMoments") -> None:
        if other.n == 0:
            return
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean, other.m2
            return
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean += delta * other.n / n
        self.m2 += other.m2 + delta * delta * self.n * other.n / n
        self.n = n

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    @property
    def stderr(self) -> float:
        return float(np.sqrt(self.variance / self.n)) if self.n > 1 else 0.0

    def z_score(self, target: float) -> float:
        se = self.stderr
        return (self.mean - target) / se if se > 0 else 0.0


def resolve_workers(config_value: int | None = None) -> int:
    """Worker count: environment variable first, then config, then 1."""
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"{WORKERS_ENV_VAR} must be an integer, got {env!r}") from None
    if config_value:
        return max(1, int(config_value))
    return 1


def chunk_layout(n_total: int, chunk_size: int = DEFAULT_CHUNK) -> list[tuple[int, int]]:
    """Fixed (start, size) pairs covering n_total paths."""
    layout = []
    start = 0
    while start < n_total:
        size = min(chunk_size, n_total - start)
        layout.append((start, size))
        start += size
    return layout


def run_chunked(
    n_paths: int,
    seed,
    chunk_fn,
    chunk_size: int = DEFAULT_CHUNK,
    workers: int | None = None,
) -> dict[str, RunningMoments]:
    """Evaluate chunk_fn over fixed chunks and merge named sample streams.

    chunk_fn(seed_seq, n_in_chunk) returns a dict mapping statistic names to
    per-path sample arrays.  Chunks may run on a thread pool; merging always
    happens serially in chunk order.
    """
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    layout = chunk_layout(int(n_paths), chunk_size)
    children = root.spawn(len(layout))
    n_workers = resolve_workers(workers)

    def job(idx: int):
        return chunk_fn(children[idx], layout[idx][1])

    if n_workers > 1 and len(layout) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(job, range(len(layout))))
    else:
        results = [job(i) for i in range(len(layout))]

    merged: dict[str, RunningMoments] = {}
    for res in results:                      # fixed chunk order
        for key, samples in res.items():
            merged.setdefault(key, RunningMoments()).update(samples)
    return merged
