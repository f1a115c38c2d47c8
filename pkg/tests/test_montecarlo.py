import numpy as np
import pytest

from futopt import RunningMoments, chunk_layout, resolve_workers, run_chunked
from futopt.montecarlo import WORKERS_ENV_VAR


def test_running_moments_match_direct_formulas():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(10_000)
    m = RunningMoments()
    m.update(x)
    assert m.n == 10_000
    assert m.mean == pytest.approx(x.mean(), rel=1e-12)
    assert m.variance == pytest.approx(x.var(ddof=1), rel=1e-10)
    assert m.stderr == pytest.approx(x.std(ddof=1) / 100.0, rel=1e-10)


def test_moment_merge_is_exact():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(5000) * 3.0 + 1.0
    whole = RunningMoments()
    whole.update(x)
    pieces = RunningMoments()
    for part in np.array_split(x, 7):
        block = RunningMoments()
        block.update(part)
        pieces.merge(block)
    assert pieces.n == whole.n
    assert pieces.mean == pytest.approx(whole.mean, rel=1e-13)
    assert pieces.variance == pytest.approx(whole.variance, rel=1e-12)


def test_z_score_sign_convention():
    m = RunningMoments()
    m.update(np.full(100, 2.0) + np.linspace(-0.1, 0.1, 100))
    assert m.z_score(2.0) == pytest.approx(0.0, abs=1e-10)
    assert m.z_score(1.0) > 0


def test_chunk_layout_covers_range():
    layout = chunk_layout(20_001, 8192)
    assert layout[0] == (0, 8192)
    assert sum(size for _, size in layout) == 20_001
    starts = [s for s, _ in layout]
    assert starts == sorted(starts)
    assert chunk_layout(5, 8192) == [(0, 5)]


def test_resolve_workers_priority(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV_VAR, raising=False)
    assert resolve_workers(None) == 1
    assert resolve_workers(0) == 1
    assert resolve_workers(3) == 3
    monkeypatch.setenv(WORKERS_ENV_VAR, "5")
    assert resolve_workers(3) == 5
    monkeypatch.setenv(WORKERS_ENV_VAR, "lots")
    with pytest.raises(ValueError, match="FUTOPT_WORKERS must be an integer"):
        resolve_workers(None)


def _noisy_chunk(seed_seq, n):
    rng = np.random.default_rng(seed_seq)
    draws = rng.standard_normal(n)
    return {"x": draws, "x2": draws**2}


def test_run_chunked_worker_count_is_invisible():
    a = run_chunked(10_000, 7, _noisy_chunk, chunk_size=1024, workers=1)
    b = run_chunked(10_000, 7, _noisy_chunk, chunk_size=1024, workers=4)
    for key in ("x", "x2"):
        assert a[key].n == b[key].n == 10_000
        assert a[key].mean == b[key].mean          # bitwise: serial merge order
        assert a[key].variance == b[key].variance


def test_run_chunked_seeding_matches_manual_spawn():
    stats = run_chunked(300, 11, _noisy_chunk, chunk_size=100, workers=1)
    manual = RunningMoments()
    for child in np.random.SeedSequence(11).spawn(3):
        manual.update(np.random.default_rng(child).standard_normal(100))
    assert stats["x"].mean == manual.mean
    assert stats["x"].variance == manual.variance
