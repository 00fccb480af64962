import numpy as np

from reinforced_loops.rng import Stream, derive_seed, worker_count


def test_derive_seed_deterministic():
    assert derive_seed(7, 3, "x") == derive_seed(7, 3, "x")
    assert derive_seed(7, 3, "x") != derive_seed(7, 3, "y")
    assert derive_seed(7, 3, "x") != derive_seed(8, 3, "x")


def test_derive_seed_no_collisions():
    seeds = {derive_seed(11, i, "replica") for i in range(100_000)}
    assert len(seeds) == 100_000
    assert all(0 <= s < 2 ** 63 for s in list(seeds)[:1000])


def test_stream_reproducible_and_laws():
    a, b = Stream(5), Stream(5)
    xa = [a.uniform() for _ in range(10)] + [a.expo() for _ in range(10)]
    xb = [b.uniform() for _ in range(10)] + [b.expo() for _ in range(10)]
    assert xa == xb
    s = Stream(9)
    e = np.array([s.expo() for _ in range(50_000)])
    assert abs(e.mean() - 1.0) < 3 * e.std() / np.sqrt(len(e))
    counts = np.bincount([s.choice([1.0, 0.0, 3.0]) for _ in range(40_000)], minlength=3)
    assert counts[1] == 0
    f = counts[0] / 40_000
    assert abs(f - 0.25) < 3 * np.sqrt(0.25 * 0.75 / 40_000)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("REINFORCED_LOOPS_THREADS", "1")
    assert worker_count() == 1
    monkeypatch.setenv("REINFORCED_LOOPS_THREADS", "bogus")
    assert worker_count() >= 1
