import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reinforced_loops.errors import ConditioningError, GraphError, StepCapError
from reinforced_loops.graph import bundled_graph, green_function, laplacian, with_root_weight
from reinforced_loops.loops import occupation_array
from reinforced_loops.markov import (
    GeneratorSpec, fixed_duration, kill_at_root, killed_green, loop_erase, run_wilson, sample_gff,
    simulate_jump, step_limit, wilson,
)
from reinforced_loops.rng import Stream

from conftest import within_3se


def test_killing_time_is_exponential(single):
    h = 0.7
    gen = GeneratorSpec.plain(with_root_weight(single, h))
    rs = Stream(1)
    t = np.array([gen.step(0, rs)[0] for _ in range(100_000)])
    assert within_3se(t.mean(), t.std(ddof=1) / math.sqrt(len(t)), 1 / h)
    tr = simulate_jump(gen, "1", kill_at_root(), 3)
    assert tr.end_reason == "killed_at_root" and tr.last_vertex_before_root == "1"


def test_successor_frequencies_follow_rates():
    ag = bundled_graph("triangle+root")
    gen = GeneratorSpec.plain(ag)
    rs = Stream(2)
    n = 60_000
    nxt = np.bincount([gen.step(0, rs)[1] for _ in range(n)], minlength=4)
    W = ag.full().W
    p = W[0] / W[0].sum()
    for j in range(4):
        f = nxt[j] / n
        assert abs(f - p[j]) <= 3 * math.sqrt(p[j] * (1 - p[j]) / n) + 1e-15


def test_twisted_rates():
    ag = bundled_graph("2-path+root")
    u = np.array([0.3, -0.2, 0.0])
    gen = GeneratorSpec.twisted(ag, u)
    W = ag.full().W
    for i in range(3):
        for j in range(3):
            if i != j:
                assert math.isclose(gen.rates[i, j], 0.5 * W[i, j] * math.exp(u[j] - u[i]), rel_tol=1e-14)


def test_same_seed_same_trajectory(path2):
    gen = GeneratorSpec.plain(path2)
    a = simulate_jump(gen, "1", kill_at_root(), 42)
    b = simulate_jump(gen, "1", kill_at_root(), 42)
    assert a.steps == b.steps


def test_stop_rules(path2):
    gen = GeneratorSpec.plain(path2)
    tr = simulate_jump(gen, "1", fixed_duration(2.0), 0)
    assert math.isclose(tr.duration, 2.0) or tr.end_reason == "killed_at_root"
    tr = simulate_jump(gen, "1", step_limit(0), 0)
    assert tr.steps == [] and tr.end_reason == "step_cap"
    with pytest.raises(GraphError):
        simulate_jump(gen, "d", kill_at_root(), 0)
    with pytest.raises(StepCapError):
        simulate_jump(GeneratorSpec.plain(bundled_graph("triangle")), "1", fixed_duration(1e9, cap=5), 0)


def test_trajectory_invariants(path2):
    tr = simulate_jump(GeneratorSpec.plain(path2), "2", kill_at_root(), 9)
    vs = [v for v, _ in tr.steps]
    assert all(a != b for a, b in zip(vs, vs[1:]))
    assert all(h > 0 for _, h in tr.steps)
    lt = tr.local_times()
    assert math.isclose(sum(lt.values()), tr.duration)


def test_loop_erase_examples():
    branch, loops = loop_erase(list("abcbd"))
    assert [v for v, _ in branch] == ["a", "b", "d"]
    assert len(loops) == 1 and loops[0].vertices == ["b", "c", "b"]
    branch, loops = loop_erase(list("abc"))
    assert [v for v, _ in branch] == ["a", "b", "c"] and loops == []
    branch, loops = loop_erase(list("abac"))
    assert [v for v, _ in branch] == ["a", "c"]
    assert loops[0].vertices == ["a", "b", "a"]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abcde"), st.floats(0.1, 5.0)), min_size=1, max_size=40))
def test_loop_erase_conservation(path):
    # collapse consecutive repeats: a path never stays put across a jump
    clean = [path[0]]
    for v, h in path[1:]:
        if v != clean[-1][0]:
            clean.append((v, h))
    branch, loops = loop_erase(clean)
    names = [v for v, _ in branch]
    assert len(names) == len(set(names))
    pieces = sorted(list(branch) + [s for l in loops for s in l.steps])
    assert pieces == sorted(clean)


@pytest.mark.parametrize("variant", ["ordered", "popping", "single"])
def test_wilson_tree_and_trivial_loops(variant, single):
    tree, loops = wilson(single, None, variant, 3)
    assert tree.key() == (("1", "d"),)
    assert len(loops.nontrivial()) == 0


@pytest.mark.parametrize("variant", ["ordered", "popping", "single"])
def test_wilson_occupation_mean_is_green_diagonal(variant, path2):
    gen = GeneratorSpec.plain(path2)
    rs = Stream(4)
    occ = np.array([occupation_array(run_wilson(gen, variant, rs).loops, 3)[:2] for _ in range(20_000)])
    G = killed_green(gen)
    for i in range(2):
        assert within_3se(occ[:, i].mean(), occ[:, i].std(ddof=1) / math.sqrt(len(occ)), G[i, i])


def test_wilson_needs_root():
    with pytest.raises(GraphError):
        wilson(bundled_graph("triangle"), None, "ordered", 0)


def test_sample_gff_variance_and_covariance():
    h = 0.8
    phi = sample_gff(np.array([[h]]), None, 100_000, 5)[:, 0]
    v = phi ** 2
    assert within_3se(v.mean(), v.std(ddof=1) / math.sqrt(len(v)), 1 / h)
    ag = bundled_graph("triangle+root")
    L = laplacian(ag.full())
    fields = sample_gff(L, {3: 0.0}, 100_000, 6)
    G = green_function(L, [3])
    for i in range(3):
        for j in range(i, 3):
            prod = fields[:, i] * fields[:, j]
            assert within_3se(prod.mean(), prod.std(ddof=1) / math.sqrt(len(prod)), G[i, j])
    assert np.all(fields[:, 3] == 0.0)
    shifted = sample_gff(L, {3: 1.5}, 10, 6)
    assert np.all(shifted[:, 3] == 1.5)


def test_sample_gff_not_positive_definite():
    with pytest.raises(ConditioningError):
        sample_gff(np.array([[1.0, 2.0], [2.0, 1.0]]), None, 3, 0)
