import math

import numpy as np
import pytest

from reinforced_loops.environment import MixingMeasure, au_matrix, quadrature_expectation
from reinforced_loops.errors import GraphError, StepCapError
from reinforced_loops.graph import Graph, bundled_graph
from reinforced_loops.rng import Stream
from reinforced_loops.vrjp import (
    VrjpState, kill_at_root, local_time_threshold, simulate_vrjp, step_limit, theta_vector, time_change, until,
    vrjp_killing_threshold_statistics,
)

from conftest import within_3se

PAIR = Graph(["1", "2"], [("1", "2", 1.0)])


def test_first_holding_time_mean():
    rs = Stream(1)
    y = np.array([VrjpState(PAIR.W, np.ones(2)).step(0, rs)[0] for _ in range(100_000)])
    assert within_3se(y.mean(), y.std(ddof=1) / math.sqrt(len(y)), 1.0)


def test_rate_back_uses_accumulated_local_time():
    st = VrjpState(PAIR.W, np.ones(2))
    t1, j = st.step(0, Stream(2))
    assert j == 1 and st.L[0] == 1.0 + t1
    # with a single neighbour the holding rate at 2 is W * L_1
    rs = Stream(3)
    ys = []
    for _ in range(50_000):
        s = VrjpState(PAIR.W, np.array([1.0 + t1, 1.0]))
        ys.append(s.step(1, rs)[0])
    ys = np.array(ys)
    assert within_3se(ys.mean(), ys.std(ddof=1) / math.sqrt(len(ys)), 1.0 / (1.0 + t1))


def test_threshold_stop_is_exact():
    tr = simulate_vrjp(bundled_graph("triangle"), "1", 1.0, local_time_threshold("1", 2.3), 4)
    assert tr.L["1"] == 2.3
    assert tr.end_reason == "local_time_threshold_hit"
    tr = simulate_vrjp(bundled_graph("triangle"), "1", 1.0, local_time_threshold("1", 1.0), 4)
    assert tr.steps == [] and tr.L == {"1": 1.0, "2": 1.0, "3": 1.0}


def test_local_time_bookkeeping():
    tr = simulate_vrjp(bundled_graph("K4+root"), "2", {"1": 0.5, "3": 2.0}, kill_at_root(), 5)
    spent = sum(tr.L[v] - tr.theta[v] for v in tr.L)
    assert abs(spent - tr.duration) <= 1e-10 * tr.duration
    for v in tr.L:
        assert math.isclose(tr.L[v], tr.theta[v] + sum(y for w, y in tr.steps if w == v), rel_tol=1e-12)
    assert tr.last_vertex_before_root == tr.steps[-1][0]


def test_time_change():
    tr = simulate_vrjp(bundled_graph("2-path+root"), "1", 1.0, kill_at_root(), 6)
    z, S = time_change(tr)
    assert [v for v, _ in z.steps] == [v for v, _ in tr.steps]
    for v in S:
        assert math.isclose(math.sqrt(S[v] + tr.theta[v] ** 2), tr.L[v], rel_tol=1e-10)
        assert math.isclose(S[v], sum(h for w, h in z.steps if w == v), rel_tol=1e-12, abs_tol=1e-15)
    s = 0.4
    one = simulate_vrjp(PAIR, "1", 1.0, step_limit(1), 0)
    z1, _ = time_change(one)
    s = one.steps[0][1]
    assert math.isclose(z1.steps[0][1], (1 + s) ** 2 - 1, rel_tol=1e-12)
    zero = simulate_vrjp(PAIR, "1", 1.0, step_limit(0), 0)
    assert time_change(zero)[1] == {"1": 0.0, "2": 0.0}


def test_callback_and_cap():
    tr = simulate_vrjp(bundled_graph("triangle"), "1", 1.0, until(lambda i, L: i == 2), 3)
    assert tr.steps[-1][0] != "3" and tr.end_reason == "tree_completed"
    with pytest.raises(StepCapError):
        simulate_vrjp(bundled_graph("triangle"), "1", 1.0, until(lambda i, L: False, cap=20), 3)


def test_invalid_inputs():
    with pytest.raises(GraphError):
        theta_vector(PAIR, [1.0, 0.0])
    with pytest.raises(GraphError):
        simulate_vrjp(bundled_graph("triangle"), "1", 1.0, kill_at_root(), 0)


def test_killed_S_matches_mixture_of_green_diagonals(single):
    full = single.full()
    rs = Stream(7)
    S = []
    for _ in range(60_000):
        st = VrjpState(full.W, np.ones(2))
        i = 0
        while True:
            _, j = st.step(i, rs)
            if j == 1:
                break
            i = j
        S.append(st.L[0] ** 2 - 1.0)
    S = np.array(S)
    # environment pinned at the starting vertex; quenched generator W e^{u_j-u_i}/2 has Green diagonal 2 (A^u)^{-1}_11
    nu = MixingMeasure(single, "1", 1.0)
    target, _ = quadrature_expectation(nu, f=lambda U: 2.0 / au_matrix(full.W, U)[:, 0, 0], tol=1e-9)
    assert within_3se(S.mean(), S.std(ddof=1) / math.sqrt(len(S)), target)


def test_statistics_wrapper(path2):
    L, b = vrjp_killing_threshold_statistics(path2, "2", 1.0, kill_at_root(), 11)
    tr = simulate_vrjp(path2, "2", 1.0, kill_at_root(), 11)
    assert L == tr.L and b == tr.last_vertex_before_root
