import itertools
import math

import numpy as np
import pytest

from oracles import brute_force_min, direct_expansion
from svrconf import cssp, kernels
from svrconf.configspace import ConfigurationSpace, LinearConstraint, Parameter
from svrconf.cssp import (
    build_problem,
    direct_objective,
    node_lower_bound,
    objective,
    solve,
    solve_bnb,
    solve_enumerate,
    solve_local,
)
from svrconf.errors import BudgetExceeded, DimensionMismatch, EmptySpace, InfeasibleConfig, NoFeasibleStart, SvrConfError
from svrconf.features import Standardizer
from svrconf.svr import SvrHyper, SvrModel
from svrconf.synth import grid_space, random_model, random_problem


def model_on(space, sup_feats, sup_bits, beta, gamma, bias=0.0):
    X = np.hstack([np.asarray(sup_feats, float), np.asarray(sup_bits, float)])
    return SvrModel(X, np.asarray(beta, float), bias, SvrHyper.of(10.0, 0.1, gamma),
                    Standardizer.identity(X.shape[1]), (), (), )


def test_hamming_equals_squared_distance():
    sp = grid_space([2, 2])
    m = model_on(sp, [[0.0]], [[1, 0, 0, 1]], [1.0], 0.5)
    prob = build_problem(m, sp, [0.0])
    cfg = sp.configuration_from_encoding((0, 1, 0, 1))
    assert prob.hamming(np.array([cfg.indices]))[0, 0] == 2.0
    assert objective(prob, cfg) == pytest.approx(math.exp(-1.0))


def test_single_support_point_at_query():
    sp = grid_space([3, 2])
    c1 = sp.from_indices((2, 1))
    m = model_on(sp, [[0.3, -1.0]], [c1.encoding], [0.75], 0.9, bias=0.0)
    prob = build_problem(m, sp, [0.3, -1.0])
    assert objective(prob, c1) == 0.75


def test_zero_weights_give_bias():
    sp = grid_space([2, 3])
    m = model_on(sp, [[0.0], [1.0]], [sp.from_indices((0, 0)).encoding, sp.from_indices((1, 2)).encoding],
                 [0.0, 0.0], 1.0, bias=-2.5)
    prob = build_problem(m, sp, [0.5])
    assert all(objective(prob, c) == -2.5 for c in sp.enumerate())


def test_large_gamma_isolates_matching_term():
    sp = grid_space([2, 2, 2])
    bits = [sp.from_indices(ix).encoding for ix in ((0, 0, 0), (1, 1, 1), (0, 1, 0))]
    m = model_on(sp, [[0.0]] * 3, bits, [0.4, -0.7, 1.1], 1e3, bias=0.2)
    prob = build_problem(m, sp, [0.0])
    assert objective(prob, sp.from_indices((1, 1, 1))) == pytest.approx(-0.7 + 0.2, abs=1e-12)


def test_weights_match_from_scratch(rng):
    for _ in range(10):
        prob = random_problem(rng)
        m = prob.model
        nf = m.dim - len(prob.bit_index)
        fs = (prob.query_features - m.scaler.mean[:nf]) / m.scaler.scale[:nf]
        for i in range(0, len(m.dual_weights), 7):
            d = math.fsum((a - b) ** 2 for a, b in zip(m.support_points[i, :nf], fs))
            want = m.dual_weights[i] * math.exp(-m.gamma * d)
            assert prob.weights[i] == pytest.approx(want, rel=1e-12, abs=1e-300)


def test_factored_equals_direct_expansion(rng, backend):
    for _ in range(5):
        prob = random_problem(rng)
        rows = prob.space.feasible_indices()
        pick = rows[rng.choice(len(rows), size=min(100, len(rows)), replace=False)]
        fac = prob.objective_rows(pick)
        for r, v in zip(pick, fac):
            cfg = prob.space.from_indices(r)
            ref = direct_expansion(prob.model, prob.full_vector(cfg))
            assert v == pytest.approx(ref, rel=1e-12, abs=1e-12)
            assert v == pytest.approx(direct_objective(prob, cfg), rel=1e-9, abs=1e-12)


def test_support_order_does_not_matter(rng):
    prob = random_problem(rng)
    m = prob.model
    perm = rng.permutation(len(m.dual_weights))
    shuffled = SvrModel(m.support_points[perm], m.dual_weights[perm], m.bias, m.hyper, m.scaler,
                        m.feature_names, m.config_columns)
    p2 = build_problem(shuffled, prob.space, prob.query_features)
    rows = prob.space.feasible_indices()
    assert np.allclose(prob.objective_rows(rows), p2.objective_rows(rows), rtol=1e-12, atol=1e-12)


def test_dimension_and_feasibility_errors(rng):
    prob = random_problem(rng, n_features=3)
    with pytest.raises(DimensionMismatch):
        build_problem(prob.model, prob.space, [0.0])
    sp = ConfigurationSpace((Parameter("A", ("a0", "a1")),),
                            (LinearConstraint((("A", "a1", 1),), "<=", 0),))
    m = model_on(sp, [[0.0]], [[1, 0]], [1.0], 1.0)
    with pytest.raises(InfeasibleConfig):
        objective(build_problem(m, sp, [0.0]), sp.from_indices((1,)))


def test_enumerate_against_plain_python(rng):
    for _ in range(8):
        prob = random_problem(rng, max_support=60, max_card=400)
        sol = solve_enumerate(prob)
        ref, enc = brute_force_min(prob.space, prob.terms, prob.term_configs, prob.gamma, prob.bias)
        assert sol.objective == pytest.approx(ref, rel=1e-12, abs=1e-12)
        assert sol.status == "global_optimal" and prob.space.is_feasible(sol.config)


def test_enumerate_tie_rule_and_errors():
    sp = grid_space([3])
    m = model_on(sp, [[0.0]], [[0, 0, 0]], [0.0], 1.0)
    sol = solve_enumerate(build_problem(m, sp, [0.0]))
    # every objective equal: the smallest encoding (0,0,1) wins
    assert sol.config.encoding == (0, 0, 1)
    assert solve_bnb(build_problem(m, sp, [0.0])).config.encoding == (0, 0, 1)
    big = grid_space([4] * 11)
    mb = model_on(big, [[0.0]], [big.from_indices([0] * 11).encoding], [1.0], 1.0)
    with pytest.raises(BudgetExceeded):
        solve_enumerate(build_problem(mb, big, [0.0]))
    empty = ConfigurationSpace((Parameter("A", ("a0", "a1")),),
                               (LinearConstraint((("A", "a0", 1),), ">=", 1),
                                LinearConstraint((("A", "a1", 1),), ">=", 1)))
    me = model_on(empty, [[0.0]], [[1, 0]], [1.0], 1.0)
    with pytest.raises(EmptySpace):
        solve_enumerate(build_problem(me, empty, [0.0]))
    with pytest.raises(NoFeasibleStart):
        solve_local(build_problem(me, empty, [0.0]))


def test_bound_is_valid_on_every_partial_assignment(rng):
    for _ in range(6):
        prob = random_problem(rng, max_card=1024, max_support=80)
        sp = prob.space
        P = sp.n_parameters
        allrows = np.array(list(itertools.product(*(range(s) for s in sp.sizes))))
        vals = prob.objective_rows(allrows)
        for _ in range(30):
            k = int(rng.integers(0, P + 1))
            blocks = rng.choice(P, size=k, replace=False)
            fixed = {int(b): int(rng.integers(sp.sizes[b])) for b in blocks}
            mask = np.ones(len(allrows), bool)
            for b, v in fixed.items():
                mask &= allrows[:, b] == v
            assert node_lower_bound(prob, fixed) <= vals[mask].min() + 1e-12


def test_bnb_matches_enumeration(rng, backend):
    for _ in range(10):
        prob = random_problem(rng)
        e = solve_enumerate(prob)
        b = solve_bnb(prob, 60.0)
        assert b.status == "global_optimal"
        assert abs(b.objective - e.objective) <= 1e-9
        assert b.config.encoding == e.config.encoding
        assert prob.space.is_feasible(b.config)


def test_bnb_time_limit_zero_returns_feasible_leaf(rng):
    prob = random_problem(rng, min_card=1000)
    sol = solve_bnb(prob, 0.0)
    assert prob.space.is_feasible(sol.config)
    assert sol.status in ("time_limit", "global_optimal")


def test_single_block_bnb():
    sp = grid_space([5])
    m = model_on(sp, [[0.0]] * 2, [sp.from_indices((1,)).encoding, sp.from_indices((3,)).encoding],
                 [-1.0, 0.5], 0.7)
    prob = build_problem(m, sp, [0.0])
    sol = solve_bnb(prob)
    assert sol.config.indices == (1,) and sol.status == "global_optimal"
    assert sol.objective == solve_enumerate(prob).objective


def test_local_search(rng, backend):
    for _ in range(10):
        prob = random_problem(rng)
        e = solve_enumerate(prob)
        loc = solve_local(prob, restarts=5, seed=3)
        assert loc.objective >= e.objective - 1e-12
        assert prob.space.is_feasible(loc.config)
        again = solve_local(prob, restarts=5, seed=3)
        assert again.config == loc.config and again.objective == loc.objective
        cert = solve_local(prob, restarts=5, seed=3, certificate=e.objective)
        hit = abs(loc.objective - e.objective) <= 1e-9
        assert (cert.status == "global_optimal") == hit


def test_local_single_parameter_is_exact(rng):
    sp = grid_space([7])
    m = random_model(rng, sp, 2, 30)
    prob = build_problem(m, sp, [0.1, 0.2])
    assert solve_local(prob, restarts=1).objective == solve_enumerate(prob).objective


def test_local_constant_objective_makes_no_moves():
    sp = grid_space([3, 3])
    m = model_on(sp, [[0.0]], [sp.from_indices((0, 0)).encoding], [0.0], 1.0)
    sol = solve_local(build_problem(m, sp, [0.0]), restarts=1)
    assert sol.nodes_or_moves == 0


def test_numba_and_numpy_kernels_agree(rng):
    from svrconf import _accel
    prob = random_problem(rng, min_card=500)
    rows = prob.space.feasible_indices()
    prev = _accel.backend()
    try:
        _accel.set_backend("numpy")
        a = prob.objective_rows(rows)
        _accel.set_backend("numba")
        b = prob.objective_rows(rows)
    finally:
        _accel.set_backend(prev)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-13)


def test_dispatch_and_text(rng):
    prob = random_problem(rng)
    for s in cssp.SOLVERS:
        sol = solve(prob, s, 10.0)
        txt = sol.to_text()
        assert f"# solver={s}" in txt and "# objective=" in txt
    with pytest.raises(SvrConfError):
        solve(prob, "bonmin")
