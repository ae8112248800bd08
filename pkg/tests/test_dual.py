import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cliqueopf import hsdp
from cliqueopf.dual_decomp import (
    DRIFT_TOL,
    AsyncSchedule,
    ChainScheme,
    aggregate_prices,
    average_feasible,
    build_chains,
    build_dual_subproblem,
    dual_iterate,
    initial_state,
    price_update,
)
from cliqueopf.netcase import generate_radial
from cliqueopf.network import LocalTransport
from cliqueopf.problem import OpfProblem, centralized_sdp
from cliqueopf.runner import RunConfig, run
from oracles import random_connected_edges, ring5_case, star_case

RING_ORDER = (0, 4, 1, 2, 3)


def _ring():
    return OpfProblem.from_case(ring5_case(), order=RING_ORDER)


def _iterate(problem, state, k, schedule=None):
    tr = LocalTransport()
    recs = []
    for _ in range(k):
        state, rec = dual_iterate(problem, state, tr, schedule=schedule)
        recs.append(rec)
    return state, recs


# --- chains and aggregate prices -----------------------------------------------

def test_star_scheme_aggregates():
    n = 6
    p = OpfProblem.from_case(star_case(n))
    key = (n - 1, n - 1)
    chains = build_chains(p.decomp, ChainScheme.STAR)
    assert chains[key] == tuple((0, l) for l in range(1, n - 1))
    u = [0.1, -0.3, 0.7, 0.2]
    agg = aggregate_prices(chains, {key: u})
    assert agg[(0, key)] == pytest.approx(sum(u))
    for l in range(1, n - 1):
        assert agg[(l, key)] == pytest.approx(-u[l - 1])


def test_chain_scheme_links_consecutive():
    p = OpfProblem.from_case(star_case(5))
    assert build_chains(p.decomp)[(4, 4)] == ((0, 1), (1, 2), (2, 3))


def test_two_copies_schemes_agree():
    p = _ring()
    a = build_chains(p.decomp, "chain")
    b = build_chains(p.decomp, "star")
    for key, om in p.decomp.omega.items():
        if len(om) == 2:
            assert a[key] == b[key] == ((om[0], om[1]),)


def test_ring_four_equalities():
    chains = build_chains(_ring().decomp)
    assert sorted(chains) == [(1, 1), (1, 2), (2, 2), (3, 3)]
    assert sum(len(v) for v in chains.values()) == 4


def test_initial_prices_zero():
    p = _ring()
    s = initial_state(p)
    assert s.prices[(1, 1)] == [0.0]
    assert s.prices[(1, 2)] == [0j]


@given(seed=st.integers(0, 2**31 - 1), n=st.integers(3, 10), extra=st.integers(0, 10),
       scheme=st.sampled_from(["chain", "star"]))
def test_telescoping(seed, n, extra, scheme):
    rng = np.random.default_rng(seed)
    edges = random_connected_edges(rng, n, extra)
    M = np.diag(rng.uniform(1, 2, n)).astype(complex)
    for i, k in edges:
        M[i, k] = complex(*rng.normal(size=2))
        M[k, i] = np.conj(M[i, k])
    case = generate_radial(n, seed % 1000)
    p = OpfProblem.from_matrix(case, M)
    chains = build_chains(p.decomp, scheme)
    prices = {}
    for key, pairs in chains.items():
        if key[0] == key[1]:
            prices[key] = list(rng.normal(size=len(pairs)))
        else:
            prices[key] = list(rng.normal(size=len(pairs)) + 1j * rng.normal(size=len(pairs)))
    agg = aggregate_prices(chains, prices)
    for key, pairs in chains.items():
        om = p.decomp.omega[key]
        assert len(pairs) == len(om) - 1
        assert {l for pr in pairs for l in pr} == set(om)
        assert abs(sum(agg[(l, key)] for l in om)) <= 1e-12 * max(1.0, np.abs(prices[key]).sum())


# --- subproblems -------------------------------------------------------------------

def test_star_dual_subproblem():
    n = 5
    p = OpfProblem.from_case(star_case(n))
    key = (n - 1, n - 1)
    agg = {(l, key): 0.1 * (l + 1) for l in range(n - 1)}
    for l in range(n - 1):
        sdp = build_dual_subproblem(p, agg, l)
        assert sdp.equalities == []
        assert sdp.objective[1, 1] == pytest.approx(p.M[key].real / (n - 1) + 0.1 * (l + 1))
        assert sdp.objective[0, 1] == p.M[l, n - 1]
        assert [i for i, _, _ in sdp.diag_boxes] == [0, 1]


def test_single_clique_matches_centralized():
    p = OpfProblem.from_case(star_case(2))
    sdp = build_dual_subproblem(p, {}, 0)
    c = centralized_sdp(p)
    np.testing.assert_array_equal(sdp.objective, c.objective)
    assert sdp.diag_boxes == c.diag_boxes
    assert hsdp.solve(sdp).objective_value == pytest.approx(hsdp.solve(c).objective_value)


def test_ring_c2_block():
    p = _ring()
    assert p.cliques[1] == (1, 2, 3)
    u22, u23, u33, u44 = 0.3, 0.1 - 0.2j, -0.4, 0.25
    chains = build_chains(p.decomp)
    agg = aggregate_prices(chains, {(1, 1): [u22], (1, 2): [u23], (2, 2): [u33], (3, 3): [u44]})
    A = build_dual_subproblem(p, agg, 1).objective
    M = p.M
    # C2 is the right copy of the three entries shared with C1 and the left one of W44
    assert A[0, 0] == pytest.approx(M[1, 1].real / 2 - u22)
    assert A[1, 1] == pytest.approx(M[2, 2].real / 2 - u33)
    assert A[0, 1] == pytest.approx(M[1, 2] / 2 - u23)
    assert A[1, 0] == pytest.approx(np.conj(A[0, 1]))
    assert A[2, 2] == pytest.approx(M[3, 3].real / 2 + u44)
    assert A[0, 2] == M[1, 3] and A[1, 2] == M[2, 3]


# --- price update ------------------------------------------------------------------

def test_price_update_examples():
    assert price_update(0.0, 1.0, 2.0, 1.0) == -1.0
    assert price_update(0.7, 1.3, 1.3, 5.0) == 0.7
    assert price_update(1j, 1 + 1j, 2 + 3j, 0.5) == pytest.approx(-0.5)


def test_star_price_update_matches_formula():
    p = OpfProblem.from_case(star_case(3))
    state = initial_state(p)
    new, rec = dual_iterate(p, state, LocalTransport())
    key = (2, 2)
    x = [new.slack[(l, key)] for l in (0, 1)]
    assert new.prices[key] == [pytest.approx(-1.0 * (x[1] - x[0]))]
    assert len(rec.solve_times) == 2 and all(t >= 0 for t in rec.solve_times)
    assert new.step == pytest.approx(1.0)


def test_single_clique_no_prices():
    case = star_case(2)
    p = OpfProblem.from_case(case)
    s = initial_state(p)
    assert s.chains == {} and s.prices == {}
    report = run(case, RunConfig(mode="cumulative-dual"))
    assert report.converged and report.n_iterations == 1


@pytest.mark.parametrize("seed", range(8))
def test_price_monotonicity_frozen_pair(seed):
    n = 4
    case = generate_radial(n, seed)
    p = OpfProblem.from_case(case)
    rng = np.random.default_rng(seed)
    key = (n - 1, n - 1)
    chains = build_chains(p.decomp)
    prices = {key: list(rng.normal(scale=0.5, size=n - 2))}
    r = int(rng.integers(0, n - 2))
    left, right = chains[key][r]

    def copies(pr):
        agg = aggregate_prices(chains, pr)
        out = []
        for l in (left, right):
            X = hsdp.solve(build_dual_subproblem(p, agg, l)).X
            out.append(X[1, 1].real)
        return out

    xl, xr = copies(prices)
    before = abs(xr - xl)
    moved = {key: list(prices[key])}
    moved[key][r] = price_update(prices[key][r], xl, xr, 1e-3)
    xl2, xr2 = copies(moved)
    assert abs(xr2 - xl2) <= before + 1e-7


# --- feasible averaging ------------------------------------------------------------

def _star3_blocks(hub0, hub1):
    a = np.array([[1.0, 0.5 + 0.2j], [0.5 - 0.2j, hub0]])
    b = np.array([[0.98, -0.3j], [0.3j, hub1]])
    return {0: a, 1: b}


def test_average_two_copies():
    p = OpfProblem.from_case(star_case(3))
    fp = average_feasible(p, _star3_blocks(1.0, 1.04))
    assert fp.shared[(2, 2)] == pytest.approx(1.02)
    for X in fp.blocks.values():
        assert X[1, 1].real == pytest.approx(1.02)
        assert np.linalg.eigvalsh(X)[0] >= -1e-12
    assert fp.flags == []


def test_average_consensus_is_identity():
    p = OpfProblem.from_case(star_case(3))
    blocks = _star3_blocks(1.02, 1.02)
    fp = average_feasible(p, blocks)
    for l in (0, 1):
        np.testing.assert_allclose(fp.blocks[l], blocks[l], atol=1e-15)


def test_average_objective_matches_trace():
    p = _ring()
    state, recs = _iterate(p, initial_state(p), 3)
    fp = average_feasible(p, state.blocks)
    W = np.zeros((5, 5), dtype=complex)
    for l, (q, pos, unique, shared) in enumerate(p.decomp.layouts):
        for i, k in list(unique) + list(shared):
            W[i, k] = fp.blocks[l][pos[i], pos[k]]
            W[k, i] = fp.blocks[l][pos[k], pos[i]]
    assert p.objective(W) == pytest.approx(fp.objective, abs=1e-10)
    assert recs[-1].objective == pytest.approx(fp.objective)


@pytest.mark.parametrize("seed", range(6))
def test_average_random_star4_psd(seed):
    p = OpfProblem.from_case(generate_radial(4, seed))
    state, _ = _iterate(p, initial_state(p), int(1 + seed % 3))
    fp = average_feasible(p, state.blocks)
    eig = min(np.linalg.eigvalsh(X)[0] for X in fp.blocks.values())
    assert fp.min_block_eig == pytest.approx(eig, abs=1e-14)
    assert eig >= -1e-8
    for l, (q, pos, _, _) in enumerate(p.decomp.layouts):
        for i in q:
            x = fp.blocks[l][pos[i], pos[i]].real
            assert p.lo[i] - 1e-12 <= x <= p.hi[i] + 1e-12


def test_average_drift_error():
    p = OpfProblem.from_case(star_case(3))
    hi = p.hi[2]
    with pytest.raises(ValueError, match="leaves"):
        average_feasible(p, _star3_blocks(hi + 1.0, hi + 1.0))
    fp = average_feasible(p, _star3_blocks(hi + 0.1 * DRIFT_TOL, hi))
    assert fp.shared[(2, 2)] <= hi


def test_average_missing_block():
    p = OpfProblem.from_case(star_case(3))
    with pytest.raises(KeyError):
        average_feasible(p, {0: np.eye(2)})


# --- asynchrony ------------------------------------------------------------------

def test_async_delayed_clique_freezes_its_equalities():
    n = 5
    p = OpfProblem.from_case(generate_radial(n, 3))
    key = (n - 1, n - 1)
    sched = AsyncSchedule(fraction=0.5, delays={0: 3})
    state = initial_state(p)
    tr = LocalTransport()
    for t in range(3):
        state, rec = dual_iterate(p, state, tr, schedule=sched)
        # clique 0 has not reported yet: the equality it belongs to never moved
        assert state.prices[key][0] == 0.0
        assert (key, 0) not in state.used
    assert (key, 1) in state.used and (key, 2) in state.used
    for _ in range(2):
        state, _ = dual_iterate(p, state, tr, schedule=sched)
    assert (key, 0) in state.used


def test_async_active_round_robin():
    s = AsyncSchedule(0.5)
    assert s.active(0, 4) == [0, 1]
    assert s.active(1, 4) == [2, 3]
    assert s.active(0, 3) == [0, 1]
    assert s.active(1, 3) == [0, 2]


# --- duality consistency -------------------------------------------------------

def _gap(report):
    last = report.iterations[-1]
    return abs(last["dual_value"] - last["objective"]) / abs(last["objective"])


def test_duality_consistency_residual_stop():
    checked = 0
    for seed in range(10):
        r = run(generate_radial(5, seed), RunConfig(mode="cumulative-dual", stop="residual", max_iters=300))
        if r.converged:
            checked += 1
            assert _gap(r) <= 1e-2, seed
    assert checked >= 1


@pytest.mark.xfail(strict=True, reason="the reference rule can fire at the first round, "
                   "where the sum of subproblem optima is a loose lower bound")
def test_duality_consistency_reference_stop():
    for seed in range(10):
        r = run(generate_radial(10, seed), RunConfig(mode="cumulative-dual"))
        if r.converged:
            assert _gap(r) <= 1e-2, seed
