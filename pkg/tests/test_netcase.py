import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cliqueopf.netcase import (
    Bus,
    CaseError,
    Line,
    PowerCase,
    build_admittance,
    build_cost_matrix,
    generate_radial,
    injection_matrix,
    load_case,
    parse_case,
    save_case,
    serialize_case,
)
from oracles import RING5_LINES, injections_from_v, ring5_case


def _case(lines, n, c1=None):
    c1 = [1.0] * n if c1 is None else c1
    return PowerCase([Bus(k + 1, 0.9, 1.1, 0.0, c1[k]) for k in range(n)],
                     [Line(a, b, y.real, y.imag) for a, b, y in lines])


# --- admittance ------------------------------------------------------------

def test_admittance_two_bus():
    Y = build_admittance(_case([(1, 2, 1 + 0j)], 2))
    np.testing.assert_array_equal(Y, [[1, -1], [-1, 1]])


def test_admittance_star_three():
    Y = build_admittance(_case([(1, 3, 1j), (2, 3, 1j)], 3))
    assert Y[2, 2] == 2j
    assert Y[0, 2] == Y[2, 0] == -1j
    assert Y[0, 1] == 0


def test_admittance_path():
    n = 6
    Y = build_admittance(_case([(k, k + 1, 2 + 0j) for k in range(1, n)], n))
    assert np.diag(Y).tolist() == [2, 4, 4, 4, 4, 2]
    for k in range(n - 1):
        assert Y[k, k + 1] == Y[k + 1, k] == -2
    assert np.count_nonzero(Y) == n + 2 * (n - 1)


@pytest.mark.parametrize("seed", range(5))
def test_admittance_symmetric_pattern(seed):
    case = generate_radial(8, seed, tree=True)
    Y = build_admittance(case)
    np.testing.assert_array_equal(Y, Y.T)
    adj = case.adjacency()
    for i in range(case.n):
        off = {k for k in np.nonzero(Y[i])[0] if k != i}
        assert off == adj[i]
    np.testing.assert_allclose(Y.sum(axis=1), 0, atol=1e-12)


# --- cost matrix -----------------------------------------------------------

def test_cost_matrix_identity_costs_real_y():
    case = _case([(1, 2, 3 + 0j), (2, 3, 1 + 0j)], 3)
    np.testing.assert_allclose(build_cost_matrix(case, np.ones(3)), build_admittance(case))


def test_cost_matrix_two_bus_hand():
    case = _case([(1, 2, 1 + 0j)], 2)
    np.testing.assert_allclose(build_cost_matrix(case, [1.0, 0.0]), [[1, -0.5], [-0.5, 0]])


def test_cost_matrix_wrong_length():
    with pytest.raises(ValueError):
        build_cost_matrix(_case([(1, 2, 1 + 0j)], 2), [1.0, 2.0, 3.0])


@pytest.mark.parametrize("seed", range(10))
def test_cost_matrix_reproduces_injection_cost(seed):
    case = generate_radial(int(4 + seed % 5), seed, tree=seed % 2 == 0)
    rng = np.random.default_rng(seed)
    M = build_cost_matrix(case)
    Y = build_admittance(case)
    assert np.abs(M - M.conj().T).max() <= 1e-12
    for _ in range(10):
        v = rng.normal(size=case.n) + 1j * rng.normal(size=case.n)
        lhs = np.real(np.trace(M @ np.outer(v, v.conj())))
        rhs = float(case.c1 @ injections_from_v(Y, v))
        scale = np.abs(M).sum() * np.abs(v).max() ** 2
        assert abs(lhs - rhs) <= 1e-9 * scale


def test_cost_sparsity_within_admittance():
    case = generate_radial(7, 3)
    M, Y = build_cost_matrix(case), build_admittance(case)
    assert np.all((np.abs(M) > 0) <= ((np.abs(Y) > 0) | np.eye(7, dtype=bool)))


def test_injection_matrices_sum():
    case = generate_radial(6, 1, tree=True)
    Y = build_admittance(case)
    A = [injection_matrix(case, i) for i in range(case.n)]
    for Ai in A:
        np.testing.assert_array_equal(Ai, Ai.conj().T)
    np.testing.assert_allclose(sum(A), 0.5 * (Y.conj().T + Y), atol=1e-15)


# --- validation --------------------------------------------------------------

MINIMAL = {
    "buses": [{"id": 1, "v_min": 0.95, "v_max": 1.05, "c0": 0, "c1": 1, "c2": 0},
              {"id": 2, "v_min": 0.95, "v_max": 1.05, "c0": 0, "c1": -1, "c2": 0}],
    "lines": [{"from": 1, "to": 2, "g": 1.0, "b": -2.0}],
}


def test_parse_minimal():
    case = parse_case(json.dumps(MINIMAL))
    assert case.n == 2
    assert case.lines[0].y == 1 - 2j


def test_parse_defaults_c0_c2():
    data = json.loads(json.dumps(MINIMAL))
    for b in data["buses"]:
        del b["c0"], b["c2"]
    case = parse_case(json.dumps(data))
    assert case.c2.tolist() == [0.0, 0.0]


@pytest.mark.parametrize("mutate, match", [
    (lambda d: d["buses"][1].update(v_min=1.2), r"buses\[1\].*id 2.*v_min"),
    (lambda d: d["buses"][0].pop("c1"), r"buses\[0\].*'c1'"),
    (lambda d: d["buses"][0].update(v_min=-1.0), r"v_min"),
    (lambda d: d["buses"][0].update(c2=-1.0), r"c2"),
    (lambda d: d["buses"][1].update(id=3), r"id"),
    (lambda d: d["lines"][0].update(to=1), r"lines\[0\]"),
    (lambda d: d["lines"][0].update(to=7), r"lines\[0\]"),
    (lambda d: d["lines"][0].update(g=0.0, b=0.0), r"lines\[0\]"),
    (lambda d: d["lines"].append({"from": 2, "to": 1, "g": 1, "b": 1}), r"duplicate"),
    (lambda d: d["lines"][0].update(g="x"), r"lines\[0\]\.g"),
])
def test_parse_rejects(mutate, match):
    data = json.loads(json.dumps(MINIMAL))
    mutate(data)
    with pytest.raises(CaseError, match=match):
        parse_case(json.dumps(data))


def test_parse_disconnected():
    data = json.loads(json.dumps(MINIMAL))
    data["buses"].append({"id": 3, "v_min": 1, "v_max": 1, "c1": 0})
    with pytest.raises(CaseError, match="connected"):
        parse_case(json.dumps(data))


def test_parse_malformed_json_position():
    with pytest.raises(CaseError, match="line 1 column"):
        parse_case('{"buses": [}')


def test_ring5_file_round_trip(tmp_path):
    case = ring5_case()
    p = tmp_path / "ring.json"
    save_case(case, p)
    back = load_case(p)
    assert back == case
    assert sorted((l.src, l.dst) for l in back.lines) == sorted(RING5_LINES)


finite = st.floats(min_value=-50, max_value=50, allow_nan=False, allow_infinity=False)


@given(n=st.integers(2, 8), seed=st.integers(0, 10_000), tree=st.booleans(),
       c2=st.lists(st.floats(0, 5), min_size=8, max_size=8))
def test_serialize_round_trip_bit_stable(n, seed, tree, c2):
    base = generate_radial(n, seed, tree=tree)
    case = PowerCase([Bus(b.id, b.v_min, b.v_max, 0.0, b.c1, c2[k]) for k, b in enumerate(base.buses)],
                     base.lines)
    text = serialize_case(case)
    again = parse_case(text)
    assert again == case
    assert serialize_case(again) == text


# --- generator ---------------------------------------------------------------

@pytest.mark.parametrize("seed", range(20))
def test_generate_two_bus_protocol(seed):
    case = generate_radial(2, seed)
    c1 = case.c1
    assert sorted(np.sign(c1).tolist()) == [-1.0, 1.0]
    assert np.all(case.v_min >= 0.855) and np.all(case.v_max <= 1.155)
    np.testing.assert_allclose(case.v_max / case.v_min, 1.05 / 0.95)


@pytest.mark.parametrize("tree", [False, True])
def test_generate_ten_bus(tree):
    for seed in range(10):
        case = generate_radial(10, seed, tree=tree)
        assert len(case.lines) == 9
        assert (case.c1 > 0).sum() == 1
        for l in case.lines:
            assert 0 < l.g < 10 and -10 < l.b < 0
        if not tree:
            assert case.c1[9] > 0
            assert all(l.dst == 10 for l in case.lines)


def test_generate_deterministic():
    assert generate_radial(12, 7, tree=True) == generate_radial(12, 7, tree=True)
    assert serialize_case(generate_radial(12, 7)) == serialize_case(generate_radial(12, 7))
    assert generate_radial(12, 7) != generate_radial(12, 8)


def test_generate_rejects_small():
    with pytest.raises(ValueError):
        generate_radial(1, 0)
