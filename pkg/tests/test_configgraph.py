import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hubloops.configgraph import (ConfigGraph, ConstraintError, admissible, allowed_cycle_types,
                                  allowed_permutations, apply_perm, cycle_type, in_omega_neq,
                                  in_omega_neq_inf, one_hole_parity_check, perm_sign, permutation_table,
                                  point, representatives)
from hubloops.lattice import chain, square


def test_membership():
    X = (point(0, 1), point(0, -1), point(1, 1))
    assert in_omega_neq(X)
    assert not in_omega_neq_inf(X)
    assert not in_omega_neq((0, 0))


def test_open_chain_identity_only():
    for N in (2, 3):
        g = ConfigGraph(chain(4), N, "u-infinity")
        for X in representatives(4, N, "u-infinity"):
            assert allowed_permutations(g, X) == {tuple(range(N))}


def test_single_electron():
    g = ConfigGraph(square(2), 1, "finite-u")
    assert allowed_permutations(g, (0,)) == {(0,)}


def test_square_one_hole_rotations():
    g = ConfigGraph(square(2), 3, "u-infinity")
    X = (point(0, 1), point(1, 1), point(3, 1))
    perms = allowed_permutations(g, X)
    assert perms == {(0, 1, 2), (1, 2, 0), (2, 0, 1)}
    assert all(perm_sign(p) == 1 for p in perms)


@pytest.mark.parametrize("lat", [square(2), chain(4), chain(4, boundary="periodic")])
def test_one_hole_parity(lat):
    assert one_hole_parity_check(ConfigGraph(lat, 3, "u-infinity"))


def test_parity_check_needs_one_hole():
    with pytest.raises(ConstraintError):
        one_hole_parity_check(ConfigGraph(chain(4), 2, "u-infinity"))


def test_cycle_types():
    assert allowed_cycle_types(ConfigGraph(chain(4, boundary="periodic"), 3, "u-infinity")) == {(3,), (1, 1, 1)}
    assert allowed_cycle_types(ConfigGraph(chain(4), 3, "u-infinity")) == {(1, 1, 1)}


def test_violating_config_rejected():
    g = ConfigGraph(chain(4), 2, "u-infinity")
    with pytest.raises(ConstraintError):
        allowed_permutations(g, (0, 1))


def test_capacity_guard():
    with pytest.raises(ConstraintError):
        ConfigGraph(chain(2), 3, "u-infinity")


def test_adjacency_symmetric_and_spin_preserving():
    g = ConfigGraph(square(2), 3, "finite-u")
    for X in itertools.islice(g.component((0, 1, 2)), 200):
        for Y in g.neighbors(X):
            assert X in set(g.neighbors(Y))
            assert [p % 2 for p in X] == [p % 2 for p in Y]


def test_composition_closure():
    # tau allowed at X and tau' allowed at tau X compose to an allowed permutation at X
    g = ConfigGraph(chain(4, boundary="periodic"), 3, "u-infinity")
    X = (point(0, 1), point(1, -1), point(2, 1))
    allowed = allowed_permutations(g, X)
    for t1 in allowed:
        Y = apply_perm(t1, X)
        for t2 in allowed_permutations(g, Y):
            comp = tuple(t1[t2[i]] for i in range(3))
            assert comp in allowed


def test_translation_covariance():
    lat = chain(4, boundary="periodic")
    g = ConfigGraph(lat, 3, "u-infinity")
    X = (point(0, 1), point(1, -1), point(2, 1))
    shifted = tuple(2 * ((p // 2 + 1) % 4) + p % 2 for p in X)
    assert allowed_permutations(g, X) == allowed_permutations(g, shifted)


def test_witness_path_certifies_rotation():
    g = ConfigGraph(square(2), 3, "u-infinity")
    X = (point(0, 1), point(1, 1), point(3, 1))
    for tau in allowed_permutations(g, X):
        path = g.witness_path(X, apply_perm(tau, X))
        assert path is not None and path[0] == X
        for a, b in zip(path, path[1:]):
            assert b in set(g.neighbors(a))


def test_permutation_table_rows():
    rows = permutation_table(ConfigGraph(square(2), 3, "u-infinity"))
    assert {r["cycle_type"] for r in rows} == {(3,), (1, 1, 1)}
    assert all(r["sign"] == 1 for r in rows)


@settings(max_examples=60, deadline=None)
@given(st.permutations(range(6)))
def test_sign_and_cycle_type_consistent(p):
    ct = cycle_type(p)
    assert sum(ct) == 6
    assert perm_sign(p) == (-1) ** sum(c - 1 for c in ct)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 7), min_size=1, max_size=4))
def test_admissible_classes_nested(X):
    if admissible(X, "u-infinity"):
        assert admissible(X, "finite-u")
