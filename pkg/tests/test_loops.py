import math

import numpy as np
import pytest

from hubloops import loops as lp
from hubloops import rng
from hubloops import worldline as wl
from hubloops.configgraph import representatives
from hubloops.lattice import chain, square


def accepted_bundles(lat, N, beta, constraint, n, seed=5, limit=None, U=4.0):
    reps = np.array(representatives(lat.size, N, constraint), dtype=np.int64)
    inp = wl.KernelInputs(lat, N, reps, U=U)
    keys = rng.seed_keys(seed)
    b = wl.run_batch(inp, beta, constraint, keys, 0, n)
    idx = np.flatnonzero(b.accepted)[:limit]
    for k in idx:
        yield wl.regenerate_bundle(inp, beta, keys, int(k), int(b.flags[k])), b.wcount[k]


def _bundle(beta, init, jumps):
    jumps = sorted(jumps)
    bd = wl.Bundle(beta, np.array(init), np.array([j[0] for j in jumps], float),
                   np.array([j[1] for j in jumps], dtype=np.int64),
                   np.array([j[2] for j in jumps], dtype=np.int64),
                   np.array([j[3] for j in jumps], dtype=np.int64))
    bd.flags = lp.audit_flags(bd)
    bd.tau = bd.realized_perm()
    return bd


def regular_times(bundle):
    edges = np.concatenate([[0.0], np.unique(bundle.times), [bundle.beta]])
    return 0.5 * (edges[:-1] + edges[1:])


def test_single_electron_loop():
    bd = _bundle(2.0, [3], [(0.5, 0, 1, 0), (1.5, 0, 0, 1)])
    dec = lp.trace_loops(bd, 4)
    assert len(dec.loops) == 1
    assert dec.loops[0].w == 1 and dec.loops[0].eps == -1


def test_meeting_pair_cross_sections():
    # up electron at site 0 visits the down electron at site 1 twice
    bd = _bundle(1.0, [0, 3], [(0.3, 0, 0, 1), (0.5, 1, 1, 2), (0.7, 1, 2, 1), (0.9, 0, 1, 0)])
    assert bd.in_D and bd.periodic
    dec = lp.trace_loops(bd, 4)
    assert lp.spin_sum_identity_holds(bd, dec)
    want = [l.eps * l.w for l in dec.loops]
    for t in regular_times(bd):
        assert dec.cross_section(t) == want
    assert sum(l.eps * l.w for l in dec.loops) == 0


def test_u_infinity_two_cycle_weight():
    lat = square(4)
    a, b_, c, d = (lat.index(v) for v in [(0, 0), (0, 1), (1, 1), (1, 0)])
    far = lat.index((-2, -2))
    init = [2 * a, 2 * c, 2 * far]
    jumps = [(0.1, 0, a, b_), (0.2, 1, c, d), (0.3, 0, b_, c), (0.4, 1, d, a)]
    bd = _bundle(1.0, init, jumps)
    assert bd.in_D_inf
    dec = lp.trace_loops(bd, lat.size)
    assert dec.windings == [2, 1] and dec.cycle_type == (2, 1)
    beta, b = 1.0, 0.37
    assert lp.loop_weight(dec, beta, b) == pytest.approx(math.cosh(2 * beta * b) * math.cosh(beta * b))
    assert lp.loop_weight(dec, beta, 0.0) == 1.0


def test_isolated_flip_negates_own_spin():
    bd = _bundle(1.0, [0, 7], [(0.2, 0, 0, 1), (0.6, 0, 1, 0)])
    dec = lp.trace_loops(bd, 4)
    g = lp.spin_flip(bd, 0, dec)
    assert g.spins.tolist() == [-1, -1]
    assert lp.same_bundle(lp.spin_flip(g, 0), bd)


def test_single_loop_weight_is_flip_average():
    bd = _bundle(2.0, [0], [])
    dec = lp.trace_loops(bd, 2)
    beta, b = 2.0, 0.4
    avg = 0.5 * (lp.field_weight(bd, beta, b) + lp.field_weight(lp.spin_flip(bd, 0, dec), beta, b))
    assert lp.loop_weight(dec, beta, b) == pytest.approx(avg, rel=1e-15)


def test_untraceable_inputs():
    with pytest.raises(lp.UntraceableBundle):
        lp.trace_loops(_bundle(1.0, [0, 2], [(0.5, 1, 1, 0)]), 2)  # equal-spin collision
    with pytest.raises(lp.UntraceableBundle):
        lp.trace_loops(_bundle(1.0, [0], [(0.5, 0, 0, 1)]), 2)  # not periodic


@pytest.mark.parametrize("lat,N,beta,constraint,n", [
    (chain(4), 2, 1.0, "finite-u", 3000),
    (square(2), 3, 2.0, "finite-u", 20000),
    (square(2), 4, 1.0, "finite-u", 60000),
    (chain(4, boundary="periodic"), 3, 0.5, "u-infinity", 30000),
])
def test_identities_on_sampled_bundles(lat, N, beta, constraint, n):
    seen = 0
    for bd, wc in accepted_bundles(lat, N, beta, constraint, n, limit=150):
        dec = lp.trace_loops(bd, lat.size)
        seen += 1
        # coverage: each electron's pieces tile [0, beta] once
        p = dec.pieces
        for e in range(N):
            m = p["e"] == e
            iv = sorted(zip(p["t0"][m], p["t1"][m]))
            assert iv[0][0] == 0.0 and iv[-1][1] == beta
            assert all(a[1] == b[0] for a, b in zip(iv, iv[1:]))
        assert lp.spin_sum_identity_holds(bd, dec)
        want = [l.eps * l.w for l in dec.loops]
        for t in regular_times(bd)[:20]:
            assert dec.cross_section(t) == want
        lw = lp.loop_weight(dec, beta, 0.6)
        assert abs(lp.flip_average(dec, beta, 0.6) - lw) <= 1e-12 * lw
        assert np.bincount(dec.windings, minlength=N + 1).tolist() == wc.tolist()
        if constraint == "u-infinity":
            assert tuple(dec.windings) == dec.cycle_type
        s0 = lp.bundle_sign(bd)
        for j in range(N):
            g = lp.spin_flip(bd, j, dec)
            assert g.in_D and g.periodic
            assert lp.same_bundle(lp.spin_flip(g, j), bd)
            assert lp.bundle_sign(g) == s0
        for mask in range(1 << N):
            xi = [(mask >> i) & 1 for i in range(N)]
            assert int(lp.apply_pattern(bd, dec, xi).spins.sum()) == lp.flipped_field(dec, xi)
    assert seen > 20


def test_open_chain_windings_at_most_one():
    reps = np.array(representatives(4, 3, "finite-u"), dtype=np.int64)
    inp = wl.KernelInputs(chain(4), 3, reps, U=1.0)
    b = wl.run_batch(inp, 1.5, "finite-u", rng.seed_keys(3), 0, 20000)
    acc = b.accepted
    assert acc.sum() > 100
    assert np.all(b.wcount[acc, 2:] == 0)


def test_ring_three_cycle_is_one_loop():
    lat = chain(4, boundary="periodic")
    reps = np.array(representatives(4, 3, "u-infinity"), dtype=np.int64)
    inp = wl.KernelInputs(lat, 3, reps)
    keys = rng.seed_keys(11)
    b = wl.run_batch(inp, 1.0, "u-infinity", keys, 0, 400000)
    hits = np.flatnonzero(b.accepted & (b.wcount[:, 3] > 0))
    assert len(hits) > 0
    for k in hits[:10]:
        bd = wl.regenerate_bundle(inp, 1.0, keys, int(k), int(b.flags[k]))
        assert all(bd.tau[i] != i for i in range(3))
        dec = lp.trace_loops(bd, 4)
        assert [l.w for l in dec.loops] == [3]
        assert lp.bundle_sign(bd) == 1
