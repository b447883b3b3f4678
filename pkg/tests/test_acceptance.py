"""Acceptance criteria 1-10, run at their stated tolerances.

Each test prints one PASS/FAIL line, then asserts.
"""
import json
import math

import numpy as np
import pytest
from scipy import stats

from hubloops import cli
from hubloops import estimators as est
from hubloops import influence as inf
from hubloops import loops as lp
from hubloops import rng
from hubloops import worldline as wl
from hubloops.configgraph import ConfigGraph, allowed_permutations, one_hole_parity_check, representatives
from hubloops.ed import ModelParams, PhononParams, PhotonParams, resolvent_gap
from hubloops.lattice import chain, square
from hubloops.model import Model

INF = math.inf


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'} {detail}")
    return emit


def ring4():
    return chain(4, boundary="periodic")


def accepted_at_least(model, beta, n_acc, seed, chunk=400_000):
    """Collect until at least n_acc samples are accepted; returns AcceptedSamples."""
    n = chunk
    while True:
        s = est.collect(model, beta, n, seed)
        if s.n_accepted >= n_acc:
            return s
        n = int(n * 1.3 * n_acc / max(s.n_accepted, 1)) + chunk


# 1 -------------------------------------------------------------------------

def test_criterion_1_aizenman_lieb(report):
    inst = []
    for name, lat in (("ring4", ring4()), ("square2", square(2))):
        inst.append((f"{name}/hubbard", Model(lat, 3, INF)))
        inst.append((f"{name}/holstein", Model(lat, 3, INF, phonon=PhononParams(1.0, 0.5 * np.eye(4), 6, "total"))))
        inst.append((f"{name}/rad", Model(lat, 3, INF, photon=PhotonParams(4.0, 1.0, 1.0, 6, 1.0))))
    rep = est.aizenman_lieb_report(inst, [0.5, 1.0, 2.0], [0.1, 0.5, 1.0])
    ok = len(rep.rows) == 54 and rep.all_positive
    report(1, ok, f"{len(rep.rows)} points, min margin {rep.min_margin:.3e}")
    assert ok


# 2 -------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_2_loop_representation(report):
    cases = [("chain4 N=2 U=4", Model(chain(4), 2, 4.0), 1.0, 0.3),
             ("ring4 N=3 U=inf", Model(ring4(), 3, INF), 1.0, 0.5)]
    oks, lines = [], []
    for name, m, beta, b in cases:
        s = accepted_at_least(m, beta, 100_000, seed=21)
        r = est.mc_partition(m, beta, b, 0, samples=s)
        z = m.spectra().partition(beta, b)
        ok = s.n_accepted >= 100_000 and r.agrees_with(z, 3.0) and r.form_gap_sigma <= 3.0
        oks.append(ok)
        lines.append(f"[{name}: ED {z:.4f} field {r.field.value:.4f}+-{r.field.std_error:.4f} "
                     f"loop {r.loop.value:.4f}+-{r.loop.std_error:.4f} gap {r.form_gap_sigma:.2f}s "
                     f"acc {s.n_accepted}]")
    report(2, all(oks), " ".join(lines))
    assert all(oks)


# 3 -------------------------------------------------------------------------

def _regular_times(bd):
    edges = np.concatenate([[0.0], np.unique(bd.times), [bd.beta]])
    return 0.5 * (edges[:-1] + edges[1:])


@pytest.mark.slow
def test_criterion_3_loop_identities(report):
    cases = [("chain4 N=2 U=4", chain(4), 2, 1.0, "finite-u"),
             ("square2 N=3 U=4", square(2), 3, 1.0, "finite-u"),
             ("ring4 N=3 U=inf", ring4(), 3, 0.5, "u-infinity")]
    oks, lines = [], []
    for name, lat, N, beta, constraint in cases:
        reps = np.array(representatives(lat.size, N, constraint), dtype=np.int64)
        inp = wl.KernelInputs(lat, N, reps, U=4.0)
        keys = rng.seed_keys(31)
        traced = bad_spin_sum = bad_cross = bad_flip = bad_wind = 0
        start = 0
        while traced < 10_000:
            bt = wl.run_batch(inp, beta, constraint, keys, start, 50_000)
            for k in np.flatnonzero(bt.accepted):
                bd = wl.regenerate_bundle(inp, beta, keys, start + int(k), int(bt.flags[k]))
                dec = lp.trace_loops(bd, lat.size)
                traced += 1
                bad_spin_sum += not lp.spin_sum_identity_holds(bd, dec)
                want = [l.eps * l.w for l in dec.loops]
                bad_cross += any(dec.cross_section(t) != want for t in _regular_times(bd))
                for b in (0.3, 1.0):
                    lw = lp.loop_weight(dec, beta, b)
                    bad_flip += abs(lp.flip_average(dec, beta, b) - lw) > 1e-13 * lw
                if constraint == "u-infinity":
                    bad_wind += tuple(dec.windings) != dec.cycle_type
            start += 50_000
        ok = traced >= 10_000 and bad_spin_sum == bad_cross == bad_flip == bad_wind == 0
        oks.append(ok)
        lines.append(f"[{name}: {traced} bundles, failures spin-sum {bad_spin_sum} cross {bad_cross} "
                     f"flip {bad_flip} winding {bad_wind}]")
    report(3, all(oks), " ".join(lines))
    assert all(oks)


# 4 -------------------------------------------------------------------------

def test_criterion_4_permutations(report):
    ident_only = True
    for l in (2, 4, 6):
        for N in range(1, l):
            g = ConfigGraph(chain(l), N, "u-infinity")
            for X in representatives(l, N, "u-infinity"):
                ident_only &= allowed_permutations(g, X) == {tuple(range(N))}
    parity = (one_hole_parity_check(ConfigGraph(square(2), 3, "u-infinity"))
              and one_hole_parity_check(ConfigGraph(ring4(), 3, "u-infinity")))
    support = {}
    for name, lat, beta, n in (("chain4", chain(4), 1.0, 50_000), ("ring4", ring4(), 1.0, 600_000),
                               ("square2", square(2), 1.0, 400_000)):
        pw = est.partition_weights(Model(lat, 3, INF), beta, n, seed=41)
        support[name] = pw.support_matches and pw.mismatched_windings == 0
    ok = ident_only and parity and all(support.values())
    report(4, ok, f"1D identity only {ident_only}, one-hole parity {parity}, D_n support {support}")
    assert ok


# 5 -------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_influence_functional(report):
    lines, oks = [], []
    beta, b = 1.0, 0.3
    cases = [("phonon 2-site N=1", Model(chain(2), 1, 0.0, phonon=PhononParams(1.0, 0.7 * np.eye(2), 12)),
              "phonon_nmax"),
             ("photon 2x2 N=1", Model(square(2), 1, 0.0, photon=PhotonParams(4.0, 1.0, 1.0, 12, 1.0)),
              "photon_nmax")]
    for name, m, key in cases:
        s = est.collect(m, beta, 100_000, seed=51)
        r = est.mc_partition(m, beta, b, 0, samples=s)
        z12 = m.spectra(**{key: 12}).partition(beta, b)
        z8 = m.spectra(**{key: 8}).partition(beta, b)
        agree = r.agrees_with(z12, 3.0)
        trunc = abs(z8 - z12) / z12
        tol = 3 * max(r.field.std_error, r.loop.std_error) / z12
        guard = trunc < tol / 10
        oks.append(agree and guard)
        lines.append(f"[{name}: ED12 {z12:.4f} field {r.field.value:.4f}+-{r.field.std_error:.4f} "
                     f"loop {r.loop.value:.4f}+-{r.loop.std_error:.4f} agree {agree}; "
                     f"|Z8-Z12|/Z {trunc:.2e} vs tol/10 {tol / 10:.2e} guard {guard}]")
    report(5, all(oks), " ".join(lines))
    assert all(oks)


# 6 -------------------------------------------------------------------------

def test_criterion_6_kernel_and_discretization(report):
    g = np.random.default_rng(61)
    diag_err = 0.0
    for _ in range(200):
        beta, w = g.uniform(0.1, 10), g.uniform(0.05, 5)
        s = g.uniform(0, beta)
        diag_err = max(diag_err, abs(inf.kernel(beta, w, s, s) - 0.5 / math.tanh(beta * w / 2)))
    min_eig = math.inf
    for _ in range(500):
        beta, w = g.uniform(0.1, 10), g.uniform(0.05, 5)
        K = inf.kernel_matrix(beta, w, g.uniform(0, beta, 20))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(K).min()))
    m = Model(square(2), 2, 2.0, phonon=PhononParams(1.0, 0.6 * np.eye(4), 4))
    inp = m.kernel_inputs()
    modes = m.modes()
    beta = 1.5
    keys = rng.seed_keys(62)
    bt = wl.run_batch(inp, beta, m.constraint, keys, 0, 5000)
    picked = [k for k in range(len(bt)) if bt.njumps[k] >= 2][:100]
    slopes, shrink = [], 0
    for k in picked:
        bd = wl.regenerate_bundle(inp, beta, keys, k, int(bt.flags[k]))
        q = inf.influence_q_bundle(bd, modes, beta)
        gaps = np.abs(np.array(inf.discretization_convergence(bd, modes, beta, 16)) - q)
        n = np.arange(1, 17)
        keep = gaps > 1e-15 * max(abs(q), 1e-300)
        if keep.sum() >= 4:
            slopes.append(np.polyfit(n[keep], np.log2(gaps[keep]), 1)[0])
        shrink += gaps[-1] <= gaps[0]
    med = float(np.median(slopes))
    ok = (diag_err < 1e-12 and min_eig >= -1e-10 and len(picked) == 100 and shrink == 100
          and max(slopes) < 0 and med < -0.5)
    report(6, ok, f"diag err {diag_err:.1e}, min Gram eig {min_eig:.2e}, {len(picked)} bundles, "
                  f"log2 gap slope median {med:.2f} max {max(slopes):.2f}")
    assert ok


# 7 -------------------------------------------------------------------------

def test_criterion_7_jump_law(report):
    lat = ring4()
    d0 = float(lat.degrees[0])
    t = 1.0
    counts = wl.jump_counts(lat, 0, t, 100_000, seed=71)
    lam = d0 * t
    kmax = 7
    obs = np.array([np.sum(counts == k) for k in range(kmax)] + [np.sum(counts >= kmax)], float)
    p = np.array([stats.poisson.pmf(k, lam) for k in range(kmax)] + [stats.poisson.sf(kmax - 1, lam)])
    chi2, pval = stats.chisquare(obs, p * len(counts))
    small = wl.jump_counts(lat, 0, 0.01, 10_000_000, seed=72)
    rate = small.mean() / 0.01
    ok = pval > 0.01 and abs(rate - d0) < 0.01 * d0
    report(7, ok, f"chi2 {chi2:.2f} p {pval:.3f}; E[N(t)]/t {rate:.4f} vs d0 {d0}")
    assert ok


# 8 -------------------------------------------------------------------------

def test_criterion_8_resolvent(report):
    Us = [1e2, 1e3, 1e4, 1e6]
    gaps = resolvent_gap(chain(4), ModelParams(), 3, Us, z=1j)
    ok = gaps[-1] < 1e-3 and all(a > b for a, b in zip(gaps, gaps[1:]))
    report(8, ok, "gaps " + ", ".join(f"{g:.2e}" for g in gaps))
    assert ok


# 9 -------------------------------------------------------------------------

def test_criterion_9_one_d_structure(report):
    cases = [("chain4 N=2 U=4", Model(chain(4), 2, 4.0), 1.0),
             ("chain4 N=3 U=2", Model(chain(4), 3, 2.0), 0.7),
             ("ring4 N=3 U=inf", Model(ring4(), 3, INF), 1.0),
             ("chain4 N=4 U=1", Model(chain(4), 4, 1.0), 1.0)]
    oks, lines = [], []
    for name, m, beta in cases:
        f = est.one_d_coefficients(m, beta)
        ok = f.residual < 1e-8 and f.parity_violation < 1e-8 and f.holdout_error < 1e-8
        oks.append(ok)
        lines.append(f"[{name}: residual {f.residual:.1e} parity {f.parity_violation:.1e} "
                     f"holdout {f.holdout_error:.1e}]")
    report(9, all(oks), " ".join(lines))
    assert all(oks)


# 10 ------------------------------------------------------------------------

def test_criterion_10_reproducibility(report, tmp_path):
    cfgs = {
        "mc": {"task": "mc", "lattice": {"d": 1, "l": 4}, "model": {"N": 2, "U": 4.0},
               "grids": {"beta": [1.0], "b": [0.0, 0.3]},
               "sampling": {"samples": 100_000, "seed": 101, "batches": 32}},
        "loops": {"task": "loops", "lattice": {"d": 1, "l": 4, "boundary": "periodic"},
                  "model": {"N": 3, "U": "inf"}, "grids": {"beta": [0.5], "b": [0.5]},
                  "sampling": {"samples": 20_000, "seed": 102, "batches": 32}},
    }
    same = {}
    for name, cfg in cfgs.items():
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(cfg))
        codes = [cli.main(["--config", str(p), "--out", str(tmp_path / f"{name}{t}"), "--threads", str(t)])
                 for t in (1, 3)]
        csvs = sorted(x.name for x in (tmp_path / f"{name}1").glob("*.csv"))
        same[name] = codes == [0, 0] and bool(csvs) and all(
            (tmp_path / f"{name}1" / c).read_bytes() == (tmp_path / f"{name}3" / c).read_bytes() for c in csvs)
    ok = all(same.values())
    report(10, ok, f"byte-identical CSVs across thread counts: {same}")
    assert ok
