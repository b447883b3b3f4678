"""Batch front end: ``hubloops --config run.json [--out DIR] [--threads K] [--seed-override S]``.

Exit status: 0 all checks passed, 1 a check failed, 2 invalid config,
3 exact oracle too large, 4 no accepted Monte Carlo samples.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, ed
from . import estimators as est
from ._accel import backend
from .configgraph import ConfigGraph, one_hole_parity_check, perm_sign
from .lattice import LatticeError, LatticeSpec, build_lattice
from .loops import UntraceableBundle, flip_average, spin_sum_identity_holds, loop_weight, trace_loops
from .model import Model
from .rng import seed_keys
from .worldline import iter_batches, regenerate_bundle

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_ZERO_ACCEPT = 0, 1, 2, 3, 4
MANIFEST_VERSION = 1
log = logging.getLogger("hubloops")


class ConfigError(ValueError):
    pass


def load_schema() -> dict:
    return json.loads(resources.files("hubloops").joinpath("schema.json").read_text())


def _path_of(err) -> str:
    parts = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
    return "$" + parts


def validate(cfg: dict) -> None:
    import jsonschema
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError("; ".join(f"{_path_of(e)}: {e.message}" for e in errors))


def read_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"$: cannot read config: {exc}") from None
    if isinstance(data, dict) and "manifest_version" in data:
        data = data["config"]
    return data


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def build_model(cfg: dict) -> Model:
    lc = cfg["lattice"]
    try:
        spec = LatticeSpec(lc["d"], lc["l"], lc.get("t", 1.0), lc.get("neighbor_norm", "l1"),
                           lc.get("boundary", "open"))
        lat = build_lattice(spec)
    except LatticeError as exc:
        raise ConfigError(f"$.lattice: {exc}") from None
    mc = cfg["model"]
    n = lat.size

    def matrix(key):
        if key not in mc:
            return None
        m = np.asarray(mc[key], dtype=float)
        if m.shape != (n, n):
            raise ConfigError(f"$.model.{key}: expected a {n}x{n} matrix")
        return m

    phonon = photon = None
    try:
        if "phonon" in mc:
            p = mc["phonon"]
            g = p["g"]
            g = g * np.eye(n) if isinstance(g, (int, float)) else np.asarray(g, dtype=float)
            if g.shape != (n, n):
                raise ConfigError(f"$.model.phonon.g: expected a {n}x{n} matrix")
            phonon = ed.PhononParams(p["omega"], g, p["n_max"], p.get("truncation", "site"))
        if "photon" in mc:
            p = mc["photon"]
            photon = ed.PhotonParams(p["L"], p["kappa"], p["m0"], p["n_max"], p.get("charge", 1.0))
        U = math.inf if mc["U"] == "inf" else float(mc["U"])
        return Model(lat, mc["N"], U, matrix("U_offsite"), matrix("phases"), phonon, photon)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"$.model: {exc}") from None


# ---------------------------------------------------------------- run bookkeeping

@dataclass
class Run:
    cfg: dict
    out: Path
    threads: int
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def check(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append({"name": name, "passed": bool(passed), "detail": detail})
        (log.info if passed else log.error)("check %s: %s %s", name, "pass" if passed else "FAIL", detail)

    def table(self, name: str, header, rows) -> None:
        self.tables[name] = (list(header), [list(r) for r in rows])

    @property
    def ok(self) -> bool:
        return all(c["passed"] for c in self.checks)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, tuple):
        return " ".join(str(int(x)) for x in v)
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([_cell(v) for v in r])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def versions() -> dict:
    import numba
    import scipy
    return {"hubloops": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _sampling(cfg):
    s = cfg["sampling"]
    return int(s["samples"]), int(s["seed"]), int(s.get("batches", est.MIN_BATCHES))


# ---------------------------------------------------------------- tasks

def task_ed(run: Run, model: Model) -> None:
    spec = model.spectra()
    rows = []
    one_hole = model.hard_core and model.N == model.lattice.size - 1
    for beta in run.cfg["grids"]["beta"]:
        for b in run.cfg["grids"]["b"]:
            z = spec.partition(beta, b)
            s3 = spec.magnetization(beta, b)
            bound = 0.5 * model.N * math.tanh(beta * b)
            rows.append((beta, b, z, s3, bound, s3 - bound))
            run.check(f"Z>0 beta={beta} b={b}", z > 0, repr(z))
            if one_hole and b > 0:
                run.check(f"margin beta={beta} b={b}", s3 - bound > 0, repr(s3 - bound))
    run.table("ed", ("beta", "b", "Z", "S3", "tanh_bound", "margin"), rows)


def task_mc(run: Run, model: Model) -> None:
    n, seed, batches = _sampling(run.cfg)
    spec = model.spectra()
    rows = []
    for beta in run.cfg["grids"]["beta"]:
        s = est.collect(model, beta, n, seed, batches, run.threads)
        run.info.setdefault("acceptance", {})[repr(float(beta))] = {
            "samples": s.n_total, "accepted": s.n_accepted, "rate": s.acceptance_rate}
        for b in run.cfg["grids"]["b"]:
            pe = est.mc_partition(model, beta, b, n, samples=s)
            z = spec.partition(beta, b)
            rows.append((beta, b, pe.field.value, pe.field.std_error, pe.loop.value,
                         pe.loop.std_error, z, s.n_accepted, s.n_total))
            run.check(f"forms agree beta={beta} b={b}", pe.form_gap_sigma <= 3.0,
                      f"{pe.form_gap_sigma:.3g} sigma")
            run.check(f"ED within 3 sigma beta={beta} b={b}", pe.agrees_with(z), f"Z_ed={z!r}")
    run.table("mc", ("beta", "b", "Z_field", "se_field", "Z_loop", "se_loop", "Z_ed", "accepted",
                     "samples"), rows)


def task_loops(run: Run, model: Model) -> None:
    n, seed, batches = _sampling(run.cfg)
    inp = model.kernel_inputs()
    keys = seed_keys(seed)
    b_probe = max(run.cfg["grids"]["b"])
    rows = []
    for beta in run.cfg["grids"]["beta"]:
        accepted = []
        size = -(-n // batches)
        for bt in iter_batches(inp, beta, model.constraint, seed, n, size, run.threads,
                               do_loops=False):
            idx = np.flatnonzero(bt.accepted)
            accepted.extend((bt.sample0 + int(i), int(bt.flags[i])) for i in idx)
        if not accepted:
            raise est.ZeroAcceptance(f"zero accepted samples out of {n} at beta={beta}")
        bad = {"spin_sum": 0, "cross": 0, "flip": 0, "winding": 0}
        for smp, fl in accepted:
            bundle = regenerate_bundle(inp, beta, keys, smp, fl)
            try:
                dec = trace_loops(bundle, model.lattice.size)
            except UntraceableBundle:
                bad["spin_sum"] += 1
                continue
            spin_sum = spin_sum_identity_holds(bundle, dec)
            cross = _cross_sections_ok(bundle, dec)
            fa = flip_average(dec, beta, b_probe)
            lw = loop_weight(dec, beta, b_probe)
            flip = abs(fa - lw) <= 1e-12 * lw
            wind = (not model.hard_core) or dec.windings == list(dec.cycle_type)
            bad["spin_sum"] += not spin_sum
            bad["cross"] += not cross
            bad["flip"] += not flip
            bad["winding"] += not wind
            rows.append((beta, smp, dec.cycle_type, tuple(dec.windings), perm_sign(dec.tau),
                         spin_sum, cross, flip, wind))
        run.info.setdefault("acceptance", {})[repr(float(beta))] = {
            "samples": n, "accepted": len(accepted), "rate": len(accepted) / n}
        for k, v in bad.items():
            run.check(f"{k} identity beta={beta}", v == 0, f"{v} failures in {len(accepted)} bundles")
    run.table("loops", ("beta", "sample", "cycle_type", "windings", "sign", "spin_sum", "cross_section",
                        "flip_average", "winding_equals_cycle_type"), rows)


def _cross_sections_ok(bundle, dec) -> bool:
    """Per-loop spin sum at regular times equals eps(gamma) w(gamma)."""
    edges = np.concatenate([[0.0], np.unique(bundle.times), [bundle.beta]])
    mids = 0.5 * (edges[:-1] + edges[1:])
    want = [lp.eps * lp.w for lp in dec.loops]
    return all(dec.cross_section(float(t)) == want for t in mids if 0 < t < bundle.beta)


def task_verify(run: Run, model: Model) -> None:
    grids = run.cfg["grids"]
    b_pos = [b for b in grids["b"] if b > 0]
    if model.hard_core and model.N == model.lattice.size - 1:
        rep = est.aizenman_lieb_report([(model.kind, model)], grids["beta"], b_pos)
        run.table("margins", ("instance", "beta", "b", "S3", "tanh_bound", "margin", "truncation"),
                  [(r.instance, r.beta, r.b, r.s3, r.bound, r.margin, r.truncation) for r in rep.rows])
        run.check("aizenman-lieb margins > 0", rep.all_positive, f"min margin {rep.min_margin!r}")
        g = ConfigGraph(model.lattice, model.N, model.constraint)
        run.check("allowed permutations even", one_hole_parity_check(g))
    if model.lattice.spec.d == 1:
        rows, srows = [], []
        for beta in grids["beta"]:
            fit = est.one_d_coefficients(model, beta)
            scale = float(np.abs(fit.coefficients).max())
            for k, c in enumerate(fit.coefficients):
                rows.append((beta, k, c, (model.N - k) % 2 == 0))
            run.check(f"cosh fit residual beta={beta}", fit.residual < 1e-8, repr(fit.residual))
            run.check(f"parity clause beta={beta}", fit.parity_violation < 1e-8,
                      f"{fit.parity_violation!r} of max|C|={scale!r}")
            run.check(f"held-out b beta={beta}", fit.holdout_error < 1e-8, repr(fit.holdout_error))
            sr = est.sector_identity_check(model, beta, fit.coefficients)
            for r in sr.sectors:
                srows.append((beta,) + tuple(r))
            run.info.setdefault("sector_readings", {})[repr(float(beta))] = {
                "matching": list(sr.matching), "max_rel_coefficient": sr.max_rel_coefficient,
                "max_rel_dimension": sr.max_rel_dimension}
            run.check(f"sector identity (coefficient reading) beta={beta}",
                      "coefficient" in sr.matching, repr(sr.max_rel_coefficient))
        run.table("coefficients", ("beta", "k", "C_k", "parity_allowed"), rows)
        run.table("sectors", ("beta", "two_m", "Z_sector", "coefficient_reading", "dimension_reading"),
                  srows)
    if not run.checks:
        run.check("applicable verifications", False,
                  "needs U=inf with N=|L|-1, or d=1")


def task_report(run: Run, model: Model) -> None:
    if not model.hard_core:
        raise ConfigError("$.model.U: the report task needs U = \"inf\"")
    n, seed, batches = _sampling(run.cfg)
    spec = model.spectra()
    wrows, mrows = [], []
    one_hole = model.N == model.lattice.size - 1
    for beta in run.cfg["grids"]["beta"]:
        s = est.collect(model, beta, n, seed, batches, run.threads)
        run.info.setdefault("acceptance", {})[repr(float(beta))] = {
            "samples": s.n_total, "accepted": s.n_accepted, "rate": s.acceptance_rate}
        pw = est.partition_weights(model, beta, n, samples=s)
        for ct, (d, se) in pw.weights.items():
            wrows.append((beta, ct, d, se, ct in pw.allowed))
        run.check(f"D_n support equals allowed cycle types beta={beta}", pw.support_matches,
                  f"support={sorted(pw.support)} allowed={sorted(pw.allowed)}")
        run.check(f"windings equal cycle type beta={beta}", pw.mismatched_windings == 0,
                  f"{pw.mismatched_windings} mismatches")
        for b in run.cfg["grids"]["b"]:
            z = spec.partition(beta, b)
            zl, sel = s.partition(b, "loop")
            zw = pw.partition(b)
            run.check(f"sum D_n cosh = loop estimator beta={beta} b={b}",
                      abs(zw - zl) <= 1e-10 * abs(zl), repr(zw - zl))
            run.check(f"loop Z within 3 sigma of ED beta={beta} b={b}", abs(zl - z) <= 3 * sel,
                      f"{zl!r} +- {sel!r} vs {z!r}")
            if one_hole:
                mg = est.magnetization_u_infinity(model, beta, b, n, samples=s)
                s3 = spec.magnetization(beta, b)
                mrows.append((beta, b, mg.value, mg.std_error, s3, mg.meta["bound"], mg.meta["margin"],
                              s3 - mg.meta["bound"]))
                run.check(f"MC S3 within 3 sigma of ED beta={beta} b={b}",
                          abs(mg.value - s3) <= 3 * mg.std_error, f"{mg.value!r} vs {s3!r}")
                if b > 0:
                    run.check(f"ED margin > 0 beta={beta} b={b}", s3 - mg.meta["bound"] > 0)
    run.table("weights", ("beta", "cycle_type", "D_n", "se", "allowed"), wrows)
    if mrows:
        run.table("magnetization", ("beta", "b", "S3_mc", "se", "S3_ed", "tanh_bound", "margin_mc",
                                    "margin_ed"), mrows)


TASKS = {"ed": task_ed, "mc": task_mc, "loops": task_loops, "verify": task_verify,
         "report": task_report}


# ---------------------------------------------------------------- driver

def _setup_logging(out: Path) -> logging.Handler:
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    return handler


def run_config(cfg: dict, out: Path | None = None, threads: int = 1,
               seed_override: int | None = None) -> int:
    """Validate, execute and write artifacts. Returns the exit status."""
    cfg = copy.deepcopy(cfg)
    try:
        validate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if seed_override is not None:
        cfg.setdefault("sampling", {"samples": 1, "seed": 0})["seed"] = int(seed_override)
    out = Path(out if out is not None else cfg.get("output", "hubloops-out"))
    handler = _setup_logging(out)
    t0 = time.perf_counter()
    run = Run(cfg, out, max(1, int(threads)))
    status = EXIT_OK
    error = None
    try:
        model = build_model(cfg)
        log.info("task %s on %s, N=%d, U=%s, backend %s", cfg["task"], model.kind, model.N,
                 model.U, backend())
        TASKS[cfg["task"]](run, model)
        status = EXIT_OK if run.ok else EXIT_CHECK
    except ConfigError as exc:
        error, status = f"config error: {exc}", EXIT_CONFIG
    except ed.InfeasibleOracle as exc:
        error, status = f"infeasible oracle: {exc}", EXIT_INFEASIBLE
    except est.ZeroAcceptance as exc:
        error, status = f"zero acceptance: {exc}", EXIT_ZERO_ACCEPT
    if error:
        log.error(error)
        print(error, file=sys.stderr)
    artifacts = {}
    for name, (header, rows) in run.tables.items():
        path = out / f"{name}.csv"
        write_csv(path, header, rows)
        artifacts[path.name] = _sha256(path)
    chash = config_hash(cfg)
    summary = {"task": cfg["task"], "status": status, "error": error, "config_sha256": chash,
               "seed": cfg.get("sampling", {}).get("seed"), "checks": run.checks, **run.info}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    manifest = {"manifest_version": MANIFEST_VERSION, "config": cfg, "config_sha256": chash,
                "artifacts": artifacts, "versions": versions(), "backend": backend(),
                "threads": run.threads, "wall_time_s": time.perf_counter() - t0, "status": status}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("status %d in %.2f s", status, manifest["wall_time_s"])
    log.removeHandler(handler)
    handler.close()
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hubloops", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="run config or an emitted manifest.json")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed-override", type=int)
    args = ap.parse_args(argv)
    try:
        cfg = read_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_config(cfg, args.out, args.threads, args.seed_override)


if __name__ == "__main__":
    sys.exit(main())
