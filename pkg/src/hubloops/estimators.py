"""Monte Carlo estimators and exact checks of the loop representation.

Every accepted sample carries a b-independent weight

    w0 = sgn(tau) exp(-int V + int sum d - int sum v) cos(phase) exp(-Q/2),

and the field and loop forms multiply it by exp(beta b sum sigma_0) and
prod_gamma cosh(beta b w(gamma)) respectively. Both are rescaled by the
normalization trace over the symmetric hard-core space and the free Bose
partition function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from .configgraph import ConfigGraph, allowed_cycle_types, cycle_type
from .model import Model
from .worldline import iter_batches

MIN_BATCHES = 32


class ZeroAcceptance(RuntimeError):
    pass


class IllConditioned(ValueError):
    pass


@dataclass
class ThermalResult:
    value: float
    std_error: float
    n_samples: int
    method: str  # ed | mc-loop | mc-field
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.std_error >= 0:
            raise ValueError("standard error must be non-negative")
        if self.method == "ed" and self.std_error != 0:
            raise ValueError("exact results carry zero error")


# ---------------------------------------------------------------- sample collection

@dataclass
class AcceptedSamples:
    """Accepted samples of one run, kept per batch for batch-means errors."""

    model: Model
    beta: float
    n_total: int
    batch: np.ndarray  # batch index of each accepted sample
    n_batches: int
    batch_sizes: np.ndarray
    w0: np.ndarray
    sign: np.ndarray
    sum_sigma: np.ndarray
    wcount: np.ndarray
    tau: np.ndarray
    scale: float  # Norm * Z_bose
    direct_scale: float  # |R| * Z_bose, R the representative set

    @property
    def n_accepted(self) -> int:
        return len(self.w0)

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_total

    def loop_factor(self, b: float) -> np.ndarray:
        """prod_gamma cosh(beta b w(gamma)) per sample."""
        w = np.arange(self.wcount.shape[1])
        logc = np.log(np.cosh(self.beta * b * w))
        return np.exp(self.wcount @ logc)

    def field_factor(self, b: float) -> np.ndarray:
        return np.exp(self.beta * b * self.sum_sigma)

    def _ratio(self, values: np.ndarray) -> tuple[float, float]:
        num = np.bincount(self.batch, weights=values, minlength=self.n_batches)
        den = np.bincount(self.batch, minlength=self.n_batches).astype(float)
        return _jackknife_ratio(num, den)

    def partition(self, b: float, form: str = "loop") -> tuple[float, float]:
        fac = self.loop_factor(b) if form == "loop" else self.field_factor(b)
        r, se = self._ratio(self.w0 * fac)
        return self.scale * r, self.scale * se

    def direct_partition(self, b: float, form: str = "loop") -> tuple[float, float]:
        """|R| Z_bose E[w 1_accepted]: averages over all samples, so Norm is not needed."""
        fac = self.loop_factor(b) if form == "loop" else self.field_factor(b)
        num = np.bincount(self.batch, weights=self.w0 * fac, minlength=self.n_batches)
        means = num / self.batch_sizes
        r = num.sum() / self.n_total
        se = means.std(ddof=1) / math.sqrt(self.n_batches)
        return float(self.direct_scale * r), float(self.direct_scale * se)

    def cycle_types(self) -> list[tuple]:
        return [cycle_type(t) for t in self.tau]

    def winding_types(self) -> list[tuple]:
        out = []
        for row in self.wcount:
            lst = []
            for w in range(len(row) - 1, 0, -1):
                lst.extend([w] * int(row[w]))
            out.append(tuple(lst))
        return out


def _jackknife_ratio(num: np.ndarray, den: np.ndarray) -> tuple[float, float]:
    """Ratio of totals with a delete-one-batch jackknife error."""
    B = len(num)
    N, D = num.sum(), den.sum()
    if D == 0:
        raise ZeroAcceptance("no accepted samples")
    r = N / D
    keep = den < D
    loo = (N - num[keep]) / (D - den[keep])
    if len(loo) < 2:
        return float(r), 0.0
    var = (B - 1) / B * np.sum((loo - loo.mean()) ** 2)
    return float(r), float(math.sqrt(var))


def collect(model: Model, beta: float, n_samples: int, seed: int, batches: int = MIN_BATCHES,
            threads: int = 1) -> AcceptedSamples:
    """Run the sampler and keep what the estimators need from accepted samples."""
    if n_samples < batches:
        raise ValueError(f"need at least {batches} samples for {batches} batches")
    if batches < MIN_BATCHES:
        raise ValueError(f"at least {MIN_BATCHES} batches are required")
    inp = model.kernel_inputs()
    size = -(-n_samples // batches)
    parts = {k: [] for k in ("batch", "w0", "sign", "sum_sigma", "wcount", "tau")}
    sizes = []
    for bi, bt in enumerate(iter_batches(inp, beta, model.constraint, seed, n_samples, size,
                                         threads)):
        sizes.append(len(bt))
        acc = bt.accepted
        w0 = (bt.sign * np.exp(-bt.coul + bt.dcomp - bt.vint - 0.5 * bt.q) * np.cos(bt.phase))[acc]
        parts["batch"].append(np.full(len(w0), bi, np.int64))
        parts["w0"].append(w0)
        parts["sign"].append(bt.sign[acc])
        parts["sum_sigma"].append(bt.sum_sigma[acc])
        parts["wcount"].append(bt.wcount[acc])
        parts["tau"].append(bt.tau[acc])
    arr = {k: np.concatenate(v) for k, v in parts.items()}
    zb = model.free_boson(beta)
    out = AcceptedSamples(model, float(beta), int(n_samples), arr["batch"], len(sizes),
                          np.array(sizes), arr["w0"], arr["sign"], arr["sum_sigma"], arr["wcount"],
                          arr["tau"], model.norm(beta) * zb, len(inp.reps) * zb)
    if out.n_accepted == 0:
        raise ZeroAcceptance(f"zero accepted samples out of {n_samples} (acceptance rate 0)")
    return out


# ---------------------------------------------------------------- partition function

@dataclass
class PartitionEstimate:
    field: ThermalResult
    loop: ThermalResult
    acceptance_rate: float
    n_accepted: int
    samples: AcceptedSamples = field(repr=False)

    @property
    def form_gap_sigma(self) -> float:
        """|field - loop| in units of the combined standard error."""
        se = math.hypot(self.field.std_error, self.loop.std_error)
        gap = abs(self.field.value - self.loop.value)
        return 0.0 if gap == 0 else (math.inf if se == 0 else gap / se)

    def agrees_with(self, z_exact: float, k: float = 3.0) -> bool:
        return all(abs(r.value - z_exact) <= k * r.std_error
                   for r in (self.field, self.loop))


def mc_partition(model: Model, beta: float, b: float, n_samples: int, seed: int = 0,
                 batches: int = MIN_BATCHES, threads: int = 1,
                 samples: AcceptedSamples | None = None) -> PartitionEstimate:
    s = samples if samples is not None else collect(model, beta, n_samples, seed, batches, threads)
    meta = {"acceptance_rate": s.acceptance_rate, "n_accepted": s.n_accepted, "seed": seed}
    zf, ef = s.partition(b, "field")
    zl, el = s.partition(b, "loop")
    return PartitionEstimate(ThermalResult(zf, ef, s.n_total, "mc-field", dict(meta)),
                             ThermalResult(zl, el, s.n_total, "mc-loop", dict(meta)),
                             s.acceptance_rate, s.n_accepted, s)


def _require_hard_core(model: Model) -> None:
    if not model.hard_core:
        raise ValueError("this estimator needs U = infinity")


def magnetization_u_infinity(model: Model, beta: float, b: float, n_samples: int, seed: int = 0,
                             batches: int = MIN_BATCHES, threads: int = 1,
                             samples: AcceptedSamples | None = None) -> ThermalResult:
    """<S^3> = 1/2 E[sum_i n_i tanh(beta b n_i)] under the cycle-type law."""
    _require_hard_core(model)
    if model.N != model.lattice.size - 1:
        raise ValueError("the magnetization formula needs N = |L| - 1")
    s = samples if samples is not None else collect(model, beta, n_samples, seed, batches, threads)
    w = np.arange(s.wcount.shape[1])
    tanh_sum = s.wcount @ (w * np.tanh(beta * b * w))
    weight = s.w0 * s.loop_factor(b)
    num = np.bincount(s.batch, weights=0.5 * weight * tanh_sum, minlength=s.n_batches)
    den = np.bincount(s.batch, weights=weight, minlength=s.n_batches)
    val, se = _jackknife_ratio(num, den)
    bound = 0.5 * model.N * math.tanh(beta * b)
    return ThermalResult(val, se, s.n_total, "mc-loop",
                         {"margin": val - bound, "bound": bound,
                          "acceptance_rate": s.acceptance_rate, "n_accepted": s.n_accepted})


# ---------------------------------------------------------------- cycle-type weights

@dataclass
class PartitionWeights:
    weights: dict  # cycle type -> (D_n, standard error)
    beta: float
    allowed: set
    mismatched_windings: int
    n_accepted: int

    @property
    def support(self) -> set:
        return {n for n, (d, _) in self.weights.items() if d > 0}

    @property
    def support_matches(self) -> bool:
        return self.support == self.allowed

    def partition(self, b: float) -> float:
        return float(sum(d * math.prod(math.cosh(self.beta * b * k) for k in n)
                         for n, (d, _) in self.weights.items()))


def partition_weights(model: Model, beta: float, n_samples: int, seed: int = 0,
                      batches: int = MIN_BATCHES, threads: int = 1,
                      samples: AcceptedSamples | None = None) -> PartitionWeights:
    _require_hard_core(model)
    s = samples if samples is not None else collect(model, beta, n_samples, seed, batches, threads)
    types = s.cycle_types()
    wtypes = s.winding_types()
    mismatched = sum(1 for a, c in zip(types, wtypes) if a != c)
    out = {}
    for n in sorted(set(types), reverse=True):
        mask = np.array([t == n for t in types])
        num = np.bincount(s.batch[mask], weights=s.w0[mask], minlength=s.n_batches)
        den = np.bincount(s.batch, minlength=s.n_batches).astype(float)
        r, se = _jackknife_ratio(num, den)
        out[n] = (s.scale * r, s.scale * se)
    allowed = allowed_cycle_types(ConfigGraph(model.lattice, model.N, model.constraint))
    return PartitionWeights(out, float(beta), allowed, mismatched, s.n_accepted)


# ---------------------------------------------------------------- one-dimensional structure

@dataclass
class CoefficientFit:
    coefficients: np.ndarray  # C_0 .. C_N
    b_grid: np.ndarray
    condition: float
    residual: float  # relative, on the fitting grid
    parity_violation: float  # max |C_k| over N - k odd, relative to max |C|
    holdout_b: float
    holdout_error: float  # relative

    def evaluate(self, beta: float, b: float) -> float:
        return float(np.polyval(self.coefficients[::-1], math.cosh(beta * b)))


def cosh_grid(beta: float, n: int, b_max: float) -> np.ndarray:
    """b values whose cosh(beta b) are Chebyshev nodes of [1, cosh(beta b_max)]."""
    hi = math.cosh(beta * b_max)
    k = np.arange(n)
    c = 0.5 * (1 + hi) + 0.5 * (hi - 1) * np.cos((2 * k + 1) * math.pi / (2 * n))
    return np.arccosh(np.sort(c)) / beta


def one_d_coefficients(model: Model, beta: float, b_grid=None, b_max: float | None = None,
                       holdout_b: float | None = None, cond_cap: float = 1e12) -> CoefficientFit:
    """Fit Z(beta, b) = sum_k C_k cosh(beta b)^k from exact values on a b grid."""
    if model.lattice.spec.d != 1:
        raise ValueError("the cosh-power expansion is stated for d = 1")
    N = model.N
    if b_grid is None:
        b_grid = cosh_grid(beta, N + 1, 2.0 / beta if b_max is None else b_max)
    b_grid = np.asarray(b_grid, dtype=float)
    if len(b_grid) < N + 1 or len(set(b_grid.tolist())) != len(b_grid) or np.any(b_grid <= 0):
        raise ValueError(f"need at least {N + 1} distinct positive b values")
    spec = model.spectra()
    c = np.cosh(beta * b_grid)
    V = np.vander(c, N + 1, increasing=True)
    cond = float(np.linalg.cond(V))
    if not cond <= cond_cap:
        raise IllConditioned(f"Vandermonde condition number {cond:.3g} exceeds {cond_cap:.0e}")
    Z = np.array([spec.partition(beta, b) for b in b_grid])
    C, *_ = np.linalg.lstsq(V, Z, rcond=None)
    residual = float(np.linalg.norm(V @ C - Z) / np.linalg.norm(Z))
    odd = [k for k in range(N + 1) if (N - k) % 2]
    scale = float(np.abs(C).max())
    parity = float(max((abs(C[k]) for k in odd), default=0.0) / scale)
    if holdout_b is None:
        holdout_b = 0.5 * (b_grid[0] + b_grid[1])
    z_h = spec.partition(beta, holdout_b)
    rec = float(np.polyval(C[::-1], math.cosh(beta * holdout_b)))
    return CoefficientFit(C, b_grid, cond, residual, parity, float(holdout_b), abs(rec - z_h) / z_h)


def y_coefficient(k: int, two_m: int) -> float:
    """2^{-k} binom(k, k/2 + m): the z^{2m} coefficient of ((z + 1/z)/2)^k."""
    if (k + two_m) % 2:
        return 0.0
    j = (k + two_m) // 2
    return float(comb(k, j, exact=True)) / 2.0 ** k if 0 <= j <= k else 0.0


def y_dimension(n_sites: int, k: int, two_m: int) -> float:
    """The literal subspace-dimension reading: binom(|L|, k/2 + m) binom(|L|, k/2 - m)."""
    if (k + two_m) % 2:
        return 0.0
    up, down = (k + two_m) // 2, (k - two_m) // 2
    if up < 0 or down < 0:
        return 0.0
    return float(comb(n_sites, up, exact=True) * comb(n_sites, down, exact=True))


@dataclass
class SectorReport:
    sectors: list  # rows: two_m, exact, coefficient reading, dimension reading
    max_rel_coefficient: float
    max_rel_dimension: float
    matching: tuple  # names of the readings that reproduce every sector to tol

    def row_dicts(self):
        return [dict(zip(("two_m", "exact", "coefficient_reading", "dimension_reading"), r))
                for r in self.sectors]


def sector_identity_check(model: Model, beta: float, coefficients, tol: float = 1e-8) -> SectorReport:
    """Test Z_M(beta; m) = sum_k C_k Y^(k)(m) under both readings of Y.

    Z_M is the b = 0 trace over the S^3 = m sector.
    """
    C = np.asarray(coefficients, dtype=float)
    traces = model.spectra().sector_traces(beta, 0.0)
    n_sites = model.lattice.size
    rows = []
    err_c = err_d = 0.0
    for tm in sorted(traces):
        z = traces[tm]
        yc = sum(C[k] * y_coefficient(k, tm) for k in range(len(C)))
        yd = sum(C[k] * y_dimension(n_sites, k, tm) for k in range(len(C)))
        rows.append((tm, z, float(yc), float(yd)))
        err_c = max(err_c, abs(yc - z) / z)
        err_d = max(err_d, abs(yd - z) / z)
    match = tuple(name for name, e in (("coefficient", err_c), ("dimension", err_d)) if e < tol)
    return SectorReport(rows, float(err_c), float(err_d), match)


# ---------------------------------------------------------------- magnetization bound

@dataclass
class MarginRow:
    instance: str
    beta: float
    b: float
    s3: float
    bound: float
    truncation: str = ""

    @property
    def margin(self) -> float:
        return self.s3 - self.bound


@dataclass
class AizenmanLiebReport:
    rows: list

    @property
    def all_positive(self) -> bool:
        return all(r.margin > 0 for r in self.rows)

    @property
    def min_margin(self) -> float:
        return min(r.margin for r in self.rows)


def aizenman_lieb_report(instances, beta_grid, b_grid) -> AizenmanLiebReport:
    """Exact <S^3> - (N/2) tanh(beta b) for every instance and grid point.

    ``instances`` holds (name, model) or (name, model, hamiltonian kwargs).
    """
    if any(b <= 0 for b in b_grid):
        raise ValueError("the strict bound is stated for b > 0")
    rows = []
    for inst in instances:
        name, model = inst[0], inst[1]
        kw = inst[2] if len(inst) > 2 else {}
        if not model.hard_core or model.N != model.lattice.size - 1:
            raise ValueError(f"{name}: the bound needs U = infinity and N = |L| - 1")
        spec = model.spectra(**kw)
        trunc = ",".join(f"{k}={v}" for k, v in sorted(kw.items()))
        for beta in beta_grid:
            for b in b_grid:
                rows.append(MarginRow(name, float(beta), float(b), spec.magnetization(beta, b),
                                      0.5 * model.N * math.tanh(beta * b), trunc))
    return AizenmanLiebReport(rows)
