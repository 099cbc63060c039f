"""Monte Carlo harness: trials, error estimates, alpha sweeps and statistical checks.

Every trial draws its randomness from ``trial_rng(master_seed, index)`` and
results are collected by index, so output never depends on how trials are
scheduled across worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats

from . import __version__
from .bounds import expected_disguised_conjecture
from .core import RegimeParams, TestDesign, TrialOutcome, round_half_up, trial_seed
from .decoders import positive_tests
from .designs import generate_bernoulli, generate_identity, generate_nctpi
from .oracle import disguise_mask

PRIORS = ("iid", "combinatorial")
DESIGN_KINDS = ("nctpi", "bernoulli", "identity")
DECODER_KINDS = ("comp", "dd", "individual")


@dataclass(frozen=True)
class TrialSpec:
    """Everything a single trial needs apart from its seed.

    ``prior_k`` overrides the number of defectives under the combinatorial
    prior and ``prior_p`` the defect probability under the i.i.d. prior; by
    default they come from the regime. ``draws`` overrides the per-item draw
    count L of the near-constant design (non-integer values allowed).
    """

    regime: RegimeParams
    alpha: float
    design: str = "nctpi"
    prior: str = "combinatorial"
    decoder: str = "comp"
    prior_k: int | None = None
    prior_p: float | None = None
    draws: float | None = None

    def __post_init__(self):
        if self.design not in DESIGN_KINDS:
            raise ValueError(f"unknown design {self.design!r}")
        if self.prior not in PRIORS:
            raise ValueError(f"unknown prior {self.prior!r}")
        if self.decoder not in DECODER_KINDS:
            raise ValueError(f"unknown decoder {self.decoder!r}")
        if self.decoder == "individual" and self.design != "identity":
            raise ValueError("the individual decoder needs the identity design")
        if self.n_tests < 1:
            raise ValueError(f"alpha={self.alpha} gives T < 1 at n={self.regime.n}")
        if self.design == "identity" and self.n_tests != self.regime.n:
            raise ValueError("the identity design needs alpha = 1")

    @property
    def n_tests(self) -> int:
        return self.regime.tests_for_alpha(self.alpha)

    @property
    def draws_per_item(self) -> float:
        if self.draws is not None:
            return self.draws
        return self.regime.draws_per_item(self.n_tests)

    @property
    def inclusion_prob(self) -> float:
        return min(0.5, self.regime.nu / self.regime.k)

    def describe(self) -> dict:
        d = asdict(self)
        d["regime"] = self.regime.to_dict()
        d["T"] = self.n_tests
        if self.design == "nctpi":
            d["L"] = self.draws_per_item
        elif self.design == "bernoulli":
            d["q"] = self.inclusion_prob
        return d


def sample_combinatorial(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """Uniform k-subset as a mask, via a partial Fisher-Yates shuffle."""
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    perm = np.arange(n)
    offsets = uniform_indices_varying(rng, n - np.arange(k))
    for i, off in enumerate(offsets.tolist()):
        j = i + off
        perm[i], perm[j] = perm[j], perm[i]
    x = np.zeros(n, dtype=bool)
    x[perm[:k]] = True
    return x


def uniform_indices_varying(rng: np.random.Generator, uppers: np.ndarray) -> np.ndarray:
    raw = np.asarray(rng.bit_generator.random_raw(len(uppers)), dtype=np.uint64)
    return (raw % np.asarray(uppers, dtype=np.uint64)).astype(np.int64)


def sample_pattern(spec: TrialSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.regime.n
    if spec.prior == "iid":
        p = spec.regime.p if spec.prior_p is None else spec.prior_p
        return rng.random(n) < p
    k = spec.regime.k if spec.prior_k is None else spec.prior_k
    return sample_combinatorial(rng, n, k)


def build_design(spec: TrialSpec, rng: np.random.Generator) -> TestDesign:
    n, T = spec.regime.n, spec.n_tests
    if spec.design == "identity":
        return generate_identity(n)
    if spec.design == "nctpi":
        return generate_nctpi(n, T, spec.draws_per_item, rng)
    return generate_bernoulli(n, T, spec.inclusion_prob, rng)


def evaluate(design: TestDesign, x: np.ndarray, seed: int = 0) -> TrialOutcome:
    """Apply the OR channel to ``x``, decode with COMP and DD, and record the oracle counts."""
    y = positive_tests(design, x)
    cleared = np.zeros(design.n_items, dtype=bool)
    cleared[design.test_items[~y[design.entry_tests()]]] = True
    comp = ~cleared
    entry_test = design.entry_tests()
    alive = ~cleared[design.test_items]
    alive_per_test = np.bincount(entry_test[alive], minlength=design.n_tests)
    sole = alive & y[entry_test] & (alive_per_test[entry_test] == 1)
    dd = np.zeros(design.n_items, dtype=bool)
    dd[design.test_items[sole]] = True
    disguised, per_test = disguise_mask(design, x)
    comp_fp = int(np.count_nonzero(comp & ~x))
    comp_fn = int(np.count_nonzero(~comp & x))
    dd_fp = int(np.count_nonzero(dd & ~x))
    dd_fn = int(np.count_nonzero(~dd & x))
    return TrialOutcome(
        seed=seed, k=int(np.count_nonzero(x)),
        w_k=int(np.count_nonzero(per_test)),
        g=int(np.count_nonzero(disguised & ~x)),
        d_total=int(np.count_nonzero(disguised)),
        comp_ok=comp_fp == 0 and comp_fn == 0, dd_ok=dd_fp == 0 and dd_fn == 0,
        comp_false_pos=comp_fp, comp_false_neg=comp_fn,
        dd_false_pos=dd_fp, dd_false_neg=dd_fn,
    )


def run_trial(spec: TrialSpec, seed: int) -> TrialOutcome:
    """One trial: sample a pattern, build the design, test, decode, and run the oracle."""
    rng = np.random.Generator(np.random.PCG64(seed))
    x = sample_pattern(spec, rng)
    design = build_design(spec, rng)
    return evaluate(design, x, seed)


def succeeded(outcome: TrialOutcome, decoder: str) -> bool:
    # on the identity design COMP and individual testing coincide
    return outcome.dd_ok if decoder == "dd" else outcome.comp_ok


def _run_block(spec: TrialSpec, master_seed: int, start: int, stop: int) -> list[TrialOutcome]:
    return [run_trial(spec, trial_seed(master_seed, i)) for i in range(start, stop)]


def run_trials(spec: TrialSpec, trials: int, master_seed: int, offset: int = 0,
               workers: int = 1) -> list[TrialOutcome]:
    """Trials ``offset .. offset+trials-1`` in index order, optionally across processes."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if workers <= 1:
        return _run_block(spec, master_seed, offset, offset + trials)
    bounds = np.linspace(offset, offset + trials, min(workers, trials) * 4 + 1).astype(int)
    blocks = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_block, spec, master_seed, int(a), int(b)) for a, b in blocks]
        out = []
        for fut in futures:
            out.extend(fut.result())
    return out


Z95 = float(stats.norm.ppf(0.975))


def wilson_interval(failures: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (95% by default)."""
    if trials <= 0:
        raise ValueError("trials must be >= 1")
    phat = failures / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z / denom * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials))
    lo = 0.0 if failures == 0 else max(0.0, center - half)
    hi = 1.0 if failures == trials else min(1.0, center + half)
    return lo, hi


@dataclass(frozen=True)
class ErrorEstimate:
    rate: float
    ci_low: float
    ci_high: float
    failures: int
    trials: int


def error_from_outcomes(outcomes: Sequence[TrialOutcome], decoder: str) -> ErrorEstimate:
    failures = sum(1 for o in outcomes if not succeeded(o, decoder))
    lo, hi = wilson_interval(failures, len(outcomes))
    return ErrorEstimate(failures / len(outcomes), lo, hi, failures, len(outcomes))


def estimate_error(spec: TrialSpec, trials: int, master_seed: int, offset: int = 0,
                   workers: int = 1) -> ErrorEstimate:
    return error_from_outcomes(run_trials(spec, trials, master_seed, offset, workers),
                               spec.decoder)


@dataclass(frozen=True)
class SweepConfig:
    regime: RegimeParams
    alpha_grid: tuple[float, ...]
    trials: int = 1000
    decoder: str = "comp"
    design: str = "nctpi"
    prior: str = "combinatorial"
    master_seed: int = 0

    def __post_init__(self):
        grid = tuple(float(a) for a in self.alpha_grid)
        object.__setattr__(self, "alpha_grid", grid)
        if not grid:
            raise ValueError("alpha_grid is empty")
        if any(not 0 < a <= 1 for a in grid):
            raise ValueError("alpha values must lie in (0, 1]")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("alpha_grid must be strictly increasing")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    def point(self, alpha: float) -> TrialSpec:
        return TrialSpec(self.regime, alpha, design=self.design, prior=self.prior,
                         decoder=self.decoder)

    def to_dict(self) -> dict:
        return {"regime": self.regime.to_dict(), "alpha_grid": list(self.alpha_grid),
                "trials": self.trials, "decoder": self.decoder, "design": self.design,
                "prior": self.prior, "master_seed": self.master_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        grid = d["alpha_grid"]
        if isinstance(grid, dict):
            grid = alpha_range(grid["start"], grid["stop"], grid["num"])
        return cls(regime=RegimeParams.from_dict(d["regime"]), alpha_grid=tuple(grid),
                   trials=int(d.get("trials", 1000)), decoder=d.get("decoder", "comp"),
                   design=d.get("design", "nctpi"), prior=d.get("prior", "combinatorial"),
                   master_seed=int(d.get("master_seed", 0)))


def alpha_range(start: float, stop: float, num: int) -> list[float]:
    return [round(float(a), 12) for a in np.linspace(start, stop, int(num))]


SWEEP_COLUMNS = ("alpha", "T", "empirical_error", "ci_low", "ci_high",
                 "mean_g", "mean_w", "mean_d")


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    T: int
    empirical_error: float
    ci_low: float
    ci_high: float
    mean_g: float
    mean_w: float
    mean_d: float


@dataclass
class SweepTable:
    rows: list[SweepRow]
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# metadata:\n")
        for key, value in self.metadata.items():
            buf.write(f"#   {key}: {json.dumps(value, sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in self.rows:
            w.writerow([repr(getattr(r, c)) for c in SWEEP_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"metadata": self.metadata,
                           "rows": [asdict(r) for r in self.rows]}, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "SweepTable":
        meta, body = {}, []
        for line in text.splitlines():
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition(": ")
                if sep:
                    meta[key] = json.loads(value)
            elif line:
                body.append(line)
        reader = csv.DictReader(body)
        rows = [SweepRow(alpha=float(r["alpha"]), T=int(r["T"]),
                         **{c: float(r[c]) for c in SWEEP_COLUMNS[2:]}) for r in reader]
        return cls(rows, meta)


def sweep_alpha(config: SweepConfig, workers: int = 1) -> SweepTable:
    """One row per grid point; grid point j uses global trial indices j*trials .. (j+1)*trials-1."""
    rows = []
    for j, alpha in enumerate(config.alpha_grid):
        spec = config.point(alpha)
        try:
            outcomes = run_trials(spec, config.trials, config.master_seed,
                                  offset=j * config.trials, workers=workers)
        except Exception as exc:
            raise RuntimeError(f"sweep failed at grid point {j} (alpha={alpha}): {exc}") from exc
        est = error_from_outcomes(outcomes, config.decoder)
        rows.append(SweepRow(
            alpha=alpha, T=spec.n_tests, empirical_error=est.rate,
            ci_low=est.ci_low, ci_high=est.ci_high,
            mean_g=float(np.mean([o.g for o in outcomes])),
            mean_w=float(np.mean([o.w_k for o in outcomes])),
            mean_d=float(np.mean([o.d_total for o in outcomes])),
        ))
    meta = {"tool": f"pgtsim {__version__}", "config": config.to_dict(),
            "master_seed": config.master_seed}
    return SweepTable(rows, meta)


def _pava_nonincreasing(values: Sequence[float]) -> list[float]:
    blocks: list[list[float]] = []  # [mean, weight]
    for v in values:
        blocks.append([v, 1.0])
        while len(blocks) > 1 and blocks[-2][0] < blocks[-1][0]:
            m2, w2 = blocks.pop()
            m1, w1 = blocks.pop()
            blocks.append([(m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2])
    out = []
    for m, w in blocks:
        out.extend([m] * int(w))
    return out


def monotone_clean(table: SweepTable) -> SweepTable:
    """Force the error column to be nonincreasing in alpha.

    Errors are replaced by their antitonic regression; each ci_high becomes
    the maximum of itself and all later ci_high, so a crossover is only
    declared if every larger alpha also clears the threshold.
    """
    errs = _pava_nonincreasing([r.empirical_error for r in table.rows])
    his = [r.ci_high for r in table.rows]
    for i in range(len(his) - 2, -1, -1):
        his[i] = max(his[i], his[i + 1])
    rows = [replace(r, empirical_error=e, ci_low=min(r.ci_low, e), ci_high=max(h, e))
            for r, e, h in zip(table.rows, errs, his)]
    return SweepTable(rows, dict(table.metadata))


class NoCrossover(LookupError):
    pass


def detect_crossover(table: SweepTable, threshold: float) -> float:
    """Smallest grid alpha whose upper confidence limit is below ``threshold``."""
    for r in table.rows:
        if r.ci_high < threshold:
            return r.alpha
    raise NoCrossover(f"no grid point has ci_high < {threshold}")


def violates_monotonicity(table: SweepTable, widths: float = 2.0) -> list[int]:
    """Indices i where error rises from row i to i+1 by more than ``widths`` CI widths."""
    bad = []
    for i, (a, b) in enumerate(zip(table.rows, table.rows[1:])):
        width = max(a.ci_high - a.ci_low, b.ci_high - b.ci_low)
        if b.empirical_error - a.empirical_error > widths * width:
            bad.append(i)
    return bad


# statistical checks

@dataclass(frozen=True)
class PriorEquivalence:
    iid: ErrorEstimate
    combinatorial: ErrorEstimate
    doubled: ErrorEstimate
    overlap: bool
    power_ok: bool

    @property
    def passed(self) -> bool:
        return self.overlap and self.power_ok


def _overlap(a: ErrorEstimate, b: ErrorEstimate) -> bool:
    return a.ci_low <= b.ci_high and b.ci_low <= a.ci_high


def check_prior_equivalence(regime: RegimeParams, alpha: float, trials: int, seed: int,
                            design: str = "nctpi", decoder: str = "comp",
                            workers: int = 1) -> PriorEquivalence:
    """Error under i.i.d.(p = k/n) vs combinatorial(k), both 95% Wilson intervals.

    The same design rule is used throughout. As a power check, combinatorial
    with 2k defectives must be distinguishable from the i.i.d. run.
    """
    k = regime.k
    base = TrialSpec(regime, alpha, design=design, decoder=decoder)
    iid = estimate_error(replace(base, prior="iid", prior_p=k / regime.n), trials, seed,
                         offset=0, workers=workers)
    comb = estimate_error(replace(base, prior="combinatorial", prior_k=k), trials, seed,
                          offset=trials, workers=workers)
    doubled = estimate_error(replace(base, prior="combinatorial", prior_k=min(2 * k, regime.n)),
                             trials, seed, offset=2 * trials, workers=workers)
    return PriorEquivalence(iid, comb, doubled, _overlap(iid, comb), not _overlap(iid, doubled))


@dataclass(frozen=True)
class WConcentration:
    T: int
    k: int
    draws: float
    nu: float
    trials: int
    target_mean: float
    mean: float
    std_error: float
    delta: float
    tail_frequency: float
    tail_bound: float
    tail_limit: float
    degenerate: bool

    @property
    def mean_ok(self) -> bool:
        return abs(self.mean - self.target_mean) <= 3 * self.std_error

    @property
    def tail_ok(self) -> bool:
        return self.tail_frequency <= self.tail_limit

    @property
    def passed(self) -> bool:
        return self.mean_ok and self.tail_ok and not self.degenerate


def check_w_concentration(T: int, k: int, nu: float, trials: int, seed: int,
                          delta: float = 0.05, tail_limit: float = 0.01,
                          integer_draws: bool = False) -> WConcentration:
    """Concentration of the number of positive tests in a near-constant design.

    Only the k defective columns influence that count and columns are
    independent, so each trial generates the k-column design directly. With
    ``integer_draws`` False, L = nu*T/k is used unrounded (per-item floor/ceil
    mixing) so the mean number of draws is exactly nu*T.
    """
    if k < 1 or T < 1:
        raise ValueError("need k >= 1 and T >= 1")
    draws = nu * T / k
    if integer_draws:
        draws = max(1, round_half_up(draws))
    w = np.empty(trials, dtype=np.int64)
    for i in range(trials):
        rng = np.random.Generator(np.random.PCG64(trial_seed(seed, i)))
        d = generate_nctpi(k, T, max(draws, 1.0), rng)
        w[i] = np.count_nonzero(d.test_sizes)
    target = (1.0 - math.exp(-nu)) * T
    return WConcentration(
        T=T, k=k, draws=draws, nu=nu, trials=trials, target_mean=target,
        mean=float(w.mean()), std_error=float(w.std(ddof=1) / math.sqrt(trials)),
        delta=delta,
        tail_frequency=float(np.mean(np.abs(w - target) >= delta * T)),
        tail_bound=2.0 * math.exp(-delta * delta * T / nu),
        tail_limit=tail_limit, degenerate=k >= T,
    )


@dataclass(frozen=True)
class GConditional:
    n: int
    T: int
    k: int
    L: int
    samples: int
    groups: int
    statistic: float
    dof: int
    p_value: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.dof > 0 and self.p_value > self.threshold


class InsufficientSamples(RuntimeError):
    pass


def sample_w_g(n: int, T: int, k: int, L: int, samples: int, seed: int,
               offset: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """(W, G) pairs from fresh (design, uniform k-subset) draws."""
    w = np.empty(samples, dtype=np.int64)
    g = np.empty(samples, dtype=np.int64)
    for i in range(samples):
        rng = np.random.Generator(np.random.PCG64(trial_seed(seed, offset + i)))
        x = sample_combinatorial(rng, n, k)
        design = generate_nctpi(n, T, L, rng)
        mask, per_test = disguise_mask(design, x)
        w[i] = np.count_nonzero(per_test)
        g[i] = np.count_nonzero(mask & ~x)
    return w, g


def conditional_chi_square(w: np.ndarray, g: np.ndarray, n: int, T: int, k: int, L: int,
                           min_group: int = 20, min_expected: float = 5.0
                           ) -> tuple[float, int, int]:
    """Pearson statistic of G against Bin(n-k, (W/T)^L), conditioned on W.

    Samples are grouped by W; adjacent W values are pooled until a group has
    ``min_group`` samples, and the expected counts of a pooled group are the
    sum of each sample's own binomial pmf. Within a group, G categories are
    merged upward until each expects at least ``min_expected``.
    Returns (statistic, degrees of freedom, number of groups).
    """
    order = np.argsort(w, kind="stable")
    w, g = w[order], g[order]
    values, starts = np.unique(w, return_index=True)
    counts = np.diff(np.append(starts, w.size))
    groups, cur = [], []
    for v, s, c in zip(values, starts, counts):
        cur.append((s, c))
        if sum(cc for _, cc in cur) >= min_group:
            groups.append(cur)
            cur = []
    if cur:
        if groups:
            groups[-1].extend(cur)
        else:
            groups.append(cur)
    stat, dof = 0.0, 0
    trials = n - k
    for grp in groups:
        idx = np.concatenate([np.arange(s, s + c) for s, c in grp])
        gmax = int(g[idx].max())
        support = np.arange(gmax + 1)
        expected = np.zeros(gmax + 1)
        tail = 0.0
        for x_val, cnt in zip(*np.unique(w[idx], return_counts=True)):
            prob = (x_val / T) ** L
            expected += cnt * stats.binom.pmf(support, trials, prob)
            tail += cnt * stats.binom.sf(gmax, trials, prob)
        observed = np.bincount(g[idx], minlength=gmax + 1).astype(float)
        # append the unobserved tail to the last cell
        expected[-1] += tail
        obs_cells, exp_cells = [], []
        acc_o = acc_e = 0.0
        for o, e in zip(observed, expected):
            acc_o += o
            acc_e += e
            if acc_e >= min_expected:
                obs_cells.append(acc_o)
                exp_cells.append(acc_e)
                acc_o = acc_e = 0.0
        if acc_e > 0 or acc_o > 0:
            if exp_cells:
                obs_cells[-1] += acc_o
                exp_cells[-1] += acc_e
            else:
                obs_cells.append(acc_o)
                exp_cells.append(acc_e)
        o, e = np.array(obs_cells), np.array(exp_cells)
        stat += float(np.sum((o - e) ** 2 / e))
        dof += len(o) - 1
    return stat, dof, len(groups)


def check_g_conditional(n: int, T: int, k: int, nu: float, samples: int, seed: int,
                        threshold: float = 1e-3) -> GConditional:
    """Goodness of fit of G given W against Bin(n-k, (W/T)^L), L = round(nu*T/k)."""
    L = max(1, round_half_up(nu * T / k))
    w, g = sample_w_g(n, T, k, L, samples, seed)
    stat, dof, groups = conditional_chi_square(w, g, n, T, k, L)
    if dof == 0:
        raise InsufficientSamples("too few samples for any chi-square degree of freedom")
    return GConditional(n, T, k, L, samples, groups, stat, dof,
                        float(stats.chi2.sf(stat, dof)), threshold)


@dataclass(frozen=True)
class MeanDisguised:
    n: int
    T: int
    p: float
    trials: int
    mean_d: float
    std_error: float
    conjecture_exact: float
    conjecture_simplified: float
    factor: float

    @property
    def passed(self) -> bool:
        return self.mean_d >= self.factor * self.conjecture_simplified


def check_mean_disguised(regime: RegimeParams, alpha: float, trials: int, seed: int,
                         factor: float = 0.8, workers: int = 1) -> MeanDisguised:
    """Empirical mean of D under the i.i.d. prior against n 2^(-(T/n) log2 / p)."""
    spec = TrialSpec(regime, alpha, design="nctpi", prior="iid")
    outcomes = run_trials(spec, trials, seed, workers=workers)
    d = np.array([o.d_total for o in outcomes], dtype=float)
    exact, simple = expected_disguised_conjecture(spec.n_tests, regime.n, regime.p)
    return MeanDisguised(regime.n, spec.n_tests, regime.p, trials, float(d.mean()),
                         float(d.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.nan,
                         exact, simple, factor)


def regime_for_k(n: int, k: int, **kw) -> RegimeParams:
    """A regime whose derived k equals ``k`` exactly."""
    return RegimeParams(n=n, lam=k * math.log(n) / n, **kw)

