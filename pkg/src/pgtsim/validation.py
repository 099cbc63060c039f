"""The statistical validation suite behind ``pgtsim validate``."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bounds import lp_min, necessary_rate, sufficient_rate
from .core import LOG2, LOG2_SQ, DefectPattern, RegimeParams, trial_seed
from .decoders import apply_tests, decode_comp, decode_dd
from .designs import generate_bernoulli, generate_nctpi
from .experiments import (check_g_conditional, check_mean_disguised,
                          check_prior_equivalence, check_w_concentration)
from .oracle import disguise_report_bruteforce


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


@dataclass(frozen=True)
class Profile:
    name: str
    oracle_n: int
    oracle_designs: int
    w_trials: int
    g_samples: int
    prior_n: int
    prior_trials: int
    mean_d_n: int
    mean_d_trials: int


PROFILES = {
    "quick": Profile("quick", oracle_n=8, oracle_designs=10, w_trials=2000, g_samples=3000,
                     prior_n=2000, prior_trials=300, mean_d_n=2000, mean_d_trials=200),
    "full": Profile("full", oracle_n=10, oracle_designs=50, w_trials=10_000, g_samples=20_000,
                    prior_n=5000, prior_trials=1000, mean_d_n=10_000, mean_d_trials=1000),
}


def random_small_design(kind: str, n: int, rng: np.random.Generator):
    T = int(rng.integers(2, 11))
    if kind == "nctpi":
        return generate_nctpi(n, T, int(rng.integers(1, 5)), rng)
    return generate_bernoulli(n, T, float(rng.choice([0.2, 0.3, 0.5])), rng)


@dataclass(frozen=True)
class OracleEquivalence:
    designs: int
    patterns: int
    comp_mismatches: int
    sandwich_violations: int

    @property
    def passed(self) -> bool:
        return self.comp_mismatches == 0 and self.sandwich_violations == 0


def check_oracle_equivalence(n: int, designs_per_kind: int, seed: int,
                             comp: Callable = decode_comp,
                             dd: Callable = decode_dd) -> OracleEquivalence:
    """Exhaustive over all 2^n patterns: COMP exact iff G = 0, and DD <= truth <= COMP."""
    comp_bad = sandwich_bad = checked = 0
    index = 0
    for kind in ("nctpi", "bernoulli"):
        for _ in range(designs_per_kind):
            rng = np.random.Generator(np.random.PCG64(trial_seed(seed, index)))
            index += 1
            design = random_small_design(kind, n, rng)
            for bits in itertools.product((False, True), repeat=n):
                pattern = DefectPattern.from_vector(bits)
                y = apply_tests(design, pattern)
                c = comp(design, y)
                d = dd(design, y)
                g = disguise_report_bruteforce(design, pattern).g
                if (c.declared_defective == pattern.defective_set) != (g == 0):
                    comp_bad += 1
                truth = set(pattern.defective_set)
                if not (set(d.declared_defective) <= truth <= set(c.declared_defective)):
                    sandwich_bad += 1
                checked += 1
    return OracleEquivalence(2 * designs_per_kind, checked, comp_bad, sandwich_bad)


def _formula_check() -> CheckResult:
    ok = sufficient_rate(LOG2_SQ, 0) == 1.0 and necessary_rate(LOG2_SQ, 0) == 0.5
    ratios = [sufficient_rate(lam, 0) / necessary_rate(lam, 0)
              for lam in np.linspace(0.01, 2.0, 200)]
    worst = max(ratios)
    ok = ok and worst < 2
    argmin_ok = all(abs(lp_min(p)[0] - LOG2 / p) <= 3 * p ** -0.5
                    for p in (0.5, 0.2, 0.1, 0.05, 0.01))
    return CheckResult("formulas", ok and argmin_ok,
                       f"max sufficient/necessary ratio {worst:.6f}; L_p argmin window ok={argmin_ok}")


def run_validation(profile: str = "quick", seed: int = 0, workers: int = 1,
                   comp: Callable = decode_comp) -> list[CheckResult]:
    prof = PROFILES[profile]
    results = [_formula_check()]

    eq = check_oracle_equivalence(prof.oracle_n, prof.oracle_designs, seed, comp=comp)
    results.append(CheckResult(
        "oracle_equivalence", eq.passed,
        f"{eq.designs} designs x 2^{prof.oracle_n} patterns; comp/G mismatches "
        f"{eq.comp_mismatches}, DD<=truth<=COMP violations {eq.sandwich_violations}"))

    w = check_w_concentration(2000, 250, LOG2, prof.w_trials, seed + 1)
    results.append(CheckResult(
        "w_concentration", w.passed,
        f"T={w.T} k={w.k} mean W {w.mean:.4f} vs {w.target_mean:.1f} "
        f"(|z|={abs(w.mean - w.target_mean) / w.std_error:.3f} <= 3); "
        f"tail freq {w.tail_frequency:.5f} <= {w.tail_limit} (bound {w.tail_bound:.5f})"))

    try:
        g = check_g_conditional(2000, 721, 50, LOG2, prof.g_samples, seed + 2)
        results.append(CheckResult(
            "g_conditional", g.passed,
            f"n={g.n} T={g.T} k={g.k} L={g.L}; chi2={g.statistic:.3f} dof={g.dof} "
            f"p={g.p_value:.5f} > {g.threshold}"))
    except RuntimeError as exc:
        results.append(CheckResult("g_conditional", False, str(exc)))

    regime = RegimeParams(prof.prior_n, 0.2)
    pe = check_prior_equivalence(regime, sufficient_rate(0.2, regime.eps_upper),
                                 prof.prior_trials, seed + 3, workers=workers)
    results.append(CheckResult(
        "prior_equivalence", pe.passed,
        f"iid {pe.iid.rate:.4f} [{pe.iid.ci_low:.4f}, {pe.iid.ci_high:.4f}] vs "
        f"comb {pe.combinatorial.rate:.4f} [{pe.combinatorial.ci_low:.4f}, "
        f"{pe.combinatorial.ci_high:.4f}] overlap={pe.overlap}; "
        f"2k comb {pe.doubled.rate:.4f} separated={pe.power_ok}"))

    regime = RegimeParams(prof.mean_d_n, 0.5)
    md = check_mean_disguised(regime, 0.5 * 0.5 / LOG2_SQ, prof.mean_d_trials, seed + 4,
                              workers=workers)
    results.append(CheckResult(
        "mean_disguised", md.passed,
        f"n={md.n} T={md.T} mean D {md.mean_d:.3f} >= {md.factor} x {md.conjecture_simplified:.3f}"))
    return results


def corrupted_comp(design, outcomes):
    """COMP with its largest declared item dropped; used to prove the suite can fail."""
    res = decode_comp(design, outcomes)
    return type(res)(res.declared_defective[:-1], res.decoder)


def format_report(results: list[CheckResult], profile: str, seed: int) -> str:
    lines = [r.line() for r in results]
    failed = sum(not r.passed for r in results)
    lines.append(f"{'OK' if failed == 0 else 'FAILED'}: {len(results) - failed}/{len(results)} "
                 f"checks passed (profile={profile}, seed={seed})")
    return "\n".join(lines) + "\n"

