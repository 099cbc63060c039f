"""Shared domain types, regime arithmetic and per-trial randomness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LOG2 = math.log(2.0)
LOG2_SQ = LOG2 * LOG2


class RegimeError(ValueError):
    """Raised when (n, lambda) falls outside the k = lambda*n/log(n) regime."""


def round_half_up(x: float) -> int:
    # Python's round() is banker's rounding; results must not depend on it.
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class RegimeParams:
    """Problem size and constants for k = lambda * n / log n.

    ``eps_upper`` is the slack on the sufficient test count, ``eps_lower`` and
    ``gamma`` the constants of the lower-bound argument, and ``nu`` the
    draws-per-item coefficient of the near-constant tests-per-item design.
    All logarithms are natural.
    """

    n: int
    lam: float
    eps_upper: float = 0.1
    eps_lower: float = 0.1
    gamma: float = 0.1
    nu: float = LOG2

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise RegimeError(f"n must be an integer >= 3, got {self.n}")
        if not self.lam > 0:
            raise RegimeError(f"lambda must be positive, got {self.lam}")
        if self.p >= 1.0:
            raise RegimeError(
                f"lambda/log(n) = {self.p:.4g} >= 1 for n={self.n}, lambda={self.lam}")
        if self.eps_upper <= 0:
            raise RegimeError("eps_upper must be > 0")
        if not 0 < self.eps_lower < 1:
            raise RegimeError("eps_lower must lie in (0, 1)")
        if self.gamma <= 0:
            raise RegimeError("gamma must be > 0")
        if self.nu <= 0:
            raise RegimeError("nu must be > 0")
        raw = self.lam * self.n / math.log(self.n)
        k = round_half_up(raw)
        clamped = min(max(k, 1), self.n - 1)
        if abs(clamped - raw) > 1:
            raise RegimeError(
                f"k = {raw:.3f} cannot be realised in [1, n-1] for n={self.n}")

    @property
    def log_n(self) -> float:
        return math.log(self.n)

    @property
    def p(self) -> float:
        return self.lam / math.log(self.n)

    @property
    def k(self) -> int:
        k = round_half_up(self.lam * self.n / math.log(self.n))
        return min(max(k, 1), self.n - 1)

    @property
    def t_sufficient(self) -> int:
        rate = min(1.0, (1.0 + self.eps_upper) * self.lam / LOG2_SQ)
        return math.ceil(rate * self.n)

    def tests_for_alpha(self, alpha: float) -> int:
        return round_half_up(alpha * self.n)

    def draws_per_item(self, T: int, k: int | None = None) -> int:
        """L = nu*T/k rounded to the nearest integer, at least 1."""
        k = self.k if k is None else k
        return max(1, round_half_up(self.nu * T / k))

    def to_dict(self) -> dict:
        return {"n": self.n, "lambda": self.lam, "eps_upper": self.eps_upper,
                "eps_lower": self.eps_lower, "gamma": self.gamma, "nu": self.nu}

    @classmethod
    def from_dict(cls, d: dict) -> "RegimeParams":
        known = {"n", "lambda", "eps_upper", "eps_lower", "gamma", "nu"}
        extra = set(d) - known
        if extra:
            raise KeyError(f"unknown regime keys: {sorted(extra)}")
        kw = {k: d[k] for k in ("eps_upper", "eps_lower", "gamma", "nu") if k in d}
        return cls(n=int(d["n"]), lam=float(d["lambda"]), **kw)


def derive_regime(n: int, lam: float, **slacks) -> RegimeParams:
    return RegimeParams(n=n, lam=lam, **slacks)


class TestDesign:
    """Sparse T x n incidence structure with both orientations.

    Stored as two CSR-style pairs: ``item_ptr``/``item_tests`` lists the
    distinct tests of each item, ``test_ptr``/``test_items`` the distinct
    items of each test. Both are sorted within each row. Instances are
    treated as immutable.
    """

    __test__ = False  # keep pytest from collecting this class

    def __init__(self, n_items: int, n_tests: int, item_ptr, item_tests,
                 test_ptr, test_items, draw_multiplicity=None, kind: str = "custom"):
        self.n_items = int(n_items)
        self.n_tests = int(n_tests)
        self.item_ptr = np.asarray(item_ptr, dtype=np.int64)
        self.item_tests = np.asarray(item_tests, dtype=np.int64)
        self.test_ptr = np.asarray(test_ptr, dtype=np.int64)
        self.test_items = np.asarray(test_items, dtype=np.int64)
        self.draw_multiplicity = (None if draw_multiplicity is None
                                  else np.asarray(draw_multiplicity, dtype=np.int64))
        self.kind = kind
        self._entry_items = None
        self._entry_tests = None
        for arr in (self.item_ptr, self.item_tests, self.test_ptr, self.test_items):
            arr.flags.writeable = False

    @classmethod
    def from_pairs(cls, n_items: int, n_tests: int, items, tests,
                   draw_multiplicity=None, kind: str = "custom") -> "TestDesign":
        """Build from parallel arrays of (item, test) memberships; duplicates collapse."""
        items = np.asarray(items, dtype=np.int64)
        tests = np.asarray(tests, dtype=np.int64)
        if n_tests < 0 or n_items < 0:
            raise ValueError("dimensions must be non-negative")
        if items.size:
            if items.min() < 0 or items.max() >= n_items:
                raise ValueError("item index out of range")
            if tests.min() < 0 or tests.max() >= n_tests:
                raise ValueError("test index out of range")
        key = np.unique(items * max(n_tests, 1) + tests)
        it_items = key // max(n_tests, 1)
        it_tests = key % max(n_tests, 1)
        item_ptr = np.zeros(n_items + 1, dtype=np.int64)
        np.cumsum(np.bincount(it_items, minlength=n_items), out=item_ptr[1:])
        order = np.argsort(it_tests, kind="stable")
        test_ptr = np.zeros(n_tests + 1, dtype=np.int64)
        np.cumsum(np.bincount(it_tests, minlength=n_tests), out=test_ptr[1:])
        return cls(n_items, n_tests, item_ptr, it_tests, test_ptr, it_items[order],
                   draw_multiplicity=draw_multiplicity, kind=kind)

    @classmethod
    def from_item_lists(cls, n_tests: int, tests_of_item: Sequence[Sequence[int]],
                        kind: str = "custom") -> "TestDesign":
        items = [i for i, ts in enumerate(tests_of_item) for _ in ts]
        tests = [t for ts in tests_of_item for t in ts]
        return cls.from_pairs(len(tests_of_item), n_tests, items, tests, kind=kind)

    @classmethod
    def from_test_lists(cls, n_items: int, items_of_test: Sequence[Sequence[int]],
                        kind: str = "custom") -> "TestDesign":
        tests = [t for t, its in enumerate(items_of_test) for _ in its]
        items = [i for its in items_of_test for i in its]
        return cls.from_pairs(n_items, len(items_of_test), items, tests, kind=kind)

    @property
    def tests_of_item(self) -> list[list[int]]:
        p, v = self.item_ptr, self.item_tests.tolist()
        return [v[p[i]:p[i + 1]] for i in range(self.n_items)]

    @property
    def items_of_test(self) -> list[list[int]]:
        p, v = self.test_ptr, self.test_items.tolist()
        return [v[p[t]:p[t + 1]] for t in range(self.n_tests)]

    @property
    def item_degrees(self) -> np.ndarray:
        return np.diff(self.item_ptr)

    @property
    def test_sizes(self) -> np.ndarray:
        return np.diff(self.test_ptr)

    def entry_items(self) -> np.ndarray:
        """Item index of every entry of ``item_tests``."""
        if self._entry_items is None:
            self._entry_items = np.repeat(np.arange(self.n_items), self.item_degrees)
            self._entry_items.flags.writeable = False
        return self._entry_items

    def entry_tests(self) -> np.ndarray:
        """Test index of every entry of ``test_items``."""
        if self._entry_tests is None:
            self._entry_tests = np.repeat(np.arange(self.n_tests), self.test_sizes)
            self._entry_tests.flags.writeable = False
        return self._entry_tests

    def to_dense(self) -> np.ndarray:
        m = np.zeros((self.n_tests, self.n_items), dtype=bool)
        m[self.item_tests, self.entry_items()] = True
        return m

    def is_consistent(self) -> bool:
        """Check that both orientations encode the same relation by transposing one."""
        rebuilt = [[] for _ in range(self.n_tests)]
        for i, ts in enumerate(self.tests_of_item):
            for t in ts:
                if not 0 <= t < self.n_tests:
                    return False
                rebuilt[t].append(i)
        return rebuilt == self.items_of_test

    def __eq__(self, other):
        if not isinstance(other, TestDesign):
            return NotImplemented
        return (self.n_items == other.n_items and self.n_tests == other.n_tests
                and np.array_equal(self.item_ptr, other.item_ptr)
                and np.array_equal(self.item_tests, other.item_tests))

    def __repr__(self):
        return (f"TestDesign(kind={self.kind!r}, n_items={self.n_items}, "
                f"n_tests={self.n_tests}, entries={self.item_tests.size})")


@dataclass(frozen=True)
class DefectPattern:
    n_items: int
    defective_set: tuple[int, ...]

    def __post_init__(self):
        ds = tuple(sorted(int(i) for i in self.defective_set))
        if len(set(ds)) != len(ds):
            raise ValueError("defective indices must be unique")
        if ds and (ds[0] < 0 or ds[-1] >= self.n_items):
            raise ValueError("defective index out of range")
        object.__setattr__(self, "defective_set", ds)

    @classmethod
    def from_vector(cls, x) -> "DefectPattern":
        x = np.asarray(x, dtype=bool)
        return cls(x.size, tuple(np.flatnonzero(x).tolist()))

    @property
    def k(self) -> int:
        return len(self.defective_set)

    def vector(self) -> np.ndarray:
        x = np.zeros(self.n_items, dtype=bool)
        x[list(self.defective_set)] = True
        return x


@dataclass(frozen=True)
class TrialOutcome:
    seed: int
    k: int
    w_k: int
    g: int
    d_total: int
    comp_ok: bool
    dd_ok: bool
    comp_false_pos: int
    comp_false_neg: int
    dd_false_pos: int
    dd_false_neg: int
    extra: dict = field(default_factory=dict, compare=False)


def trial_seed(master_seed: int, trial_index: int) -> int:
    """64-bit seed for one trial, a pure function of (master_seed, trial_index)."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(trial_index),))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(trial_seed(master_seed, trial_index)))
