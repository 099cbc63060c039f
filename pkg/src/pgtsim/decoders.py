"""OR measurement channel and the COMP, DD and individual-testing decoders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DefectPattern, TestDesign

DECODERS = ("comp", "dd", "individual")


@dataclass(frozen=True)
class DecodeResult:
    declared_defective: tuple[int, ...]
    decoder: str

    def errors(self, pattern: DefectPattern) -> tuple[int, int]:
        """(false positives, false negatives) against the true pattern."""
        declared = set(self.declared_defective)
        truth = set(pattern.defective_set)
        return len(declared - truth), len(truth - declared)

    def exact(self, pattern: DefectPattern) -> bool:
        return self.declared_defective == pattern.defective_set


def _check_dims(design: TestDesign, n_items: int):
    if design.n_items != n_items:
        raise ValueError(
            f"dimension mismatch: design has {design.n_items} items, pattern {n_items}")


def _check_outcomes(design: TestDesign, outcomes) -> np.ndarray:
    y = np.asarray(outcomes, dtype=bool)
    if y.shape != (design.n_tests,):
        raise ValueError(f"expected {design.n_tests} outcomes, got shape {y.shape}")
    return y


def positive_tests(design: TestDesign, defective_mask: np.ndarray) -> np.ndarray:
    """Boolean vector over tests: True where the test holds a defective."""
    y = np.zeros(design.n_tests, dtype=bool)
    hit = defective_mask[design.entry_items()]
    y[design.item_tests[hit]] = True
    return y


def apply_tests(design: TestDesign, pattern: DefectPattern) -> np.ndarray:
    """Outcome of every test: the OR of the defectivity bits of its items."""
    _check_dims(design, pattern.n_items)
    return positive_tests(design, pattern.vector())


def cleared_items(design: TestDesign, outcomes) -> np.ndarray:
    """Mask of items appearing in at least one negative test."""
    y = _check_outcomes(design, outcomes)
    cleared = np.zeros(design.n_items, dtype=bool)
    neg_entry = ~y[design.entry_tests()]
    cleared[design.test_items[neg_entry]] = True
    return cleared


def decode_comp(design: TestDesign, outcomes) -> DecodeResult:
    """Declare defective every item that is in no negative test.

    Items in no test at all are therefore declared defective.
    """
    cleared = cleared_items(design, outcomes)
    return DecodeResult(tuple(np.flatnonzero(~cleared).tolist()), "comp")


def decode_dd(design: TestDesign, outcomes) -> DecodeResult:
    """Definite defectives: one clearing pass, then one sole-survivor pass.

    An item is declared defective iff it is the only uncleared item of some
    positive test.
    """
    y = _check_outcomes(design, outcomes)
    cleared = cleared_items(design, y)
    entry_test = design.entry_tests()
    alive = ~cleared[design.test_items]
    alive_per_test = np.bincount(entry_test[alive], minlength=design.n_tests)
    sole = alive & y[entry_test] & (alive_per_test[entry_test] == 1)
    declared = np.unique(design.test_items[sole])
    return DecodeResult(tuple(declared.tolist()), "dd")


def decode_individual(pattern_length: int, outcomes) -> DecodeResult:
    y = np.asarray(outcomes, dtype=bool)
    if y.shape != (pattern_length,):
        raise ValueError(
            f"individual testing needs T = n = {pattern_length}, got {y.size} outcomes")
    return DecodeResult(tuple(np.flatnonzero(y).tolist()), "individual")


def decode(decoder: str, design: TestDesign, outcomes) -> DecodeResult:
    if decoder == "comp":
        return decode_comp(design, outcomes)
    if decoder == "dd":
        return decode_dd(design, outcomes)
    if decoder == "individual":
        n = design.n_items
        if (design.n_tests != n or not np.array_equal(design.test_ptr, np.arange(n + 1))
                or not np.array_equal(design.test_items, np.arange(n))):
            raise ValueError("individual decoding requires the identity design")
        return decode_individual(design.n_items, outcomes)
    raise ValueError(f"unknown decoder {decoder!r}")
