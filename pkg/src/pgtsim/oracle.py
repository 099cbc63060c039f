"""Ground-truth disguise computations and the guessing success bound.

An item is *totally disguised* when every test containing it also contains a
defective other than itself, so no outcome carries information about it.
Items in no test are disguised vacuously. A defective item counts as
disguised only if each of its tests has a second defective; under this
convention the number of disguised nondefectives is exactly the quantity G
that decides COMP success.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import DefectPattern, TestDesign


@dataclass(frozen=True)
class DisguiseReport:
    disguised_items: tuple[int, ...]
    g: int
    d: int
    w_k: int


def _check(design: TestDesign, pattern: DefectPattern):
    if design.n_items != pattern.n_items:
        raise ValueError(
            f"dimension mismatch: design has {design.n_items} items, pattern {pattern.n_items}")


def disguise_report_bruteforce(design: TestDesign, pattern: DefectPattern) -> DisguiseReport:
    """Reference implementation: walks every item's tests with plain lists.

    Shares no code with the decoders or the vectorised path, so it can serve
    as an oracle for both.
    """
    _check(design, pattern)
    defective = set(pattern.defective_set)
    items_of_test = design.items_of_test
    disguised = []
    for i, tests in enumerate(design.tests_of_item):
        if all(any(j != i and j in defective for j in items_of_test[t]) for t in tests):
            disguised.append(i)
    g = sum(1 for i in disguised if i not in defective)
    w_k = sum(1 for members in items_of_test if any(j in defective for j in members))
    return DisguiseReport(tuple(disguised), g, len(disguised), w_k)


def disguise_mask(design: TestDesign, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised disguise computation.

    Returns (disguised mask over items, defective count per test).
    """
    per_test = np.bincount(design.item_tests[x[design.entry_items()]],
                           minlength=design.n_tests)
    # defectives in the test other than the item itself
    others = per_test[design.item_tests] - x[design.entry_items()]
    uncovered = np.bincount(design.entry_items()[others == 0], minlength=design.n_items)
    return uncovered == 0, per_test


def disguise_report(design: TestDesign, pattern: DefectPattern) -> DisguiseReport:
    _check(design, pattern)
    x = pattern.vector()
    mask, per_test = disguise_mask(design, x)
    return DisguiseReport(
        disguised_items=tuple(np.flatnonzero(mask).tolist()),
        g=int(np.count_nonzero(mask & ~x)),
        d=int(np.count_nonzero(mask)),
        w_k=int(np.count_nonzero(per_test)),
    )


class RegimeWarning(UserWarning):
    pass


def guess_success_bound(p: float, d: int) -> tuple[float, float]:
    """Best possible success probability with ``d`` disguised items: (1-p)^d and exp(-p d).

    Guessing "nondefective" on every disguised item is optimal only for p < 1/2.
    """
    if d < 0:
        raise ValueError("d must be >= 0")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if p >= 0.5:
        warnings.warn(f"p = {p} >= 1/2: the optimal guess on a disguised item is "
                      "'defective', so (1-p)^d is not the bound", RegimeWarning)
        raise ValueError("guess_success_bound requires p < 1/2")
    return (1.0 - p) ** d, math.exp(-p * d)
