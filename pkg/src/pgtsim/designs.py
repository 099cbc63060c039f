"""Random test-design generators and the plain-text sparse design format.

Text format::

    # optional comment lines (metadata), anywhere before the header
    n T kind
    <distinct tests of item 0, space separated>
    ...
    <distinct tests of item n-1>

An item in no test is an empty line. ``kind`` is a single token.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .core import TestDesign

KINDS = ("nctpi", "bernoulli", "identity")


@dataclass(frozen=True)
class DesignSpec:
    kind: str
    n: int
    T: int | None = None
    L: float | None = None
    q: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown design kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.kind == "nctpi":
            if self.T is None or self.L is None or self.q is not None:
                raise ValueError("nctpi needs T and L only")
            _check_T(self.T)
            if self.L < 1:
                raise ValueError("L must be >= 1")
        elif self.kind == "bernoulli":
            if self.T is None or self.q is None or self.L is not None:
                raise ValueError("bernoulli needs T and q only")
            _check_T(self.T)
            _check_q(self.q)
        elif any(v is not None for v in (self.L, self.q)) or self.T not in (None, self.n):
            raise ValueError("identity takes n only")

    def generate(self, rng: np.random.Generator | None = None) -> TestDesign:
        if self.kind == "identity":
            return generate_identity(self.n)
        if self.kind == "nctpi":
            return generate_nctpi(self.n, self.T, self.L, rng)
        return generate_bernoulli(self.n, self.T, self.q, rng)


def _check_T(T):
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")


def _check_q(q):
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie strictly in (0, 1), got {q}")


def uniform_indices(rng: np.random.Generator, upper: int, size: int) -> np.ndarray:
    """``size`` draws from {0..upper-1}: raw 64-bit words reduced mod ``upper``.

    No rejection step, so the number of words consumed is fixed and output is
    bit-reproducible; the modulo bias is below upper / 2**64.
    """
    raw = rng.bit_generator.random_raw(size)
    return (np.asarray(raw, dtype=np.uint64) % np.uint64(upper)).astype(np.int64)


def generate_nctpi(n: int, T: int, L: float, rng: np.random.Generator) -> TestDesign:
    """Near-constant tests-per-item design: each item draws L tests uniformly with replacement.

    A non-integer ``L`` is realised per item as floor(L) or floor(L)+1 draws,
    the latter with probability frac(L), so the expected number of draws is L.
    Repeated draws of one test collapse in the incidence relation; the raw
    per-item draw counts are kept in ``draw_multiplicity``.
    """
    _check_T(T)
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    base = math.floor(L)
    frac = L - base
    if frac == 0:
        counts = np.full(n, base, dtype=np.int64)
    else:
        counts = base + (rng.random(n) < frac).astype(np.int64)
    items = np.repeat(np.arange(n, dtype=np.int64), counts)
    tests = uniform_indices(rng, T, items.size)
    return TestDesign.from_pairs(n, T, items, tests, draw_multiplicity=counts, kind="nctpi")


def generate_bernoulli(n: int, T: int, q: float, rng: np.random.Generator) -> TestDesign:
    _check_T(T)
    _check_q(q)
    sizes = rng.binomial(n, q, size=T)
    tests = np.repeat(np.arange(T, dtype=np.int64), sizes)
    items = np.concatenate(
        [rng.choice(n, size=s, replace=False) for s in sizes] or [np.empty(0, np.int64)])
    return TestDesign.from_pairs(n, T, items, tests, kind="bernoulli")


def generate_identity(n: int) -> TestDesign:
    idx = np.arange(n, dtype=np.int64)
    return TestDesign.from_pairs(n, n, idx, idx, kind="identity")


def write_design(design: TestDesign, fh: TextIO, metadata: Iterable[str] = ()) -> None:
    for line in metadata:
        fh.write(f"# {line}\n")
    fh.write(f"{design.n_items} {design.n_tests} {design.kind}\n")
    for ts in design.tests_of_item:
        fh.write(" ".join(map(str, ts)) + "\n")


def dumps_design(design: TestDesign, metadata: Iterable[str] = ()) -> str:
    buf = io.StringIO()
    write_design(design, buf, metadata)
    return buf.getvalue()


def read_design(fh: TextIO) -> TestDesign:
    lines = fh.read().splitlines()
    pos = 0
    while pos < len(lines) and (lines[pos].startswith("#") or not lines[pos].strip()):
        pos += 1
    if pos == len(lines):
        raise ValueError("design file has no header line")
    header = lines[pos].split()
    if len(header) != 3:
        raise ValueError(f"bad header line: {lines[pos]!r}")
    n, T, kind = int(header[0]), int(header[1]), header[2]
    body = lines[pos + 1:pos + 1 + n]
    if len(body) < n:
        raise ValueError(f"expected {n} item lines, found {len(body)}")
    if any(line.strip() for line in lines[pos + 1 + n:]):
        raise ValueError("trailing content after item lines")
    tests_of_item = [[int(t) for t in line.split()] for line in body]
    return TestDesign.from_item_lists(T, tests_of_item, kind=kind)


def loads_design(text: str) -> TestDesign:
    return read_design(io.StringIO(text))
