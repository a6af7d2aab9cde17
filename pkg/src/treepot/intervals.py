"""Closed interval arithmetic [lo, hi] for certified enclosures.

General signed arithmetic on the endpoints, with two domain conventions that
match how the enclosures arise here: inf · 0 = 0 (mass through an infinite
resistance), and reciprocals of nonnegative intervals map [0, b] to [1/b, inf].
Certification is exact modulo floating-point roundoff.
"""

from __future__ import annotations

import math
from typing import NamedTuple

INF = math.inf


class Iv(NamedTuple):
    lo: float
    hi: float

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        if math.isinf(self.hi):
            return self.lo if not math.isinf(self.lo) else INF
        if math.isinf(self.lo):
            return self.hi
        return 0.5 * (self.lo + self.hi)

    @property
    def err(self) -> float:
        return INF if math.isinf(self.width) else 0.5 * self.width

    def __add__(self, other):  # type: ignore[override]
        o = as_iv(other)
        return Iv(self.lo + o.lo, self.hi + o.hi)

    __radd__ = __add__

    def __sub__(self, other):
        o = as_iv(other)
        return Iv(self.lo - o.hi, self.hi - o.lo)

    def __rsub__(self, other):
        return as_iv(other).__sub__(self)

    def __neg__(self):
        return Iv(-self.hi, -self.lo)

    def __mul__(self, other):  # type: ignore[override]
        o = as_iv(other)
        cands = (_mul(self.lo, o.lo), _mul(self.lo, o.hi),
                 _mul(self.hi, o.lo), _mul(self.hi, o.hi))
        return Iv(min(cands), max(cands))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * as_iv(other).recip()

    def recip(self) -> "Iv":
        if self.lo < 0.0 < self.hi:
            return Iv(-INF, INF)
        if self.hi <= 0.0:
            return Iv(_div(1.0, self.lo), _div(1.0, self.hi))
        return Iv(_div(1.0, self.hi), _div(1.0, self.lo))

    def pos(self) -> "Iv":
        return Iv(max(self.lo, 0.0), max(self.hi, 0.0))

    def clamp01(self) -> "Iv":
        return Iv(min(max(self.lo, 0.0), 1.0), min(max(self.hi, 0.0), 1.0))

    def contains(self, x: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= x <= self.hi + slack

    def __repr__(self) -> str:
        return f"[{self.lo:.12g}, {self.hi:.12g}]"


def as_iv(x) -> Iv:
    if isinstance(x, Iv):
        return x
    return Iv(float(x), float(x))


def exact(x: float) -> Iv:
    return Iv(float(x), float(x))


ZERO = Iv(0.0, 0.0)
ONE = Iv(1.0, 1.0)
UNKNOWN_POS = Iv(0.0, INF)


def _mul(a: float, b: float) -> float:
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


def _div(a: float, b: float) -> float:
    if b == 0.0:
        if a == 0.0:
            return 0.0
        return INF if a > 0.0 else -INF
    if math.isinf(b):
        return 0.0 if not math.isinf(a) else (INF if (a > 0) == (b > 0) else -INF)
    return a / b


def iv_sum(items) -> Iv:
    lo = hi = 0.0
    for it in items:
        iv = as_iv(it)
        lo += iv.lo
        hi += iv.hi
    return Iv(lo, hi)


def iv_min(a: Iv, b: Iv) -> Iv:
    return Iv(min(a.lo, b.lo), min(a.hi, b.hi))
