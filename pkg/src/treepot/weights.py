"""Strictly increasing level weights w_0 < w_1 < ... with declared tail rules.

A weight sequence is an explicit prefix plus a rule generating the rest:

* ``arithmetic``      w_{n+1} = w_n + d
* ``geometric_gap``   Δ_{n+1} = ρ Δ_n           (ρ > 0)
* ``bounded``         w_n = w_inf − c ρ^n       (0 < ρ < 1)
* ``doubling_gap``    Δ_{n+1} = 2^n Δ_n         (the special-spine fixture)
* ``custom``          user recurrence Δ_{n+1} = f(n, Δ_n); no certified tail
* ``none``            finite sequence, defined only up to the prefix end

Δ_k = w_k − w_{k−1} with the convention w_{−1} = 0, so Δ_0 = w_0.  Tail rules
expose exact gap ratios, which is what makes resistance series certifiable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import SchemaError
from .intervals import INF, Iv

_TAIL_KINDS = ("arithmetic", "geometric_gap", "bounded", "doubling_gap", "custom", "none")


@dataclass(frozen=True)
class TailRule:
    kind: str
    d: float = 0.0
    rho: float = 0.0
    w_inf: float = 0.0
    fn: Optional[Callable[[int, float], float]] = None

    def to_json(self):
        if self.kind == "none":
            return None
        out = {"type": self.kind}
        if self.kind == "arithmetic":
            out["d"] = self.d
        elif self.kind == "geometric_gap":
            out["rho"] = self.rho
        elif self.kind == "bounded":
            out["w_inf"] = self.w_inf
            out["rho"] = self.rho
        elif self.kind == "custom":
            out["note"] = "non-serializable recurrence"
        return out


@dataclass
class WeightSequence:
    prefix: tuple
    tail: TailRule
    _cache: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.prefix = tuple(float(x) for x in self.prefix)
        if not self.prefix:
            raise SchemaError("weights", "weight prefix must contain at least w_0")
        if self.prefix[0] <= 0:
            raise SchemaError("weights", "w_0 must be strictly positive", w0=self.prefix[0])
        last = 0.0
        for k, w in enumerate(self.prefix):
            if w <= last:
                raise SchemaError("weights", "weights must be strictly increasing", index=k)
            last = w
        if self.tail.kind not in _TAIL_KINDS:
            raise SchemaError("weights", f"unknown tail rule {self.tail.kind!r}")
        if self.tail.kind == "geometric_gap" and self.tail.rho <= 0:
            raise SchemaError("weights", "geometric_gap needs rho > 0", rho=self.tail.rho)
        if self.tail.kind == "bounded":
            if not (0 < self.tail.rho < 1):
                raise SchemaError("weights", "bounded tail needs 0 < rho < 1", rho=self.tail.rho)
            if self.tail.w_inf <= self.prefix[-1]:
                raise SchemaError("weights", "bounded tail needs w_inf above the prefix",
                                  w_inf=self.tail.w_inf, w_last=self.prefix[-1])
        self._cache = list(self.prefix)

    # -- evaluation ---------------------------------------------------------

    @property
    def finite(self) -> bool:
        return self.tail.kind == "none"

    @property
    def max_index(self) -> Optional[int]:
        return len(self.prefix) - 1 if self.finite else None

    def w(self, k: int) -> float:
        if k < 0:
            return 0.0
        if self.finite and k >= len(self.prefix):
            raise SchemaError("weights", "index beyond finite weight sequence", index=k)
        cache = self._cache
        while len(cache) <= k:
            n = len(cache) - 1  # extending to w_{n+1}
            wn = cache[-1]
            dn = wn - (cache[-2] if len(cache) >= 2 else 0.0)
            t = self.tail
            if t.kind == "arithmetic":
                cache.append(wn + t.d)
            elif t.kind == "geometric_gap":
                cache.append(wn + t.rho * dn)
            elif t.kind == "bounded":
                c = (t.w_inf - wn) / t.rho ** (n)
                cache.append(t.w_inf - c * t.rho ** (n + 1))
            elif t.kind == "doubling_gap":
                cache.append(wn + (2.0 ** n) * dn)
            elif t.kind == "custom":
                cache.append(wn + t.fn(n, dn))
            else:  # pragma: no cover - guarded above
                raise SchemaError("weights", "cannot extend finite weights")
            if math.isinf(cache[-1]) or math.isnan(cache[-1]):
                raise SchemaError("weights", "weight overflow", index=len(cache) - 1)
            if cache[-1] <= wn:
                raise SchemaError("weights", "tail rule produced a non-increasing weight",
                                  index=len(cache) - 1)
        return cache[k]

    def max_safe_index(self, probe_cap: int = 512) -> int:
        """Largest index with a representable weight (doubling gaps overflow)."""
        if self.finite:
            return len(self.prefix) - 1
        lo = len(self.prefix) - 1
        k = lo
        while k < probe_cap:
            try:
                self.w(k + 1)
            except SchemaError:
                return k
            k += 1
        return probe_cap

    def delta(self, k: int) -> float:
        if k < 0:
            return 0.0
        return self.w(k) - self.w(k - 1)

    def limit(self) -> float:
        """sup_n w_n; finite only for bounded tails and finite sequences."""
        if self.finite:
            return self.prefix[-1]
        if self.tail.kind == "bounded":
            return self.tail.w_inf
        return INF

    # -- certified tail structure -------------------------------------------

    def gap_ratio_sup(self, k0: int, k_probe: int = 200) -> Optional[float]:
        """Exact sup of Δ_{k+1}/Δ_k over k ≥ k0, or None when uncertifiable.

        Within the explicit prefix ratios are computed directly; beyond it the
        declared rule pins them down exactly.
        """
        m = len(self.prefix) - 1
        tail_ratio: Optional[float]
        t = self.tail
        if t.kind == "arithmetic":
            tail_ratio = 1.0  # reached once gaps equal d; transition handled below
        elif t.kind in ("geometric_gap", "bounded"):
            tail_ratio = t.rho
        elif t.kind == "doubling_gap":
            tail_ratio = INF
        elif t.kind == "none":
            tail_ratio = None
        else:  # custom: probe numerically, uncertified
            return None
        sup = 0.0
        # explicit ratios until the rule becomes stationary (arithmetic needs
        # one extra step for the first d-gap)
        upto = m + 1 if t.kind != "none" else m - 1
        for k in range(max(k0, 0), upto + 1):
            if self.finite and k + 1 > m:
                break
            sup = max(sup, self.delta(k + 1) / self.delta(k))
        if tail_ratio is not None and not self.finite:
            sup = max(sup, tail_ratio)
        return sup

    def gap_ratio_exact(self, k: int) -> Optional[float]:
        """Exact Δ_{k+1}/Δ_k as the rule states it, for k beyond the prefix.

        Subtracted deltas carry rounding noise; divergence/convergence
        classification must use the rule's own ratio (arithmetic gaps have
        ratio exactly 1).  None inside the prefix or for custom rules.
        """
        if k < len(self.prefix):
            return None
        t = self.tail
        if t.kind == "arithmetic":
            return 1.0
        if t.kind in ("geometric_gap", "bounded"):
            return t.rho
        if t.kind == "doubling_gap":
            return 2.0 ** k
        return None

    def delta_tail_sum(self, k0: int) -> Iv:
        """Certified enclosure of Σ_{k≥k0} Δ_k = lim w − w_{k0−1}."""
        lim = self.limit()
        if math.isinf(lim):
            if self._tail_divergence_certain():
                return Iv(INF, INF)
            return Iv(self.delta(k0), INF)  # custom rule: only a trivial bound
        return Iv(lim - self.w(k0 - 1), lim - self.w(k0 - 1))

    def _tail_divergence_certain(self) -> bool:
        if self.tail.kind in ("arithmetic", "doubling_gap"):
            return True
        return self.tail.kind == "geometric_gap" and self.tail.rho >= 1.0

    # -- serialization -------------------------------------------------------

    def to_json(self) -> dict:
        return {"prefix": list(self.prefix), "tail": self.tail.to_json()}

    @staticmethod
    def from_json(obj) -> "WeightSequence":
        if not isinstance(obj, dict) or "prefix" not in obj:
            raise SchemaError("weights", "weights spec must be {'prefix': [...], 'tail': {...}}")
        tail_obj = obj.get("tail")
        if tail_obj is None:
            tail = TailRule("none")
        else:
            kind = tail_obj.get("type")
            if kind == "arithmetic":
                tail = TailRule("arithmetic", d=float(tail_obj["d"]))
            elif kind == "geometric_gap":
                tail = TailRule("geometric_gap", rho=float(tail_obj["rho"]))
            elif kind == "bounded":
                tail = TailRule("bounded", w_inf=float(tail_obj["w_inf"]), rho=float(tail_obj["rho"]))
            elif kind == "doubling_gap":
                tail = TailRule("doubling_gap")
            else:
                raise SchemaError("weights", f"unknown weight tail type {kind!r}")
        return WeightSequence(tuple(obj["prefix"]), tail)


def arithmetic(prefix, d: float) -> WeightSequence:
    return WeightSequence(tuple(prefix), TailRule("arithmetic", d=d))


def geometric_gap(prefix, rho: float) -> WeightSequence:
    return WeightSequence(tuple(prefix), TailRule("geometric_gap", rho=rho))


def bounded(prefix, w_inf: float, rho: float) -> WeightSequence:
    return WeightSequence(tuple(prefix), TailRule("bounded", w_inf=w_inf, rho=rho))


def doubling_gap(prefix) -> WeightSequence:
    return WeightSequence(tuple(prefix), TailRule("doubling_gap"))


def finite_weights(values) -> WeightSequence:
    return WeightSequence(tuple(values), TailRule("none"))
