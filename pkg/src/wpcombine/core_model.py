"""Input representation, inverse-weight normalization, the log statistic and H.

Everything downstream works with ``t = -ln(tau)`` rather than ``tau`` itself,
so products of many tiny P-values never have to be representable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

__all__ = [
    "DomainError",
    "WeightedPValues",
    "NormalizedInverseWeights",
    "LogTau",
    "normalize_inverse_weights",
    "compute_t",
    "compute_raw_t",
    "h_function",
    "log_h_function",
    "LOG_SPACE_THRESHOLD",
    "TAU_MATERIALIZE_LIMIT",
]

# H switches from direct accumulation to peak-anchored log-space accumulation
# above this argument; x**k/k! still fits comfortably in a double below it.
LOG_SPACE_THRESHOLD = 30.0

# exp(-t) is only formed for t below this; exp(-745) is already subnormal.
TAU_MATERIALIZE_LIMIT = 700.0

# Relative size below which series terms are dropped (far under 1 ulp of the sum).
_NEGLIGIBLE = 2.0**-70


class DomainError(ValueError):
    """Raised for inputs outside the mathematical domain of an operation.

    ``index`` is the offending item position when one can be named.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class WeightedPValues:
    """P-values with positive weights.

    P-values are stored as ``log_p`` so that values below the double range
    (``p < 1e-308``) can be supplied directly.  ``p = 0`` is representable
    (``log_p = -inf``) but rejected by :func:`compute_t`.
    """

    log_p: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.log_p) == 0:
            raise DomainError("at least one P-value is required")
        if len(self.log_p) != len(self.weights):
            raise DomainError(
                f"{len(self.log_p)} P-values but {len(self.weights)} weights"
            )
        for i, lp in enumerate(self.log_p):
            if math.isnan(lp) or lp > 0.0:
                raise DomainError(f"item {i}: P-value must lie in (0, 1]", index=i)
        for i, w in enumerate(self.weights):
            if not (w > 0.0) or math.isinf(w):
                raise DomainError(
                    f"item {i}: weight must be positive and finite, got {w!r}",
                    index=i,
                )

    @classmethod
    def from_pvalues(cls, p: Iterable[float], weights: Iterable[float]) -> "WeightedPValues":
        p = [float(x) for x in p]
        for i, x in enumerate(p):
            if not (0.0 <= x <= 1.0):
                raise DomainError(f"item {i}: P-value must lie in (0, 1], got {x!r}", index=i)
        log_p = tuple(math.log(x) if x > 0.0 else -math.inf for x in p)
        return cls(log_p, tuple(float(w) for w in weights))

    @classmethod
    def from_log_pvalues(cls, log_p: Iterable[float], weights: Iterable[float]) -> "WeightedPValues":
        return cls(tuple(float(x) for x in log_p), tuple(float(w) for w in weights))

    @property
    def size(self) -> int:
        return len(self.log_p)

    @property
    def pvalues(self) -> tuple[float, ...]:
        return tuple(math.exp(lp) for lp in self.log_p)


@dataclass(frozen=True)
class NormalizedInverseWeights:
    """Inverse weights scaled so that they sum to the item count.

    ``values`` is sorted ascending; ``index[i]`` is the position in the
    original input of the item whose inverse weight is ``values[i]``.
    """

    values: tuple[float, ...]
    index: tuple[int, ...]

    def __post_init__(self):
        if len(self.values) != len(self.index):
            raise DomainError("values and index must have equal length")
        if any(not (v > 0.0) for v in self.values):
            raise DomainError("normalized inverse weights must be positive")

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "NormalizedInverseWeights":
        """Wrap already-normalized inverse weights given in input order."""
        order = sorted(range(len(values)), key=lambda i: (values[i], i))
        return cls(tuple(float(values[i]) for i in order), tuple(order))

    @property
    def size(self) -> int:
        return len(self.values)

    def in_input_order(self) -> tuple[float, ...]:
        out = [0.0] * len(self.values)
        for v, i in zip(self.values, self.index):
            out[i] = v
        return tuple(out)


@dataclass(frozen=True)
class LogTau:
    """The combined statistic kept in log space, ``t = -ln(tau) >= 0``."""

    t: float

    def __post_init__(self):
        if math.isnan(self.t) or self.t < 0.0:
            raise DomainError(f"t must be non-negative, got {self.t!r}")

    @property
    def tau(self) -> float:
        if self.t >= TAU_MATERIALIZE_LIMIT:
            raise OverflowError(f"tau = exp(-{self.t}) is not representable; use t")
        return math.exp(-self.t)


def normalize_inverse_weights(data: WeightedPValues | Sequence[float]) -> NormalizedInverseWeights:
    """Scale inverse weights ``1/w_j`` so they sum to the number of items.

    Accepts a :class:`WeightedPValues` or a plain sequence of weights.
    """
    weights = data.weights if isinstance(data, WeightedPValues) else tuple(data)
    for i, w in enumerate(weights):
        if not (w > 0.0) or math.isinf(w):
            raise DomainError(f"item {i}: weight must be positive and finite, got {w!r}", index=i)
    # Exact rationals, one final rounding per entry: w and c*w then agree
    # to within the rounding already present in the scaled inputs.
    exact = [Fraction(w) for w in weights]
    total = sum(1 / w for w in exact)
    m = len(weights)
    r = [float(m / (w * total)) for w in exact]
    return NormalizedInverseWeights.from_values(r)


def compute_t(data: WeightedPValues, r: NormalizedInverseWeights) -> LogTau:
    """``t = sum_j (-ln p_j) / r_j`` using the normalized inverse weights."""
    if r.size != data.size:
        raise DomainError("inverse weights are not aligned with the input items")
    parts = []
    for v, i in zip(r.values, r.index):
        lp = data.log_p[i]
        if math.isinf(lp):
            raise DomainError(
                f"item {i}: combined P-value is 0; supply log_p finite", index=i
            )
        parts.append(-lp / v)
    return LogTau(max(0.0, math.fsum(parts)))


def compute_raw_t(data: WeightedPValues) -> LogTau:
    """``t`` with the weights exactly as supplied (``tau_G = prod p_j**w_j``).

    Only useful for reporting the unnormalized statistic; combined P-values
    must use :func:`compute_t`.
    """
    parts = []
    for i, (lp, w) in enumerate(zip(data.log_p, data.weights)):
        if math.isinf(lp):
            raise DomainError(f"item {i}: combined P-value is 0; supply log_p finite", index=i)
        parts.append(-lp * w)
    return LogTau(max(0.0, math.fsum(parts)))


def _check_h_args(x: float, n: int) -> None:
    if math.isnan(x) or x < 0.0:
        raise DomainError(f"H needs x >= 0, got {x!r}")
    if n < 0:
        raise DomainError(f"H needs n >= 0, got {n!r}")


def _peak_series(x: float, n: int) -> tuple[float, float]:
    """Return ``(log_peak, s)`` with ``H(x, n) = exp(log_peak) * s``.

    Terms ``x**k/k!`` are generated by ratio recurrences outward from the
    largest retained term, so nothing overflows however large ``x`` is.
    """
    peak = min(n, int(x))
    log_peak = -x + peak * math.log(x) - math.lgamma(peak + 1) if peak else -x
    rel = [1.0]
    term = 1.0
    for k in range(peak, 0, -1):
        term *= k / x
        rel.append(term)
        if term < _NEGLIGIBLE:
            break
    term = 1.0
    for k in range(peak + 1, n + 1):
        term *= x / k
        rel.append(term)
        if term < _NEGLIGIBLE:
            break
    return log_peak, math.fsum(rel)


def log_h_function(x: float, n: int) -> float:
    """``ln H(x, n)``; finite for every finite ``x``, unlike ``H`` itself."""
    _check_h_args(x, n)
    if x == 0.0:
        return 0.0
    if x <= LOG_SPACE_THRESHOLD:
        return math.log(h_function(x, n))
    log_peak, s = _peak_series(x, n)
    return min(0.0, log_peak + math.log(s))


def h_function(x: float, n: int) -> float:
    """``H(x, n) = exp(-x) * sum_{k<=n} x**k / k!``, the upper tail Q(n+1, x).

    Note ``H(x, 0) = exp(-x)``, not 1.
    """
    _check_h_args(x, n)
    if x == 0.0:
        return 1.0
    if x > LOG_SPACE_THRESHOLD:
        log_peak, s = _peak_series(x, n)
        return min(1.0, math.exp(log_peak) * s)
    term = math.exp(-x)
    terms = [term]
    for k in range(1, n + 1):
        term *= x / k
        terms.append(term)
        if k > x and term < _NEGLIGIBLE * terms[0]:
            break
    # Positive terms only; the min() absorbs a final-ulp overshoot near x = 0.
    return min(1.0, math.fsum(terms))
