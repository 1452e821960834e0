"""Error rates, entropies, and the asymptotic secret-key rate.

The protocol's error rate Q averages, over all d+1 bases, the probability
that both filters pass for different elements of the same basis.  Against
coherent attacks the asymptotic rate with one-way post-processing is

    r(d, Q) = log2(d) + (d+1)/d * Q * log2(Q / (d (d-1)))
              + (1 - (d+1)/d * Q) * log2(1 - (d+1)/d * Q)

which decreases from log2(d) at Q = 0 and crosses zero exactly once on
(0, d/(d+1)); the crossing is the tolerable error-rate ceiling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Hashable, Sequence

import numpy as np

from .bases import Basis, MubSet
from .counts import CountMatrix
from .errors import CountDataError, DimensionError, NumericError
from .states import DensityOperator, conjugate_ket, joint_prob

PROBABILITY_TOL = 1e-12
DEFAULT_ROOT_TOL = 1e-10
_CROSSING_SCAN_POINTS = 512


@dataclass(frozen=True, eq=False)
class Distribution:
    """A finite probability distribution with hashable outcome labels."""

    labels: tuple
    probs: np.ndarray

    def __post_init__(self):
        labels = tuple(self.labels)
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or len(labels) != p.size:
            raise DimensionError(
                f"{len(labels)} labels for {p.size} probabilities"
            )
        if p.size == 0:
            raise ValueError("distribution needs at least one outcome")
        if np.min(p) < -PROBABILITY_TOL:
            raise ValueError(f"negative probability {np.min(p):.3e}")
        total = float(np.sum(p))
        if abs(total - 1.0) > PROBABILITY_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        p = np.clip(p, 0.0, None) / total
        p.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "probs", p)

    def marginal(self, index: int) -> "Distribution":
        """Marginal over one component of tuple-valued labels."""
        acc: dict[Hashable, float] = {}
        for label, p in zip(self.labels, self.probs):
            key = label[index]
            acc[key] = acc.get(key, 0.0) + float(p)
        keys = sorted(acc, key=repr)
        return Distribution(tuple(keys), np.array([acc[k] for k in keys]))

    def pushforward(self, mapping: Callable) -> "Distribution":
        acc: dict[Hashable, float] = {}
        for label, p in zip(self.labels, self.probs):
            key = mapping(label)
            acc[key] = acc.get(key, 0.0) + float(p)
        keys = sorted(acc, key=repr)
        return Distribution(tuple(keys), np.array([acc[k] for k in keys]))


def shannon_entropy(dist: Distribution) -> float:
    """Entropy in bits; zero-probability outcomes contribute nothing."""
    p = dist.probs[dist.probs > 0]
    return float(-np.sum(p * np.log2(p)))


def _require_pairs(joint: Distribution) -> None:
    if any(not isinstance(lab, tuple) or len(lab) != 2 for lab in joint.labels):
        raise ValueError("joint distribution labels must be (a, b) pairs")


def mutual_information(joint: Distribution) -> float:
    """I(A:B) = H(A) + H(B) - H(A,B) of a pair-labeled distribution."""
    _require_pairs(joint)
    h_a = shannon_entropy(joint.marginal(0))
    h_b = shannon_entropy(joint.marginal(1))
    return h_a + h_b - shannon_entropy(joint)


def keymap_information(
    joint: Distribution,
    keymap_a: Callable | None = None,
    keymap_b: Callable | None = None,
) -> float:
    """Mutual information after each party coarse-grains outcomes to symbols."""
    _require_pairs(joint)
    map_a = keymap_a or (lambda a: a)
    map_b = keymap_b or (lambda b: b)
    pushed = joint.pushforward(lambda lab: (map_a(lab[0]), map_b(lab[1])))
    return mutual_information(pushed)


def isotropic_joint_distribution(d: int, q: float) -> Distribution:
    """Same-basis outcome pairs under isotropic noise with error rate q.

    Diagonal cells carry (1 - q)/d each, off-diagonal cells q/(d (d-1));
    this is the distribution every basis of a complete unbiased set sees.
    """
    if d < 2:
        raise DimensionError(f"dimension must be at least 2, got {d}")
    ceiling = (d - 1) / d
    if not 0.0 <= q <= ceiling:
        raise ValueError(f"error rate {q} outside [0, {ceiling:.6f}] for d={d}")
    labels = []
    probs = []
    for a in range(d):
        for b in range(d):
            labels.append((a, b))
            probs.append((1.0 - q) / d if a == b else q / (d * (d - 1)))
    return Distribution(tuple(labels), np.array(probs))


def qber_per_basis(rho: DensityOperator, basis: Basis) -> float:
    """Error probability in one basis: both filters pass, elements differ."""
    total = 0.0
    for k, vec in enumerate(basis.vectors):
        filt = conjugate_ket(vec)
        for m, other in enumerate(basis.vectors):
            if m != k:
                total += joint_prob(rho, filt, other)
    return total


def average_qber(rho: DensityOperator, mubs: MubSet) -> float:
    """Protocol-wide error rate: mean of the per-basis rates over all d+1 bases."""
    rates = [qber_per_basis(rho, basis) for basis in mubs.bases]
    return float(np.mean(rates))


def empirical_qber(counts: CountMatrix) -> tuple[list[float | None], float]:
    """Per-basis and average error rates from same-basis coincidence blocks.

    A basis without any same-basis coincidences yields None and is left out
    of the average (with a warning) rather than counted as zero.
    """
    per_basis: list[float | None] = []
    for basis in range(counts.n_bases):
        block = counts.coincidence_block(basis, basis)
        total = float(np.sum(block))
        if total <= 0.0:
            per_basis.append(None)
            continue
        errors = total - float(np.trace(block))
        per_basis.append(errors / total)
    available = [q for q in per_basis if q is not None]
    if not available:
        raise CountDataError("no same-basis coincidences in any basis")
    if len(available) < counts.n_bases:
        missing = [i for i, q in enumerate(per_basis) if q is None]
        warnings.warn(
            f"bases {missing} have no same-basis coincidences; "
            "their error rates are unavailable and excluded from the average",
            stacklevel=2,
        )
    return per_basis, float(np.mean(available))


def key_rate(d: int, q: float) -> float:
    """Asymptotic secret fraction of the d-dimensional protocol at error rate q."""
    if d < 2:
        raise DimensionError(f"dimension must be at least 2, got {d}")
    if q < 0:
        raise ValueError(f"error rate must be nonnegative, got {q}")
    t = (d + 1) / d * q
    if t >= 1.0:
        raise ValueError(
            f"error rate {q} is out of range for d={d}: (d+1) q / d must stay below 1"
        )
    rate = math.log2(d)
    if q > 0.0:
        ratio = q / (d * (d - 1))
        if ratio > 0.0:
            rate += t * math.log2(ratio)
        else:
            # subnormal q: the quotient underflows to zero, so take the
            # logs separately (the term itself is ~t*1075, i.e. negligible)
            rate += t * (math.log2(q) - math.log2(d * (d - 1)))
    if t < 1.0 and t > 0.0:
        rate += (1.0 - t) * math.log2(1.0 - t)
    return rate


def q_max(d: int, tol: float = DEFAULT_ROOT_TOL) -> float:
    """Tolerable error-rate ceiling: the root of key_rate(d, .) on (0, d/(d+1)).

    The bracket is scanned first to confirm a single sign change, then
    bisected until |key_rate| < tol.
    """
    if d < 2:
        raise DimensionError(f"dimension must be at least 2, got {d}")
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    hi_edge = d / (d + 1)
    lo, hi = 0.0, hi_edge * (1.0 - 1e-12)
    grid = np.linspace(lo, hi, _CROSSING_SCAN_POINTS)
    values = [key_rate(d, q) for q in grid]
    crossings = [
        i for i in range(len(values) - 1) if (values[i] > 0) != (values[i + 1] > 0)
    ]
    if len(crossings) != 1:
        raise NumericError(
            f"expected exactly one zero crossing of the key rate for d={d}, "
            f"found {len(crossings)}"
        )
    lo, hi = float(grid[crossings[0]]), float(grid[crossings[0]] + grid[1] - grid[0])
    f_lo = key_rate(d, lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = key_rate(d, mid)
        if abs(f_mid) < tol:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    raise NumericError(f"bisection for d={d} did not reach |rate| < {tol}")


def holevo_gap(i_ab: float, r_min: float) -> float:
    """Information ceded to the eavesdropper: I(A:B) minus the key rate.

    A negative value signals inconsistent inputs and is returned as-is so
    reports can flag it; it is never clipped to zero.
    """
    return i_ab - r_min


def joint_distribution_from_counts(counts: CountMatrix) -> Distribution:
    """Outcome-pair distribution pooled over all same-basis coincidences."""
    d = counts.dim
    pooled = np.zeros((d, d))
    for basis in range(counts.n_bases):
        pooled += counts.coincidence_block(basis, basis)
    total = float(np.sum(pooled))
    if total <= 0.0:
        raise CountDataError("no same-basis coincidences to build a joint distribution")
    labels = tuple((a, b) for a in range(d) for b in range(d))
    return Distribution(labels, pooled.reshape(-1) / total)


@dataclass(frozen=True)
class SecurityReport:
    """Everything the analysis stage derives from one counts matrix."""

    dim: int
    qber_by_basis: tuple
    qber: float
    rate: float
    qber_ceiling: float
    h_a: float
    h_b: float
    h_ab: float
    i_ab: float
    gap: float

    @property
    def gap_suspect(self) -> bool:
        return self.gap < 0.0

    def to_text(self) -> str:
        by_basis = ", ".join(
            f"{i}: {'n/a' if q is None else format(q, '.6f')}"
            for i, q in enumerate(self.qber_by_basis)
        )
        lines = [
            f"dimension            {self.dim}",
            f"average error rate   {self.qber:.6f}",
            f"error rate by basis  {by_basis}",
            f"error-rate ceiling   {self.qber_ceiling:.6f}",
            f"key rate             {self.rate:.6f} bits/symbol",
            f"H(A), H(B), H(A,B)   {self.h_a:.6f}, {self.h_b:.6f}, {self.h_ab:.6f}",
            f"mutual information   {self.i_ab:.6f} bits",
            f"eavesdropper bound   {self.gap:.6f} bits",
        ]
        if self.gap_suspect:
            lines.append(
                "warning: negative eavesdropper bound; inputs are inconsistent"
            )
        if self.rate <= 0:
            lines.append("warning: key rate is not positive at this error rate")
        return "\n".join(lines) + "\n"


REPORT_CSV_HEADER = "d,Q,Q_max,r_min,I_AB,holevo_gap"


def report_csv_rows(reports: Sequence[SecurityReport]) -> str:
    lines = [REPORT_CSV_HEADER]
    for rep in reports:
        lines.append(
            f"{rep.dim},{rep.qber:.10g},{rep.qber_ceiling:.10g},"
            f"{rep.rate:.10g},{rep.i_ab:.10g},{rep.gap:.10g}"
        )
    return "\n".join(lines) + "\n"


def analyze_counts(counts: CountMatrix, tol: float = DEFAULT_ROOT_TOL) -> SecurityReport:
    """Run the full post-processing chain on one counts matrix."""
    per_basis, q_avg = empirical_qber(counts)
    joint = joint_distribution_from_counts(counts)
    h_a = shannon_entropy(joint.marginal(0))
    h_b = shannon_entropy(joint.marginal(1))
    h_ab = shannon_entropy(joint)
    i_ab = h_a + h_b - h_ab
    rate = key_rate(counts.dim, q_avg)
    ceiling = q_max(counts.dim, tol)
    return SecurityReport(
        dim=counts.dim,
        qber_by_basis=tuple(per_basis),
        qber=q_avg,
        rate=rate,
        qber_ceiling=ceiling,
        h_a=h_a,
        h_b=h_b,
        h_ab=h_ab,
        i_ab=i_ab,
        gap=holevo_gap(i_ab, rate),
    )
