"""Photon-pair source and detector model at first order in the pump power.

A weakly pumped down-conversion source produces, per pump pulse, a photon
pair in the encoded subspace with probability alpha_sq * chi.  The pair
splits between the two arms with probabilities 1/2 (one photon each) and
1/4 each for both photons in the same arm.  With single-photon detector
efficiencies far below one, the measurable rates reduce to closed forms:

    singles per arm      N * eta * alpha_sq * chi / 2
    coincidences         N * eta_a * eta_b * alpha_sq * chi / 4

so the efficiency of one arm can be read off the other arm's data as
eta = 2 * coincidences / singles_partner, independent of the pump.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, CountDataError, DimensionError, ParseError

Setting = tuple[int, int]
Pairing = Callable[[Setting], Setting]

EFFICIENCY_SLACK = 1e-9
PERTURBATIVE_CEILING = 0.1


@dataclass(frozen=True)
class SourceParams:
    """Pump and pair-creation parameters of one run."""

    pulses: int
    alpha_sq: float
    chi: float

    def __post_init__(self):
        if self.pulses < 0:
            raise ConfigError(f"pulse count must be nonnegative, got {self.pulses}")
        if self.alpha_sq <= 0 or self.chi <= 0:
            raise ConfigError("alpha_sq and chi must be positive")
        if self.alpha_sq * self.chi >= PERTURBATIVE_CEILING:
            raise ConfigError(
                f"alpha_sq * chi = {self.alpha_sq * self.chi:.4f} leaves the "
                f"perturbative regime (must stay below {PERTURBATIVE_CEILING})"
            )

    @property
    def pair_prob(self) -> float:
        return self.alpha_sq * self.chi


@dataclass(frozen=True)
class PairRouting:
    """Probabilities for how a created pair splits between the arms."""

    ab: float
    aa: float
    bb: float


def pair_routing_probs() -> PairRouting:
    """The four equal-amplitude emission terms give (1/2, 1/4, 1/4)."""
    return PairRouting(ab=0.5, aa=0.25, bb=0.25)


def click_prob_n(eta1: float, n: int) -> float:
    """Click probability of a threshold detector facing n photons."""
    if not 0.0 <= eta1 <= 1.0:
        raise ValueError(f"single-photon efficiency must lie in [0, 1], got {eta1}")
    if n < 0 or n != int(n):
        raise ValueError(f"photon number must be a nonnegative integer, got {n}")
    return 1.0 - (1.0 - eta1) ** int(n)


def expected_singles(params: SourceParams, eta1: float) -> float:
    """Expected singles at one arm for a filter with efficiency eta1."""
    return params.pulses * eta1 * params.alpha_sq * params.chi / 2.0


def expected_coincidences(params: SourceParams, eta_a: float, eta_b: float) -> float:
    """Expected coincidences for a conjugate-correlated filter pair."""
    return params.pulses * eta_a * eta_b * params.alpha_sq * params.chi / 4.0


@dataclass(frozen=True, eq=False)
class EfficiencyTable:
    """Per-setting single-photon efficiencies for both arms.

    Arrays are indexed [basis, element]; NaN marks settings without data.
    """

    dim: int
    eta_a: np.ndarray
    eta_b: np.ndarray

    def __post_init__(self):
        shape = (self.dim + 1, self.dim)
        for name in ("eta_a", "eta_b"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise DimensionError(
                    f"{name} has shape {arr.shape}, expected {shape} for dim {self.dim}"
                )
            finite = arr[np.isfinite(arr)]
            if finite.size and (np.min(finite) <= 0 or np.max(finite) > 1 + EFFICIENCY_SLACK):
                raise ValueError(f"{name} holds an efficiency outside (0, 1]")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def uniform(cls, dim: int, eta: float = 1.0) -> "EfficiencyTable":
        full = np.full((dim + 1, dim), float(eta))
        return cls(dim=dim, eta_a=full, eta_b=full.copy())

    @property
    def complete(self) -> bool:
        return bool(np.all(np.isfinite(self.eta_a)) and np.all(np.isfinite(self.eta_b)))


@dataclass(frozen=True)
class CountRecord:
    """Raw tallies for one setting pair over one integration window.

    Counts are floats so that exact-expectation synthesis can round-trip;
    sampled and measured data use integral values.
    """

    basis_a: int
    elem_a: int
    basis_b: int
    elem_b: int
    singles_a: float
    singles_b: float
    coincidences: float

    def __post_init__(self):
        for name in ("singles_a", "singles_b", "coincidences"):
            if getattr(self, name) < 0:
                raise CountDataError(f"{name} is negative in record {self.setting_pair}")
        if self.coincidences > min(self.singles_a, self.singles_b) + EFFICIENCY_SLACK:
            raise CountDataError(
                f"coincidences exceed singles in record {self.setting_pair}"
            )

    @property
    def setting_pair(self) -> tuple[Setting, Setting]:
        return ((self.basis_a, self.elem_a), (self.basis_b, self.elem_b))


def identity_pairing(setting: Setting) -> Setting:
    """Default conjugate map: the listed vectors already pair like-with-like."""
    return setting


def synthesize_conjugate_records(
    params: SourceParams,
    table: EfficiencyTable,
    pairing: Pairing | None = None,
    rng: np.random.Generator | None = None,
) -> list[CountRecord]:
    """Generate one record per setting at its conjugate partner.

    Without an rng the records carry exact expectations; with one, counts
    are Poisson-sampled around them (coincidences clamped to the physical
    ceiling of the sampled singles, which never binds at realistic rates).
    """
    pairing = pairing or identity_pairing
    records = []
    for basis in range(table.dim + 1):
        for elem in range(table.dim):
            pb, pe = pairing((basis, elem))
            ea = float(table.eta_a[basis, elem])
            eb = float(table.eta_b[pb, pe])
            if not (np.isfinite(ea) and np.isfinite(eb)):
                raise CountDataError(
                    f"efficiency table is missing setting ({basis},{elem}) or partner"
                )
            mu_sa = expected_singles(params, ea)
            mu_sb = expected_singles(params, eb)
            mu_cc = expected_coincidences(params, ea, eb)
            if rng is None:
                sa, sb, cc = mu_sa, mu_sb, mu_cc
            else:
                sa = float(rng.poisson(mu_sa))
                sb = float(rng.poisson(mu_sb))
                cc = min(float(rng.poisson(mu_cc)), sa, sb)
            records.append(
                CountRecord(
                    basis_a=basis,
                    elem_a=elem,
                    basis_b=pb,
                    elem_b=pe,
                    singles_a=sa,
                    singles_b=sb,
                    coincidences=cc,
                )
            )
    return records


def estimate_efficiency(
    records: list[CountRecord],
    dim: int,
    pairing: Pairing | None = None,
) -> EfficiencyTable:
    """Recover per-setting efficiencies from conjugate-pair records.

    Uses eta_b = 2 C / singles_a and eta_a = 2 C / singles_b.  Records for
    the same setting pair are pooled by summing counts before the ratio is
    taken.  Pairs with no coincidences carry no efficiency information and
    stay missing in the table.  Raises when a record is not a conjugate
    pair under ``pairing``, when a needed singles tally is zero, when a
    ratio exceeds one, or when no pair had coincidences at all.
    """
    pairing = pairing or identity_pairing
    pooled: dict[tuple[Setting, Setting], list[float]] = {}
    for rec in records:
        sa_setting, sb_setting = rec.setting_pair
        if pairing(sa_setting) != sb_setting:
            raise CountDataError(
                f"record {rec.setting_pair} is not a conjugate-correlated pair"
            )
        acc = pooled.setdefault((sa_setting, sb_setting), [0.0, 0.0, 0.0])
        acc[0] += rec.singles_a
        acc[1] += rec.singles_b
        acc[2] += rec.coincidences

    eta_a = np.full((dim + 1, dim), np.nan)
    eta_b = np.full((dim + 1, dim), np.nan)
    for ((ba, ea_i), (bb, eb_i)), (sa, sb, cc) in pooled.items():
        if max(ba, bb) > dim or max(ea_i, eb_i) >= dim:
            raise CountDataError(
                f"record setting (({ba},{ea_i}),({bb},{eb_i})) out of range for dim {dim}"
            )
        if cc <= 0:
            continue
        if sa <= 0:
            raise CountDataError(
                f"zero singles_a for setting ({ba},{ea_i}); cannot form 2C/S_A"
            )
        if sb <= 0:
            raise CountDataError(
                f"zero singles_b for setting ({bb},{eb_i}); cannot form 2C/S_B"
            )
        est_b = 2.0 * cc / sa
        est_a = 2.0 * cc / sb
        if est_a > 1 + EFFICIENCY_SLACK or est_b > 1 + EFFICIENCY_SLACK:
            raise CountDataError(
                f"counts for pair (({ba},{ea_i}),({bb},{eb_i})) imply an efficiency "
                f"above one (eta_a={est_a:.4g}, eta_b={est_b:.4g})"
            )
        eta_a[ba, ea_i] = est_a
        eta_b[bb, eb_i] = est_b
    if np.all(np.isnan(eta_a)) and np.all(np.isnan(eta_b)):
        raise CountDataError("no setting pair had coincidences; nothing to estimate")
    return EfficiencyTable(dim=dim, eta_a=eta_a, eta_b=eta_b)


@dataclass(frozen=True)
class UniformityReport:
    """Within-basis relative spread (max - min) / mean for each arm."""

    spread_a: np.ndarray
    spread_b: np.ndarray

    def max_spread(self) -> float:
        both = np.concatenate([self.spread_a, self.spread_b])
        finite = both[np.isfinite(both)]
        return float(np.max(finite)) if finite.size else float("nan")


def efficiency_uniformity(table: EfficiencyTable) -> UniformityReport:
    """Quantify how flat the efficiencies are across each basis."""

    def spreads(eta: np.ndarray) -> np.ndarray:
        out = np.full(table.dim + 1, np.nan)
        for basis in range(table.dim + 1):
            row = eta[basis]
            if np.all(np.isfinite(row)):
                mean = float(np.mean(row))
                out[basis] = (float(np.max(row)) - float(np.min(row))) / mean
        return out

    return UniformityReport(spread_a=spreads(table.eta_a), spread_b=spreads(table.eta_b))


def save_efficiency_table(table: EfficiencyTable, path) -> None:
    """Write rows (flat basis-vector index, eta_a, eta_b) at 5 decimals."""
    lines = [f"dim {table.dim}", "index eta_a eta_b"]
    for basis in range(table.dim + 1):
        for elem in range(table.dim):
            ea = table.eta_a[basis, elem]
            eb = table.eta_b[basis, elem]
            if np.isfinite(ea) or np.isfinite(eb):
                idx = basis * table.dim + elem + 1
                ea_s = f"{ea:.5f}" if np.isfinite(ea) else "nan"
                eb_s = f"{eb:.5f}" if np.isfinite(eb) else "nan"
                lines.append(f"{idx} {ea_s} {eb_s}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_efficiency_table(path) -> EfficiencyTable:
    with open(path, encoding="utf-8") as fh:
        raw = [line.strip() for line in fh]
    lines = [(i + 1, s) for i, s in enumerate(raw) if s and not s.startswith("#")]
    if not lines or not lines[0][1].startswith("dim "):
        raise ParseError("efficiency table must start with 'dim <d>'", 1)
    try:
        dim = int(lines[0][1].split()[1])
    except (IndexError, ValueError):
        raise ParseError("bad dimension line in efficiency table", lines[0][0]) from None
    eta_a = np.full((dim + 1, dim), np.nan)
    eta_b = np.full((dim + 1, dim), np.nan)
    for lineno, text in lines[1:]:
        if text.startswith("index"):
            continue
        parts = text.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'index eta_a eta_b', got {text!r}", lineno)
        try:
            idx = int(parts[0])
            vals = [float(p) for p in parts[1:]]
        except ValueError:
            raise ParseError(f"bad efficiency row {text!r}", lineno) from None
        if not 1 <= idx <= (dim + 1) * dim:
            raise ParseError(f"vector index {idx} out of range for dim {dim}", lineno)
        basis, elem = divmod(idx - 1, dim)
        eta_a[basis, elem] = vals[0]
        eta_b[basis, elem] = vals[1]
    return EfficiencyTable(dim=dim, eta_a=eta_a, eta_b=eta_b)
