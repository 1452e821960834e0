"""Two-qudit state algebra and measurement probabilities.

The entanglement-based protocol lives on a d x d bipartite space.  The
source ideally emits the maximally entangled state; channel noise is
modeled by mixing in white noise (an isotropic state with visibility v).
Alice's filter settings are the complex conjugates of the listed basis
vectors, which makes her outcomes correlate with Bob's in every basis of
a complete unbiased set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bases import Ket, MubSet
from .errors import DimensionError

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """A validated density matrix on a composite space of dimension dim**2."""

    matrix: np.ndarray
    dim: int

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        n = self.dim * self.dim
        if m.shape != (n, n):
            raise DimensionError(
                f"density matrix shape {m.shape} does not match local dimension "
                f"{self.dim} (expected {(n, n)})"
            )
        if np.max(np.abs(m - m.conj().T)) > HERMITICITY_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace is {tr!r}, not 1")
        lo = float(np.linalg.eigvalsh(m)[0])
        if lo < -POSITIVITY_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {lo:.3e}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True, eq=False)
class JointProbMatrix:
    """Joint outcome probabilities indexed by (basis_a, elem_a, basis_b, elem_b).

    ``block_available[i, j]`` is False when block (i, j) could not be
    normalized from data (zero total); analytic constructions leave every
    block available.
    """

    dim: int
    probs: np.ndarray
    block_available: np.ndarray

    def __post_init__(self):
        n_b = self.dim + 1
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (n_b, self.dim, n_b, self.dim):
            raise DimensionError(
                f"probability array shape {p.shape} does not match dimension {self.dim}"
            )
        avail = np.asarray(self.block_available, dtype=bool)
        if avail.shape != (n_b, n_b):
            raise DimensionError("block availability mask has wrong shape")
        if np.min(p) < -1e-15:
            raise ValueError(f"negative probability {np.min(p):.3e}")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        avail.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "block_available", avail)

    def block(self, basis_a: int, basis_b: int) -> np.ndarray:
        return self.probs[basis_a, :, basis_b, :]


def maximally_entangled(d: int) -> DensityOperator:
    """|Psi><Psi| with |Psi> = (1/sqrt(d)) sum_i |i>|i>."""
    if d < 2:
        raise DimensionError(f"dimension must be at least 2, got {d}")
    psi = np.zeros(d * d, dtype=np.complex128)
    psi[:: d + 1] = 1.0 / np.sqrt(d)
    return DensityOperator(np.outer(psi, psi.conj()), dim=d)


def isotropic_state(d: int, v: float) -> DensityOperator:
    """Mix the maximally entangled state with white noise at visibility v."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {v}")
    ent = maximally_entangled(d).matrix
    noise = np.eye(d * d, dtype=np.complex128) / (d * d)
    return DensityOperator(v * ent + (1.0 - v) * noise, dim=d)


def conjugate_ket(k: Ket) -> Ket:
    """Entrywise complex conjugate; Alice's physical filter for a listed vector."""
    return Ket(np.conj(k.amplitudes))


def joint_prob(rho: DensityOperator, a: Ket, b: Ket) -> float:
    """Probability that local filters a and b both pass: tr[(P_a x P_b) rho]."""
    if a.dim * b.dim != rho.dim * rho.dim:
        raise DimensionError(
            f"filters of dimension {a.dim} x {b.dim} do not fit a state on "
            f"{rho.dim}^2 dimensions"
        )
    ab = np.kron(a.amplitudes, b.amplitudes)
    val = np.vdot(ab, rho.matrix @ ab).real
    return float(max(val, 0.0))


def joint_prob_matrix(rho: DensityOperator, mubs: MubSet) -> JointProbMatrix:
    """All joint probabilities with Alice conjugated, over every setting pair."""
    if mubs.dim != rho.dim:
        raise DimensionError(
            f"basis set dimension {mubs.dim} does not match state dimension {rho.dim}"
        )
    d = mubs.dim
    n_b = d + 1
    probs = np.empty((n_b, d, n_b, d), dtype=np.float64)
    conj_filters = [
        [conjugate_ket(mubs.ket(i, k)) for k in range(d)] for i in range(n_b)
    ]
    for i in range(n_b):
        for k in range(d):
            for j in range(n_b):
                for m in range(d):
                    probs[i, k, j, m] = joint_prob(rho, conj_filters[i][k], mubs.ket(j, m))
    return JointProbMatrix(
        dim=d, probs=probs, block_available=np.ones((n_b, n_b), dtype=bool)
    )


def pm_overlap_prob(prep: Ket, filt: Ket) -> float:
    """Detection probability |<filter|prep>|^2 in the prepare-and-measure picture."""
    return float(abs(filt.overlap(prep)) ** 2)


def partial_trace(rho: DensityOperator, keep: int) -> np.ndarray:
    """Reduced state of one side: keep=0 for the first qudit, 1 for the second."""
    if keep not in (0, 1):
        raise ValueError(f"keep must be 0 or 1, got {keep}")
    d = rho.dim
    m = rho.matrix.reshape(d, d, d, d)
    if keep == 0:
        return np.einsum("ikjk->ij", m)
    return np.einsum("kikj->ij", m)


def visibility_for_qber(d: int, q: float) -> float:
    """Visibility whose isotropic state shows average error rate q.

    Inverts q = (1 - v)(d - 1)/d; q must not exceed the fully mixed
    ceiling (d - 1)/d.
    """
    if d < 2:
        raise DimensionError(f"dimension must be at least 2, got {d}")
    ceiling = (d - 1) / d
    if not 0.0 <= q <= ceiling:
        raise ValueError(f"error rate {q} outside [0, {ceiling:.6f}] for d={d}")
    return 1.0 - q * d / (d - 1)
