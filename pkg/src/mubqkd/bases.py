"""Construction and validation of mutually unbiased measurement bases.

A complete set for dimension d holds d+1 bases: the standard basis plus,
for prime d, the eigenbases of the unitaries X Z^l for l = 0 .. d-1, where
Z and X are the generalized phase and shift operators.  Dimension 4 is not
prime; its set is built instead from five commuting classes of two-qubit
Pauli operators whose joint eigenbases are pairwise unbiased.

Two bases {|e_i>} and {|f_j>} are mutually unbiased when every cross
overlap satisfies |<e_i|f_j>|^2 = 1/d.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import InitVar, dataclass, field

import numpy as np

from .errors import ConstructionError, DimensionError, ParseError

ORTHONORMALITY_TOL = 1e-12
UNBIASEDNESS_TOL = 1e-10
EIGENVECTOR_RESIDUAL_TOL = 1e-10

SUPPORTED_DIMENSIONS = (2, 3, 4, 5, 7)


def _as_complex_vector(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.complex128)
    if arr.ndim != 1:
        raise ValueError(f"ket amplitudes must be one-dimensional, got shape {arr.shape}")
    if arr.size < 2:
        raise DimensionError(f"ket dimension must be at least 2, got {arr.size}")
    return arr


@dataclass(frozen=True, eq=False)
class Ket:
    """A unit-norm state vector over the computational basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        arr = _as_complex_vector(self.amplitudes)
        norm = np.linalg.norm(arr)
        if abs(norm - 1.0) > ORTHONORMALITY_TOL:
            raise ValueError(f"ket is not normalized: |norm - 1| = {abs(norm - 1.0):.3e}")
        arr.setflags(write=False)
        object.__setattr__(self, "amplitudes", arr)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def overlap(self, other: "Ket") -> complex:
        """Inner product <self|other>."""
        if self.dim != other.dim:
            raise DimensionError(f"ket dimensions differ: {self.dim} vs {other.dim}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class Basis:
    """An ordered orthonormal basis of a d-dimensional space.

    ``check=False`` skips the orthonormality test so that deliberately
    broken sets can be assembled for diagnostics; every construction path
    inside the package keeps the check on.
    """

    label: str
    vectors: tuple[Ket, ...]
    check: InitVar[bool] = True

    def __post_init__(self, check: bool):
        vectors = tuple(self.vectors)
        object.__setattr__(self, "vectors", vectors)
        if not vectors:
            raise DimensionError("basis needs at least one vector")
        d = vectors[0].dim
        if any(v.dim != d for v in vectors):
            raise DimensionError(f"basis {self.label!r} mixes vector dimensions")
        if len(vectors) != d:
            raise DimensionError(
                f"basis {self.label!r} has {len(vectors)} vectors for dimension {d}"
            )
        if check:
            defect = orthonormality_defect(self)
            if defect > ORTHONORMALITY_TOL:
                raise ValueError(
                    f"basis {self.label!r} is not orthonormal: max defect {defect:.3e}"
                )

    @property
    def dim(self) -> int:
        return self.vectors[0].dim

    @property
    def matrix(self) -> np.ndarray:
        """d x d array whose column k is vector k."""
        return np.column_stack([v.amplitudes for v in self.vectors])


@dataclass(frozen=True, eq=False)
class MubSet:
    """A complete family of d+1 pairwise mutually unbiased bases."""

    dim: int
    bases: tuple[Basis, ...]
    check: InitVar[bool] = True

    def __post_init__(self, check: bool):
        bases = tuple(self.bases)
        object.__setattr__(self, "bases", bases)
        if len(bases) != self.dim + 1:
            raise DimensionError(
                f"complete set for dimension {self.dim} needs {self.dim + 1} bases, "
                f"got {len(bases)}"
            )
        if any(b.dim != self.dim for b in bases):
            raise DimensionError("basis dimension does not match set dimension")
        if check:
            report = unbiasedness_report(self)
            if report.max_unbiased_deviation > UNBIASEDNESS_TOL:
                raise ValueError(
                    "bases are not mutually unbiased: max overlap deviation "
                    f"{report.max_unbiased_deviation:.3e}"
                )

    @property
    def n_bases(self) -> int:
        return len(self.bases)

    def ket(self, basis: int, element: int) -> Ket:
        return self.bases[basis].vectors[element]


@dataclass(frozen=True)
class UnbiasednessReport:
    """Worst-case deviations of a basis family from the MUB conditions."""

    max_unbiased_deviation: float
    max_orthonormality_defect: float


def orthonormality_defect(basis: Basis) -> float:
    """Largest entrywise deviation of the Gram matrix from the identity."""
    m = basis.matrix
    gram = m.conj().T @ m
    return float(np.max(np.abs(gram - np.eye(basis.dim))))


def unbiasedness_report(mubs: MubSet) -> UnbiasednessReport:
    """Measure how far a set is from being mutually unbiased.

    Returns the maximum of | |<e|f>|^2 - 1/d | over all cross-basis vector
    pairs together with the maximum orthonormality defect of the individual
    bases.  A well-formed complete set keeps both below the module
    tolerances.
    """
    d = mubs.dim
    target = 1.0 / d
    max_dev = 0.0
    mats = [b.matrix for b in mubs.bases]
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            overlaps = np.abs(mats[i].conj().T @ mats[j]) ** 2
            max_dev = max(max_dev, float(np.max(np.abs(overlaps - target))))
    max_defect = max(orthonormality_defect(b) for b in mubs.bases)
    return UnbiasednessReport(max_dev, max_defect)


def weyl_z(d: int) -> np.ndarray:
    """Generalized phase operator: Z|i> = w^i |i> with w = exp(2 pi i / d)."""
    if d < 2:
        raise DimensionError(f"dimension must be at least 2, got {d}")
    omega = cmath.exp(2j * cmath.pi / d)
    return np.diag([omega**i for i in range(d)]).astype(np.complex128)


def weyl_x(d: int) -> np.ndarray:
    """Generalized shift operator: X|i> = |i+1 mod d>."""
    if d < 2:
        raise DimensionError(f"dimension must be at least 2, got {d}")
    x = np.zeros((d, d), dtype=np.complex128)
    for i in range(d):
        x[(i + 1) % d, i] = 1.0
    return x


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % k for k in range(2, int(math.isqrt(n)) + 1))


def eigenbasis_xzl(d: int, l: int) -> Basis:
    """Eigenbasis of X Z^l for prime d, ordered by eigenvalue phase.

    The eigenvector recursion v_{j+1} = lambda^{-1} w^{l j} v_j with
    v_0 = 1/sqrt(d) closes only when lambda^d = w^{l d(d-1)/2}; the d
    solutions enumerate the basis.  Vectors are ordered by ascending
    eigenvalue phase, and the leading amplitude 1/sqrt(d) already fixes
    each global phase real-positive.
    """
    if not _is_prime(d):
        raise DimensionError(f"eigenbasis construction requires prime dimension, got {d}")
    if not 0 <= l < d:
        raise ValueError(f"operator exponent must satisfy 0 <= l < d, got {l}")

    # Eigenvalue phases are integer multiples of pi/d; keeping the exponents
    # as integers mod 2d makes the phase-ascending order exact.
    numerators = sorted((l * (d - 1) + 2 * m) % (2 * d) for m in range(d))
    op = weyl_x(d) @ np.linalg.matrix_power(weyl_z(d), l)
    scale = 1.0 / math.sqrt(d)

    vectors = []
    for numer in numerators:
        lam = cmath.exp(1j * cmath.pi * numer / d)
        exponents = [(l * j * (j - 1) - numer * j) % (2 * d) for j in range(d)]
        amps = np.array(
            [scale * cmath.exp(1j * cmath.pi * e / d) for e in exponents],
            dtype=np.complex128,
        )
        residual = np.linalg.norm(op @ amps - lam * amps)
        if residual > EIGENVECTOR_RESIDUAL_TOL:
            raise ConstructionError(
                f"eigenvector residual {residual:.3e} for d={d}, l={l}, phase {numer}pi/{d}"
            )
        vectors.append(Ket(amps))
    return Basis(label=f"XZ^{l}", vectors=tuple(vectors))


def standard_basis(d: int) -> Basis:
    """The computational basis, which is also the eigenbasis of Z."""
    eye = np.eye(d, dtype=np.complex128)
    return Basis(label="Z", vectors=tuple(Ket(eye[:, k]) for k in range(d)))


# Dimension 4: five commuting classes of two-qubit Pauli operators.  Each
# class determines one common eigenbasis; the classes below partition all
# fifteen non-identity Pauli pairs, so the five eigenbases are pairwise
# unbiased.  The partition is validated at import of the builder, not trusted.
_TWO_QUBIT_CLASSES: tuple[tuple[str, str, str], ...] = (
    ("ZI", "IZ", "ZZ"),
    ("XI", "IX", "XX"),
    ("YI", "IY", "YY"),
    ("XY", "YZ", "ZX"),
    ("YX", "ZY", "XZ"),
)

_PAULI_1Q = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


def _two_qubit_pauli(label: str) -> np.ndarray:
    return np.kron(_PAULI_1Q[label[0]], _PAULI_1Q[label[1]])


def _check_pauli_classes() -> None:
    labels = [lab for cls in _TWO_QUBIT_CLASSES for lab in cls]
    expected = {a + b for a in "IXYZ" for b in "IXYZ"} - {"II"}
    if len(labels) != 15 or set(labels) != expected:
        raise ConstructionError("two-qubit Pauli classes do not partition the 15 operators")
    for cls in _TWO_QUBIT_CLASSES:
        ops = [_two_qubit_pauli(lab) for lab in cls]
        for i in range(3):
            for j in range(i + 1, 3):
                comm = ops[i] @ ops[j] - ops[j] @ ops[i]
                if np.max(np.abs(comm)) > ORTHONORMALITY_TOL:
                    raise ConstructionError(
                        f"operators {cls[i]} and {cls[j]} do not commute"
                    )


def _fix_global_phase(amps: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Rotate so the first amplitude of modulus > tol is real-positive."""
    idx = np.flatnonzero(np.abs(amps) > tol)
    if idx.size == 0:
        raise ConstructionError("cannot fix the phase of a null vector")
    lead = amps[idx[0]]
    return amps * (abs(lead) / lead)


def _class_eigenbasis(cls: tuple[str, str, str]) -> Basis:
    """Common eigenbasis of one commuting Pauli class via joint projectors."""
    g1 = _two_qubit_pauli(cls[0])
    g2 = _two_qubit_pauli(cls[1])
    g3 = _two_qubit_pauli(cls[2])
    eye = np.eye(4, dtype=np.complex128)

    # Within a commuting class g1 g2 = c g3 with c = +/-1; the joint
    # eigenvector at signs (s1, s2) therefore carries eigenvalue c s1 s2
    # on the third member.
    prod = g1 @ g2
    idx = np.unravel_index(int(np.argmax(np.abs(g3))), g3.shape)
    c = complex(prod[idx] / g3[idx])
    if abs(c.imag) > ORTHONORMALITY_TOL or abs(abs(c.real) - 1.0) > ORTHONORMALITY_TOL:
        raise ConstructionError(f"class {cls} is not closed under multiplication")
    if np.max(np.abs(prod - c.real * g3)) > ORTHONORMALITY_TOL:
        raise ConstructionError(f"class {cls} is not closed under multiplication")

    vectors = []
    for s1, s2 in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        proj = (eye + s1 * g1) @ (eye + s2 * g2) / 4.0
        diag = proj.diagonal().real
        pivot = int(np.argmax(diag))
        if diag[pivot] <= EIGENVECTOR_RESIDUAL_TOL:
            raise ConstructionError(f"joint projector for {cls} at signs ({s1},{s2}) is null")
        amps = _fix_global_phase(proj[:, pivot] / math.sqrt(diag[pivot]))
        checks = ((cls[0], g1, s1), (cls[1], g2, s2), (cls[2], g3, c.real * s1 * s2))
        for lab, op, sign in checks:
            residual = np.linalg.norm(op @ amps - sign * amps)
            if residual > EIGENVECTOR_RESIDUAL_TOL:
                raise ConstructionError(
                    f"vector for {cls} signs ({s1},{s2}) fails eigen check on {lab}: "
                    f"residual {residual:.3e}"
                )
        vectors.append(Ket(amps))
    return Basis(label=f"{cls[0]},{cls[1]}", vectors=tuple(vectors))


def mub_set(d: int) -> MubSet:
    """Build the complete set of d+1 mutually unbiased bases.

    Prime dimensions use the standard basis plus the eigenbases of X Z^l;
    dimension 4 uses the five two-qubit Pauli classes.  Other dimensions
    are rejected: no complete construction is wired up for them.
    """
    if d not in SUPPORTED_DIMENSIONS:
        raise DimensionError(
            f"unsupported dimension {d}; supported dimensions are {SUPPORTED_DIMENSIONS}"
        )
    if d == 4:
        _check_pauli_classes()
        bases = [_class_eigenbasis(cls) for cls in _TWO_QUBIT_CLASSES]
    else:
        bases = [standard_basis(d)]
        bases.extend(eigenbasis_xzl(d, l) for l in range(d))
    try:
        return MubSet(dim=d, bases=tuple(bases))
    except ValueError as exc:
        raise ConstructionError(f"built bases for d={d} failed validation: {exc}") from exc


# Text serialization: a "dim" line, then one record per basis holding its
# label and d rows of d "re,im" amplitude pairs at 17 significant digits.

def _format_amplitude(z: complex) -> str:
    return f"{z.real:.17g},{z.imag:.17g}"


def save_bases(mubs: MubSet, path) -> None:
    lines = [f"dim {mubs.dim}"]
    for basis in mubs.bases:
        lines.append(f"basis {basis.label}")
        for vec in basis.vectors:
            lines.append(" ".join(_format_amplitude(z) for z in vec.amplitudes))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_bases(path) -> MubSet:
    """Parse a basis file and validate the result as a complete set."""
    with open(path, encoding="utf-8") as fh:
        raw = fh.read().splitlines()

    lineno = 0

    def next_line() -> tuple[int, str]:
        nonlocal lineno
        while lineno < len(raw):
            lineno += 1
            text = raw[lineno - 1].strip()
            if text:
                return lineno, text
        raise ParseError("unexpected end of basis file", lineno)

    n, text = next_line()
    parts = text.split()
    if len(parts) != 2 or parts[0] != "dim":
        raise ParseError(f"expected 'dim <d>', got {text!r}", n)
    try:
        d = int(parts[1])
    except ValueError:
        raise ParseError(f"bad dimension {parts[1]!r}", n) from None

    bases = []
    for _ in range(d + 1):
        n, text = next_line()
        if not text.startswith("basis "):
            raise ParseError(f"expected 'basis <label>', got {text!r}", n)
        label = text[len("basis "):].strip()
        vectors = []
        for _ in range(d):
            n, text = next_line()
            tokens = text.split()
            if len(tokens) != d:
                raise ParseError(f"expected {d} amplitudes, got {len(tokens)}", n)
            amps = []
            for tok in tokens:
                try:
                    re_s, im_s = tok.split(",")
                    amps.append(complex(float(re_s), float(im_s)))
                except ValueError:
                    raise ParseError(f"bad amplitude token {tok!r}", n) from None
            vectors.append(Ket(np.array(amps)))
        bases.append(Basis(label=label, vectors=tuple(vectors)))

    if lineno < len(raw) and any(s.strip() for s in raw[lineno:]):
        raise ParseError("trailing content after final basis", lineno + 1)
    return MubSet(dim=d, bases=tuple(bases))
