"""Composite Hilbert-space layout, operator embedding and state builders.

The simulation space is an ordered tensor product of a two-level qubit,
a truncated cavity mode and up to three truncated collective atomic
modes.  Collective operators are bosonic after the large-N replacement
of the ground-state mode by sqrt(N), so every atomic subsystem is a
small Fock ladder.  All matrices are dense complex numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionError, LayoutError, StateError

QUBIT = "qubit"
CAVITY = "cavity"
MODE_I = "mode_i"
MODE_R = "mode_r"
MODE_S = "mode_s"

#: Canonical subsystem ordering used when a layout contains these labels.
KNOWN_LABELS = (QUBIT, CAVITY, MODE_I, MODE_R, MODE_S)

HERMITICITY_TOL = 1e-12
DENSITY_HERM_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = -1e-7
THERMAL_TAIL_TOL = 1e-6


@dataclass(frozen=True)
class SpaceLayout:
    """Ordered list of (label, dimension) pairs defining the product space.

    Parameters
    ----------
    subsystems
        Sequence of ``(label, dim)`` pairs.  Labels must be unique, the
        qubit must have dimension 2 and bosonic modes dimension >= 2.
    """

    subsystems: tuple[tuple[str, int], ...]

    def __init__(self, subsystems: Iterable[tuple[str, int]]):
        object.__setattr__(self, "subsystems", tuple((str(l), int(d)) for l, d in subsystems))
        labels = [l for l, _ in self.subsystems]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate subsystem labels in {labels}")
        for label, dim in self.subsystems:
            if label == QUBIT and dim != 2:
                raise LayoutError(f"qubit dimension must be 2, got {dim}")
            if dim < 2:
                raise LayoutError(f"subsystem {label!r} needs dim >= 2, got {dim}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(l for l, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.subsystems)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def has(self, label: str) -> bool:
        return label in self.labels

    def axis(self, label: str) -> int:
        """Position of ``label`` in the tensor ordering."""
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"layout has no subsystem {label!r}; labels are {self.labels}")

    def dim(self, label: str) -> int:
        return self.dims[self.axis(label)]

    def describe(self) -> str:
        return " x ".join(f"{l}({d})" for l, d in self.subsystems)


def default_layout(cavity_dim: int = 6, mode_dim: int = 4) -> SpaceLayout:
    """Full five-subsystem layout used by the ladder transfer model."""
    return SpaceLayout([
        (QUBIT, 2),
        (CAVITY, cavity_dim),
        (MODE_I, mode_dim),
        (MODE_R, mode_dim),
        (MODE_S, mode_dim),
    ])


@dataclass(frozen=True)
class Operator:
    """Dense operator tied to a :class:`SpaceLayout`."""

    matrix: np.ndarray
    layout: SpaceLayout
    name: str = ""

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=complex)
        d = self.layout.total_dim
        if m.shape != (d, d):
            raise DimensionError(
                f"operator {self.name or '?'} has shape {m.shape}, layout needs ({d}, {d})")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def require_hermitian(self, tol: float = HERMITICITY_TOL) -> "Operator":
        """Raise unless the matrix is Hermitian within relative Frobenius ``tol``."""
        m = self.matrix
        scale = np.linalg.norm(m)
        defect = np.linalg.norm(m - m.conj().T)
        if scale > 0 and defect > tol * scale:
            raise StateError(
                f"operator {self.name or '?'} not Hermitian: defect {defect / scale:.3e}")
        return self

    def dagger(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.layout, name=self.name + "^dag")

    def __matmul__(self, other: "Operator") -> "Operator":
        if other.layout != self.layout:
            raise LayoutError("operator layouts differ")
        return Operator(self.matrix @ other.matrix, self.layout)


@dataclass(frozen=True)
class DensityMatrix:
    """State of the composite system with physicality checks."""

    matrix: np.ndarray
    layout: SpaceLayout

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=complex)
        d = self.layout.total_dim
        if m.shape != (d, d):
            raise DimensionError(f"density matrix shape {m.shape} does not match dim {d}")
        object.__setattr__(self, "matrix", m)

    def validate(self, herm_tol: float = DENSITY_HERM_TOL,
                 trace_tol: float = TRACE_TOL,
                 eig_floor: float = POSITIVITY_TOL) -> "DensityMatrix":
        m = self.matrix
        herm = np.linalg.norm(m - m.conj().T) / max(np.linalg.norm(m), 1e-300)
        if herm > herm_tol:
            raise StateError(f"density matrix hermiticity defect {herm:.3e} > {herm_tol:.1e}")
        tr = np.trace(m).real
        if abs(tr - 1.0) > trace_tol:
            raise StateError(f"density matrix trace {tr!r} deviates from 1 by {abs(tr-1):.3e}")
        lo = float(np.linalg.eigvalsh((m + m.conj().T) / 2).min())
        if lo < eig_floor:
            raise StateError(f"density matrix minimum eigenvalue {lo:.3e} < {eig_floor:.1e}")
        return self

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    @property
    def purity(self) -> float:
        # tr(rho^2) equals the squared Frobenius norm for Hermitian rho
        return float(np.vdot(self.matrix, self.matrix).real)

    def expectation(self, op: Operator | np.ndarray) -> float:
        m = op.matrix if isinstance(op, Operator) else op
        return float(np.trace(m @ self.matrix).real)


def annihilation(dim: int) -> np.ndarray:
    """Bosonic lowering operator on a ``dim``-level Fock ladder.

    Matrix elements ``a[n-1, n] = sqrt(n)``.  Requires ``dim >= 2``.
    """
    if dim < 2:
        raise DimensionError(f"annihilation needs dim >= 2, got {dim}")
    a = np.zeros((dim, dim), dtype=complex)
    ns = np.arange(1, dim)
    a[ns - 1, ns] = np.sqrt(ns)
    return a


def number_op(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def qubit_sigma_minus() -> np.ndarray:
    """Qubit lowering operator |0><1| in the (|0>, |1>) basis."""
    s = np.zeros((2, 2), dtype=complex)
    s[0, 1] = 1.0
    return s


def qubit_sigma_z() -> np.ndarray:
    """Pauli z with diag(-1, +1) so that |1> is the excited state."""
    return np.diag([-1.0, 1.0]).astype(complex)


def embed(local: np.ndarray, label: str, layout: SpaceLayout) -> np.ndarray:
    """Lift a single-subsystem operator to the full product space.

    The identity acts on every other factor; ordering follows the layout.
    """
    axis = layout.axis(label)
    dims = layout.dims
    if local.shape != (dims[axis], dims[axis]):
        raise DimensionError(
            f"local operator shape {local.shape} mismatches {label!r} dim {dims[axis]}")
    before = int(np.prod(dims[:axis], initial=1))
    after = int(np.prod(dims[axis + 1:], initial=1))
    out = np.kron(np.kron(np.eye(before), local), np.eye(after))
    return np.ascontiguousarray(out, dtype=complex)


def embedded(local: np.ndarray, label: str, layout: SpaceLayout, name: str = "") -> Operator:
    return Operator(embed(local, label, layout), layout, name=name or label)


def basis_ket(layout: SpaceLayout, occupations: Mapping[str, int] | None = None) -> np.ndarray:
    """Product Fock/qubit basis vector; omitted labels default to 0."""
    occ = dict(occupations or {})
    for label in occ:
        if not layout.has(label):
            raise LayoutError(f"occupation given for unknown subsystem {label!r}")
    index = 0
    for label, dim in layout.subsystems:
        n = int(occ.get(label, 0))
        if not 0 <= n < dim:
            raise StateError(f"occupation {n} out of range for {label!r} (dim {dim})")
        index = index * dim + n
    ket = np.zeros(layout.total_dim, dtype=complex)
    ket[index] = 1.0
    return ket


def basis_state(layout: SpaceLayout, occupations: Mapping[str, int] | None = None) -> DensityMatrix:
    """Projector onto a product basis state."""
    ket = basis_ket(layout, occupations)
    return DensityMatrix(np.outer(ket, ket.conj()), layout)


def thermal_probabilities(n_bar: float, dim: int, tail_tol: float = THERMAL_TAIL_TOL) -> np.ndarray:
    """Truncated, renormalized Bose-Einstein photon-number distribution.

    p_n is proportional to n_bar^n / (1 + n_bar)^(n+1).  The discarded
    tail (n_bar / (1 + n_bar))^dim must stay below ``tail_tol``.
    """
    if n_bar < 0:
        raise StateError(f"thermal occupation must be >= 0, got {n_bar}")
    if n_bar == 0:
        p = np.zeros(dim)
        p[0] = 1.0
        return p
    x = n_bar / (1.0 + n_bar)
    tail = x ** dim
    if tail > tail_tol:
        raise StateError(
            f"cavity truncation {dim} too small for n_bar={n_bar:g}: "
            f"discarded tail {tail:.3e} exceeds {tail_tol:.1e}")
    p = x ** np.arange(dim) / (1.0 + n_bar)
    return p / p.sum()


def thermal_cavity_state(layout: SpaceLayout, n_bar: float,
                         rest: Mapping[str, int] | None = None,
                         tail_tol: float = THERMAL_TAIL_TOL) -> DensityMatrix:
    """Thermal cavity, product basis state everywhere else.

    ``rest`` gives occupations for the non-cavity subsystems (default all
    ground/vacuum).  The result is renormalized after truncation.
    """
    rest = dict(rest or {})
    if CAVITY in rest:
        raise LayoutError("cavity occupation is set by n_bar, not by rest")
    p = thermal_probabilities(n_bar, layout.dim(CAVITY), tail_tol)
    mats = []
    for label, dim in layout.subsystems:
        if label == CAVITY:
            mats.append(np.diag(p).astype(complex))
        else:
            n = int(rest.get(label, 0))
            if not 0 <= n < dim:
                raise StateError(f"occupation {n} out of range for {label!r} (dim {dim})")
            proj = np.zeros((dim, dim), dtype=complex)
            proj[n, n] = 1.0
            mats.append(proj)
    rho = mats[0]
    for m in mats[1:]:
        rho = np.kron(rho, m)
    return DensityMatrix(rho, layout).validate()


def occupation_diagonal(layout: SpaceLayout, label: str) -> np.ndarray:
    """Diagonal of the embedded number operator as a real vector.

    Lets observables be computed as a dot product with diag(rho)
    without materializing the full embedded matrix.
    """
    axis = layout.axis(label)
    dims = layout.dims
    before = int(np.prod(dims[:axis], initial=1))
    after = int(np.prod(dims[axis + 1:], initial=1))
    values = np.arange(dims[axis], dtype=float)
    return np.tile(np.repeat(values, after), before)


def partial_trace(matrix: np.ndarray, layout: SpaceLayout, keep: Sequence[str]) -> np.ndarray:
    """Trace out all subsystems not listed in ``keep`` (order preserved)."""
    keep_axes = sorted(layout.axis(label) for label in keep)
    dims = layout.dims
    n = len(dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row, col, out_row, out_col = [], [], [], []
    cursor = 0
    for i in range(n):
        li = letters[cursor]
        cursor += 1
        row.append(li)
        if i in keep_axes:
            lj = letters[cursor]
            cursor += 1
            col.append(lj)
            out_row.append(li)
            out_col.append(lj)
        else:
            col.append(li)  # repeated letter contracts row with column
    spec = "".join(row + col) + "->" + "".join(out_row + out_col)
    reduced = np.einsum(spec, matrix.reshape(dims + dims))
    d_keep = int(np.prod([dims[i] for i in keep_axes], initial=1))
    return np.ascontiguousarray(reduced.reshape(d_keep, d_keep))


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Trace distance (1/2) * ||a - b||_1 between Hermitian matrices."""
    diff = np.asarray(a, dtype=complex) - np.asarray(b, dtype=complex)
    herm = np.linalg.norm(diff - diff.conj().T)
    if herm > 1e-8 * max(1.0, np.linalg.norm(diff)):
        raise StateError(f"trace distance needs Hermitian inputs; defect {herm:.3e}")
    return 0.5 * float(np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2)).sum())
