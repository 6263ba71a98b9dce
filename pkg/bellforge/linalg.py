"""
Dense complex linear algebra: labelled register layouts, operators, state vectors,
norms and the regularization of Hermitian operators into unitaries.

Operators act on whole registers or on labelled subsystems of a layout. States
are never expanded into full-space operators; local operators are contracted
into the amplitude tensor instead, which keeps the memory footprint linear in
the state dimension.
"""

import logging
import math
import string
from typing import (Iterable, Iterator, List, Sequence, Tuple, Union)

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import eigh, polar, svdvals

from .errors import InvalidOperatorError, LayoutError
from .logging import PrettyLogger

LOGGER = logging.getLogger(__name__)
PRETTY = PrettyLogger(LOGGER)

TOLERANCE = 1e-9
HERMITIAN_TOLERANCE = 1e-12
KERNEL_THRESHOLD = 1e-10


class Layout:
    """
    An ordered list of labelled subsystems and their dimensions.

    The first subsystem is the most significant one in the row-major amplitude
    order, matching numpy's kron convention.
    """

    def __init__(self, subsystems: Iterable[Tuple[str, int]]):
        self._subsystems: Tuple[Tuple[str, int], ...] = tuple(
            (str(label), int(dim)) for label, dim in subsystems
        )
        labels = [label for label, _ in self._subsystems]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"Duplicate subsystem labels in {labels}")
        for label, dim in self._subsystems:
            if dim < 1:
                raise LayoutError(f"Subsystem {label!r} has non-positive dimension {dim}")

    @classmethod
    def qubits(cls, labels: Iterable[str]) -> 'Layout':
        """
        A layout of two-dimensional subsystems.
        """
        return cls((label, 2) for label in labels)

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(label for label, _ in self._subsystems)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(dim for _, dim in self._subsystems)

    @property
    def dim(self) -> int:
        """
        Dimension of the joint space.
        """
        return int(np.prod(self.dims, dtype=np.int64)) if self._subsystems else 1

    def index(self, label: str) -> int:
        for position, (candidate, _) in enumerate(self._subsystems):
            if candidate == label:
                return position
        raise LayoutError(f"Unknown subsystem label {label!r} (known: {list(self.labels)})")

    def dim_of(self, label: str) -> int:
        return self._subsystems[self.index(label)][1]

    def select(self, labels: Iterable[str]) -> 'Layout':
        return Layout((label, self.dim_of(label)) for label in labels)

    def concat(self, other: 'Layout') -> 'Layout':
        return Layout(self._subsystems + other._subsystems)

    def __iter__(self) -> Iterator[Tuple[str, int]]:
        return iter(self._subsystems)

    def __len__(self) -> int:
        return len(self._subsystems)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Layout) and self._subsystems == other._subsystems

    def __hash__(self) -> int:
        return hash(self._subsystems)

    def __repr__(self) -> str:
        inner = ", ".join(f"{label}:{dim}" for label, dim in self._subsystems)
        return f"Layout({inner})"


class Operator:
    """
    A dense complex square matrix with advisory role flags.

    Flags are not trusted blindly: validate() checks every flagged property and
    raises InvalidOperatorError if one does not hold.
    """

    __slots__ = ("_matrix", "hermitian", "unitary", "projector")

    def __init__(
            self,
            matrix: ArrayLike,
            hermitian: bool = False,
            unitary: bool = False,
            projector: bool = False,
    ):
        array = np.array(matrix, dtype=np.complex128)
        if array.ndim != 2 or array.shape[0] != array.shape[1]:
            raise InvalidOperatorError(f"Operator must be square, got shape {array.shape}")
        array.setflags(write=False)
        self._matrix = array
        self.hermitian = hermitian or projector
        self.unitary = unitary
        self.projector = projector

    @classmethod
    def identity(cls, dim: int) -> 'Operator':
        return cls(np.eye(dim), hermitian=True, unitary=True, projector=True)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return int(self._matrix.shape[0])

    def is_hermitian(self, tol: float = HERMITIAN_TOLERANCE) -> bool:
        return bool(np.max(np.abs(self._matrix - self._matrix.conj().T), initial=0.0) <= tol)

    def is_unitary(self, tol: float = TOLERANCE) -> bool:
        product = self._matrix.conj().T @ self._matrix
        return operator_norm(Operator(product - np.eye(self.dim))) <= tol

    def is_projector(self, tol: float = TOLERANCE) -> bool:
        if not self.is_hermitian(max(tol, HERMITIAN_TOLERANCE)):
            return False
        return operator_norm(Operator(self._matrix @ self._matrix - self._matrix)) <= tol

    def validate(self) -> 'Operator':
        """
        Check every flagged property. Returns self for chaining.
        """
        if self.hermitian and not self.is_hermitian():
            raise InvalidOperatorError("Operator flagged Hermitian is not Hermitian")
        if self.unitary and not self.is_unitary():
            raise InvalidOperatorError("Operator flagged unitary is not unitary")
        if self.projector and not self.is_projector():
            raise InvalidOperatorError("Operator flagged as projector is not a projector")
        return self

    def conj(self) -> 'Operator':
        """
        Entrywise complex conjugate. Conjugation preserves every role flag.
        """
        return Operator(self._matrix.conj(), hermitian=self.hermitian,
                        unitary=self.unitary, projector=self.projector)

    def __matmul__(self, other: 'Operator') -> 'Operator':
        return Operator(self._matrix @ other.matrix, unitary=self.unitary and other.unitary)

    def __add__(self, other: 'Operator') -> 'Operator':
        return Operator(self._matrix + other.matrix, hermitian=self.hermitian and other.hermitian)

    def __sub__(self, other: 'Operator') -> 'Operator':
        return Operator(self._matrix - other.matrix, hermitian=self.hermitian and other.hermitian)

    def __neg__(self) -> 'Operator':
        return Operator(-self._matrix, hermitian=self.hermitian, unitary=self.unitary)

    def __mul__(self, scalar: complex) -> 'Operator':
        real = complex(scalar).imag == 0
        return Operator(self._matrix * scalar, hermitian=self.hermitian and real,
                        unitary=self.unitary and abs(abs(scalar) - 1) <= TOLERANCE)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> 'Operator':
        return self * (1.0 / scalar)

    def __repr__(self) -> str:
        flags = [name for name in ("hermitian", "unitary", "projector") if getattr(self, name)]
        return f"Operator(dim={self.dim}, flags={flags})"


OperatorLike = Union[Operator, np.ndarray]


def _as_matrix(op: OperatorLike) -> np.ndarray:
    if isinstance(op, Operator):
        return op.matrix
    return np.asarray(op, dtype=np.complex128)


class StateVector:
    """
    Complex amplitudes over an explicit register layout.

    Vectors may be subnormalized (branches of a state, projected states); use
    check_normalized or check_subnormalized where a norm constraint matters.
    """

    __slots__ = ("_layout", "_amplitudes")

    def __init__(self, layout: Layout, amplitudes: ArrayLike):
        array = np.array(amplitudes, dtype=np.complex128).reshape(-1)
        if array.shape[0] != layout.dim:
            raise LayoutError(
                f"State has {array.shape[0]} amplitudes but layout {layout} needs {layout.dim}"
            )
        array.setflags(write=False)
        self._layout = layout
        self._amplitudes = array

    @classmethod
    def basis(cls, layout: Layout, index: int = 0) -> 'StateVector':
        amplitudes = np.zeros(layout.dim, dtype=np.complex128)
        amplitudes[index] = 1.0
        return cls(layout, amplitudes)

    @classmethod
    def zeros(cls, layout: Layout) -> 'StateVector':
        return cls(layout, np.zeros(layout.dim, dtype=np.complex128))

    @property
    def layout(self) -> Layout:
        return self._layout

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amplitudes

    def tensor(self) -> np.ndarray:
        """
        The amplitudes reshaped to one axis per subsystem.
        """
        return self._amplitudes.reshape(self._layout.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self._amplitudes))

    def check_normalized(self, tol: float = TOLERANCE) -> 'StateVector':
        if abs(self.norm() - 1.0) > tol:
            raise LayoutError(f"State is not normalized (norm {self.norm():.12f})")
        return self

    def check_subnormalized(self, tol: float = TOLERANCE) -> 'StateVector':
        if self.norm() > 1.0 + tol:
            raise LayoutError(f"State is over-normalized (norm {self.norm():.12f})")
        return self

    def normalized(self) -> 'StateVector':
        norm = self.norm()
        if norm == 0:
            raise LayoutError("Cannot normalize the zero vector")
        return StateVector(self._layout, self._amplitudes / norm)

    def inner(self, other: 'StateVector') -> complex:
        """
        The inner product with self as the bra.
        """
        _check_same_layout(self, other)
        return complex(np.vdot(self._amplitudes, other.amplitudes))

    def apply(self, op: OperatorLike, labels: Sequence[str]) -> 'StateVector':
        """
        Apply an operator acting on the given subsystems (in the given order).
        """
        matrix = _as_matrix(op)
        axes = [self._layout.index(label) for label in labels]
        dims = [self._layout.dims[axis] for axis in axes]
        local_dim = int(np.prod(dims, dtype=np.int64))
        if matrix.shape != (local_dim, local_dim):
            raise LayoutError(
                f"Operator of shape {matrix.shape} does not act on {list(labels)} (dim {local_dim})"
            )
        count = len(axes)
        contracted = np.tensordot(
            matrix.reshape(dims + dims), self.tensor(),
            axes=(list(range(count, 2 * count)), axes),
        )
        return StateVector(self._layout, np.moveaxis(contracted, list(range(count)), axes))

    def apply_controlled(self, control: str, op: OperatorLike, labels: Sequence[str]) -> 'StateVector':
        """
        Apply op to the given subsystems on the branch where the qubit `control` is |1>.
        """
        if self._layout.dim_of(control) != 2:
            raise LayoutError(f"Control {control!r} is not a qubit")
        branch = self.apply(np.diag([0.0, 1.0]), [control])
        return (self - branch) + branch.apply(op, labels)

    def kron(self, other: 'StateVector') -> 'StateVector':
        return StateVector(self._layout.concat(other.layout),
                           np.kron(self._amplitudes, other.amplitudes))

    def permuted(self, labels: Sequence[str]) -> 'StateVector':
        """
        The same vector with its subsystems reordered to the given label order.
        """
        if sorted(labels) != sorted(self._layout.labels):
            raise LayoutError(f"Permutation {list(labels)} does not match {self._layout}")
        axes = [self._layout.index(label) for label in labels]
        return StateVector(self._layout.select(labels), np.transpose(self.tensor(), axes))

    def relabeled(self, layout: Layout) -> 'StateVector':
        """
        Reinterpret the amplitudes over a layout of equal total dimension.
        """
        return StateVector(layout, self._amplitudes)

    def reduced(self, keep: Sequence[str]) -> Operator:
        """
        Reduced density operator of |v><v| on the kept subsystems (in layout order).
        """
        kept = sorted(self._layout.index(label) for label in keep)
        rest = [axis for axis in range(len(self._layout)) if axis not in kept]
        kept_dim = int(np.prod([self._layout.dims[axis] for axis in kept], dtype=np.int64))
        matrix = np.transpose(self.tensor(), kept + rest).reshape(kept_dim, -1)
        return Operator(matrix @ matrix.conj().T, hermitian=True)

    def projector(self) -> Operator:
        return Operator(np.outer(self._amplitudes, self._amplitudes.conj()), hermitian=True)

    def conj(self) -> 'StateVector':
        return StateVector(self._layout, self._amplitudes.conj())

    def __add__(self, other: 'StateVector') -> 'StateVector':
        _check_same_layout(self, other)
        return StateVector(self._layout, self._amplitudes + other.amplitudes)

    def __sub__(self, other: 'StateVector') -> 'StateVector':
        _check_same_layout(self, other)
        return StateVector(self._layout, self._amplitudes - other.amplitudes)

    def __mul__(self, scalar: complex) -> 'StateVector':
        return StateVector(self._layout, self._amplitudes * scalar)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"StateVector({self._layout}, norm={self.norm():.6f})"


def _check_same_layout(first: StateVector, second: StateVector) -> None:
    if first.layout.dims != second.layout.dims:
        raise LayoutError(f"Layout mismatch: {first.layout} vs {second.layout}")


def tensor_product(ops: Sequence[OperatorLike]) -> Operator:
    """
    Kronecker product of the operands in the given order.
    """
    if not ops:
        raise InvalidOperatorError("tensor_product needs at least one operand")
    result = _as_matrix(ops[0])
    for op in ops[1:]:
        result = np.kron(result, _as_matrix(op))
    flags = [op for op in ops if isinstance(op, Operator)]
    everywhere = len(flags) == len(ops)
    return Operator(
        result,
        hermitian=everywhere and all(op.hermitian for op in flags),
        unitary=everywhere and all(op.unitary for op in flags),
        projector=everywhere and all(op.projector for op in flags),
    )


def embed(op: OperatorLike, layout: Layout, labels: Sequence[str]) -> Operator:
    """
    Extend an operator on some subsystems by the identity on the rest of the layout.
    """
    matrix = _as_matrix(op)
    targets = [layout.index(label) for label in labels]
    others = [axis for axis in range(len(layout)) if axis not in targets]
    rest_dim = int(np.prod([layout.dims[axis] for axis in others], dtype=np.int64))
    full = np.kron(matrix, np.eye(rest_dim))
    order = targets + others
    dims = [layout.dims[axis] for axis in order]
    inverse = list(np.argsort(order))
    count = len(layout)
    tensor = full.reshape(dims + dims)
    tensor = np.transpose(tensor, inverse + [count + axis for axis in inverse])
    flags = op if isinstance(op, Operator) else Operator(matrix)
    return Operator(tensor.reshape(layout.dim, layout.dim), hermitian=flags.hermitian,
                    unitary=flags.unitary, projector=flags.projector)


def partial_trace(rho: OperatorLike, layout: Layout, keep: Iterable[str]) -> Operator:
    """
    Trace out every subsystem not in `keep`. Kept subsystems stay in layout order.
    """
    matrix = _as_matrix(rho)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidOperatorError(f"partial_trace needs a square operator, got {matrix.shape}")
    if matrix.shape[0] != layout.dim:
        raise LayoutError(f"Operator of dim {matrix.shape[0]} does not match {layout}")
    kept = sorted(layout.index(label) for label in keep)
    count = len(layout)
    if 2 * count > len(string.ascii_letters):
        raise LayoutError(f"Layout {layout} has too many subsystems for partial_trace")
    rows = list(string.ascii_letters[:count])
    cols = [rows[axis] if axis not in kept else string.ascii_letters[count + axis]
            for axis in range(count)]
    out = "".join(rows[axis] for axis in kept) + "".join(cols[axis] for axis in kept)
    reduced = np.einsum(f"{''.join(rows)}{''.join(cols)}->{out}",
                        matrix.reshape(layout.dims + layout.dims))
    kept_dim = int(np.prod([layout.dims[axis] for axis in kept], dtype=np.int64))
    flags = rho if isinstance(rho, Operator) else Operator(matrix)
    return Operator(reduced.reshape(kept_dim, kept_dim), hermitian=flags.hermitian)


def operator_norm(op: OperatorLike) -> float:
    """
    Largest singular value.
    """
    values = svdvals(_as_matrix(op))
    return float(values[0]) if values.size else 0.0


def trace_norm(op: OperatorLike) -> float:
    """
    Sum of singular values.
    """
    matrix = _as_matrix(op)
    if np.allclose(matrix, matrix.conj().T, atol=HERMITIAN_TOLERANCE, rtol=0):
        return float(np.sum(np.abs(eigh(matrix, eigvals_only=True))))
    return float(np.sum(svdvals(matrix)))


def regularize(op: Operator) -> Operator:
    """
    Unitary regularization of a Hermitian operator.

    The kernel projector P is added first so that T + P is invertible, then the
    polar factor (T + P)|T + P|^-1 is taken. For Hermitian input this maps each
    eigenvalue to its sign, with zero mapped to +1.
    """
    if not op.is_hermitian():
        raise InvalidOperatorError("regularize needs a Hermitian operator")
    hermitian = (op.matrix + op.matrix.conj().T) / 2
    values, vectors = eigh(hermitian)
    kernel = vectors[:, np.abs(values) <= KERNEL_THRESHOLD]
    shifted = hermitian + kernel @ kernel.conj().T
    unitary, _ = polar(shifted)
    unitary = (unitary + unitary.conj().T) / 2
    return Operator(unitary, hermitian=True, unitary=True)


def vector_distance(u: StateVector, v: StateVector) -> float:
    """
    Norm of the difference of two vectors.
    """
    return (u - v).norm()


def pure_trace_distance(u: StateVector, v: StateVector) -> float:
    """
    Half the trace norm of |u><u| - |v><v| for (sub)normalized vectors.

    The difference has rank at most two, so its trace norm is
    sqrt((|u|^2 + |v|^2)^2 - 4 |<u|v>|^2).
    """
    u.check_subnormalized()
    v.check_subnormalized()
    first = u.norm() ** 2
    second = v.norm() ** 2
    overlap = abs(u.inner(v)) ** 2
    return 0.5 * math.sqrt(max((first + second) ** 2 - 4.0 * overlap, 0.0))


def state_estimate(u: StateVector, v: StateVector) -> Tuple[float, float]:
    """
    Re<u|v> and |u - v|. For unit vectors |u - v|^2 = 2 - 2 Re<u|v>, so a
    correlation of at least 1 - eps is the same as a distance of at most sqrt(2 eps).
    """
    return u.inner(v).real, vector_distance(u, v)


def regularized_acomm_bound(
        first: Operator,
        second: Operator,
        first_partner: Operator,
        second_partner: Operator,
        psi: StateVector,
        bob: Sequence[str],
        alice: Sequence[str],
) -> Tuple[float, float]:
    """
    Measured distance between the anticommutators of two regularized Hermitian
    operators and of the operators themselves, applied to psi, together with the
    guaranteed bound (6 + |T1| + |T2|) eps.

    The Hermitian operators act on the `bob` subsystems, their unitary partners on
    the `alice` subsystems, and eps is the larger of the two measured distances
    |(T_i - U_i) psi|.
    """
    eps = max(
        vector_distance(psi.apply(first, bob), psi.apply(first_partner, alice)),
        vector_distance(psi.apply(second, bob), psi.apply(second_partner, alice)),
    )
    regular_first = regularize(first)
    regular_second = regularize(second)

    def anticommutator(a: Operator, b: Operator) -> StateVector:
        return psi.apply(b, bob).apply(a, bob) + psi.apply(a, bob).apply(b, bob)

    measured = vector_distance(anticommutator(regular_first, regular_second),
                               anticommutator(first, second))
    bound = (6.0 + operator_norm(first) + operator_norm(second)) * eps
    return measured, bound


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """
    Haar-random unitary from the QR decomposition of a complex Ginibre matrix.
    """
    ginibre = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(ginibre)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    matrix = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (matrix + matrix.conj().T) / 2


def random_state(layout: Layout, rng: np.random.Generator) -> StateVector:
    amplitudes = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
    return StateVector(layout, amplitudes / np.linalg.norm(amplitudes))


def random_involution(dim: int, rng: np.random.Generator) -> np.ndarray:
    """
    A random Hermitian unitary: U diag(+-1) U^dagger with random signs.
    """
    unitary = random_unitary(dim, rng)
    signs = rng.choice([-1.0, 1.0], size=dim)
    return (unitary * signs) @ unitary.conj().T


def summed(vectors: List[StateVector]) -> StateVector:
    """
    Sum of a non-empty list of vectors over the same layout.
    """
    total = vectors[0]
    for vector in vectors[1:]:
        total = total + vector
    return total
