"""
Define-by-run reverse-mode differentiation over dense float64 arrays.

A Tape records every primitive application in creation order. Leaves are
parameters, inputs or constants; any intermediate tensor can additionally be
watched, which makes backward() report its gradient the same way it reports
gradients of true input leaves.

Example usage:
    >>> tape = Tape()
    >>> x = tape.input(np.array(3.0))
    >>> y = mul(x, x)
    >>> tape.backward(y)[x.id]
    array(6.)
"""
import builtins
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit
from scipy.special import logsumexp as _logsumexp

from .exceptions import LookupRangeError, NonFiniteError, NonScalarRootError, ShapeMismatchError, TaggerError

logger = logging.getLogger(__name__)

DTYPE = np.float64

PARAMETER = "parameter"
INPUT = "input"
CONSTANT = "constant"
OPERATION = "operation"

ArrayLike = Union[np.ndarray, float, Sequence[float]]
Operand = Union["Tensor", ArrayLike]
VectorJacobian = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


def _frozen(value: ArrayLike) -> np.ndarray:
    array = np.asarray(value, dtype=DTYPE).view()
    array.flags.writeable = False
    return array


class Tensor:
    """
    A value recorded on a Tape.

    The data array is read-only; every transformation goes through a primitive
    so that it is recorded.
    """

    __slots__ = ("tape", "id", "data", "kind", "name")

    def __init__(self, tape: "Tape", tensor_id: int, data: np.ndarray, kind: str, name: Optional[str] = None):
        self.tape = tape
        self.id = tensor_id
        self.data = data
        self.kind = kind
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def item(self) -> float:
        if self.data.size != 1:
            raise NonScalarRootError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, kind={self.kind}{label})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass(frozen=True)
class Node:
    op: str
    inputs: Tuple[int, ...]
    output: int
    vjp: VectorJacobian


class GradientMap(dict):
    """Gradients keyed by leaf id, with name lookup for named leaves."""

    def __init__(self, grads: Dict[int, np.ndarray], names: Dict[int, str]):
        super().__init__(grads)
        self._names = names

    def by_name(self) -> Dict[str, np.ndarray]:
        return {self._names[i]: g for i, g in self.items() if i in self._names}


class Tape:
    """
    Ordered record of primitive applications.

    Tapes are single-threaded and rebuilt for every training example.
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self._tensors: List[Tensor] = []
        self._watched: Dict[int, Tensor] = {}

    def _new(self, data: np.ndarray, kind: str, name: Optional[str] = None) -> Tensor:
        tensor = Tensor(self, len(self._tensors), data, kind, name)
        self._tensors.append(tensor)
        return tensor

    def parameter(self, value: ArrayLike, name: Optional[str] = None) -> Tensor:
        return self._new(_frozen(value), PARAMETER, name)

    def input(self, value: ArrayLike, name: Optional[str] = None) -> Tensor:
        return self._new(_frozen(value), INPUT, name)

    def constant(self, value: ArrayLike) -> Tensor:
        return self._new(_frozen(value), CONSTANT)

    def watch(self, tensor: Tensor, name: Optional[str] = None) -> Tensor:
        """Marks an intermediate tensor so backward() reports its gradient."""
        if tensor.tape is not self:
            raise TaggerError("cannot watch a tensor recorded on another tape")
        if name is not None:
            tensor.name = name
        self._watched[tensor.id] = tensor
        return tensor

    def lift(self, value: Operand) -> Tensor:
        if isinstance(value, Tensor):
            if value.tape is not self:
                raise TaggerError("operands were recorded on different tapes")
            return value
        return self.constant(value)

    def record(self, op: str, inputs: Sequence[Tensor], output: np.ndarray, vjp: VectorJacobian) -> Tensor:
        data = np.asarray(output, dtype=DTYPE)
        data.flags.writeable = False
        if all(t.kind == CONSTANT for t in inputs):
            return self._new(data, CONSTANT)
        tensor = self._new(data, OPERATION)
        self.nodes.append(Node(op, tuple(t.id for t in inputs), tensor.id, vjp))
        return tensor

    def leaves(self, kind: Optional[str] = None) -> List[Tensor]:
        kinds = (kind,) if kind else (PARAMETER, INPUT)
        return [t for t in self._tensors if t.kind in kinds]

    def backward(self, root: Tensor, seed: float = 1.0) -> GradientMap:
        """
        Propagates adjoints from a scalar root back through the tape.

        Args:
            root (Tensor): Scalar tensor recorded on this tape.
            seed (float): Adjoint of the root, 1 by convention.

        Returns:
            GradientMap: Gradient for every parameter leaf, input leaf and
                         watched tensor. Leaves the root does not depend on get
                         zero arrays of matching shape.

        Raises:
            NonScalarRootError: If the root holds more than one value.
        """
        if root.tape is not self:
            raise TaggerError("root was recorded on another tape")
        if root.size != 1:
            raise NonScalarRootError(f"backward needs a scalar root, got shape {root.shape}")

        adjoints: Dict[int, np.ndarray] = {root.id: np.full(root.shape, seed, dtype=DTYPE)}
        for node in reversed(self.nodes):
            if node.output > root.id:
                continue
            grad = adjoints.get(node.output)
            if grad is None:
                continue
            for source, contribution in zip(node.inputs, node.vjp(grad)):
                if contribution is None or self._tensors[source].kind == CONSTANT:
                    continue
                previous = adjoints.get(source)
                adjoints[source] = contribution if previous is None else previous + contribution

        reported = self.leaves() + list(self._watched.values())
        grads = {}
        names = {}
        for tensor in reported:
            grad = adjoints.get(tensor.id)
            grads[tensor.id] = _frozen(grad if grad is not None else np.zeros(tensor.shape))
            if tensor.name is not None:
                names[tensor.id] = tensor.name
        return GradientMap(grads, names)


def _tape_of(*operands: Operand) -> Tape:
    for operand in operands:
        if isinstance(operand, Tensor):
            return operand.tape
    raise TaggerError("at least one operand must be a Tensor")


def _lift_all(*operands: Operand) -> Tuple[Tape, List[Tensor]]:
    tape = _tape_of(*operands)
    return tape, [tape.lift(o) for o in operands]


def check_finite(tensor: Tensor, what: str = "tensor") -> Tensor:
    if not tensor.is_finite():
        raise NonFiniteError(f"{what} of shape {tensor.shape} holds NaN or Inf")
    return tensor


# --- Primitives ---

def matmul(a: Operand, b: Operand) -> Tensor:
    """Matrix-matrix or matrix-vector product."""
    tape, (a, b) = _lift_all(a, b)
    left, right = a.data, b.data
    if left.ndim != 2 or right.ndim not in (1, 2) or left.shape[1] != right.shape[0]:
        raise ShapeMismatchError("matmul", left.shape, right.shape)

    def vjp(g):
        if right.ndim == 1:
            return np.outer(g, right), left.T @ g
        return g @ right.T, left.T @ g

    return tape.record("matmul", (a, b), left @ right, vjp)


def _additive_shapes(primitive: str, left: np.ndarray, right: np.ndarray) -> int:
    """Returns which operand is broadcast as a row: 0 none, 1 left, 2 right."""
    if left.shape == right.shape:
        return 0
    if left.ndim == 2 and right.ndim == 1 and left.shape[1] == right.shape[0]:
        return 2
    if left.ndim == 1 and right.ndim == 2 and right.shape[1] == left.shape[0]:
        return 1
    raise ShapeMismatchError(primitive, left.shape, right.shape)


def add(a: Operand, b: Operand) -> Tensor:
    """Elementwise sum; a vector may be added to every row of a matrix."""
    tape, (a, b) = _lift_all(a, b)
    row = _additive_shapes("add", a.data, b.data)

    def vjp(g):
        return (g.sum(axis=0) if row == 1 else g), (g.sum(axis=0) if row == 2 else g)

    return tape.record("add", (a, b), a.data + b.data, vjp)


def sub(a: Operand, b: Operand) -> Tensor:
    tape, (a, b) = _lift_all(a, b)
    row = _additive_shapes("sub", a.data, b.data)

    def vjp(g):
        return (g.sum(axis=0) if row == 1 else g), -(g.sum(axis=0) if row == 2 else g)

    return tape.record("sub", (a, b), a.data - b.data, vjp)


def mul(a: Operand, b: Operand) -> Tensor:
    """Elementwise product of same-shaped operands."""
    tape, (a, b) = _lift_all(a, b)
    left, right = a.data, b.data
    if left.shape != right.shape:
        raise ShapeMismatchError("mul", left.shape, right.shape)
    return tape.record("mul", (a, b), left * right, lambda g: (g * right, g * left))


def scale(a: Tensor, factor: float) -> Tensor:
    return a.tape.record("scale", (a,), a.data * factor, lambda g: (g * factor,))


def total(a: Tensor) -> Tensor:
    """Sum of all entries, as a scalar."""
    shape = a.shape
    return a.tape.record("sum", (a,), np.sum(a.data), lambda g: (np.full(shape, g, dtype=DTYPE),))


def concat(tensors: Sequence[Operand], axis: int = 0) -> Tensor:
    tape, parts = _lift_all(*tensors)
    first = parts[0].data
    for part in parts[1:]:
        other = part.data
        if other.ndim != first.ndim or any(
            d1 != d2 for i, (d1, d2) in enumerate(zip(first.shape, other.shape)) if i != axis % first.ndim
        ):
            raise ShapeMismatchError("concat", first.shape, other.shape)
    bounds = np.cumsum([p.data.shape[axis] for p in parts])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return tape.record("concat", parts, np.concatenate([p.data for p in parts], axis=axis), vjp)


def stack(tensors: Sequence[Operand]) -> Tensor:
    """Stacks same-shaped tensors along a new leading axis."""
    tape, parts = _lift_all(*tensors)
    first = parts[0].data
    for part in parts[1:]:
        if part.data.shape != first.shape:
            raise ShapeMismatchError("stack", first.shape, part.data.shape)
    return tape.record("stack", parts, np.stack([p.data for p in parts]), lambda g: tuple(g))


def slice(a: Tensor, key) -> Tensor:
    """Basic (int / slice) indexing."""
    index = np.index_exp[key]
    if any(not isinstance(k, (int, np.integer, builtins.slice)) for k in index):
        raise TaggerError("slice accepts only integers and slices")
    shape = a.shape
    try:
        out = a.data[index]
    except IndexError as e:
        raise ShapeMismatchError("slice", shape, (str(key),)) from e

    def vjp(g):
        full = np.zeros(shape, dtype=DTYPE)
        full[index] += g
        return (full,)

    return a.tape.record("slice", (a,), np.array(out), vjp)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeMismatchError("transpose", a.shape, (2,))
    return a.tape.record("transpose", (a,), a.data.T, lambda g: (g.T,))


def sigmoid(a: Tensor) -> Tensor:
    out = expit(a.data)
    return a.tape.record("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return a.tape.record("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def softplus(a: Tensor) -> Tensor:
    x = a.data
    return a.tape.record("softplus", (a,), np.logaddexp(0.0, x), lambda g: (g * expit(x),))


def logsumexp(a: Tensor, axis: Optional[int] = None) -> Tensor:
    """Numerically stable log-sum-exp, over one axis or over everything."""
    x = a.data
    out = _logsumexp(x, axis=axis)

    def vjp(g):
        expanded_out = out if axis is None else np.expand_dims(out, axis)
        expanded_g = g if axis is None else np.expand_dims(g, axis)
        return (expanded_g * np.exp(x - expanded_out),)

    return a.tape.record("logsumexp", (a,), out, vjp)


def max(a: Tensor, axis: Optional[int] = None) -> Tensor:
    """Maximum over one axis; the gradient goes to the first maximizer."""
    x = a.data
    if axis is None:
        flat = int(np.argmax(x))

        def vjp(g):
            full = np.zeros(x.size, dtype=DTYPE)
            full[flat] = g
            return (full.reshape(x.shape),)

        return a.tape.record("max", (a,), x.reshape(-1)[flat], vjp)

    winners = np.expand_dims(np.argmax(x, axis=axis), axis)

    def vjp(g):
        full = np.zeros(x.shape, dtype=DTYPE)
        np.put_along_axis(full, winners, np.expand_dims(g, axis), axis=axis)
        return (full,)

    return a.tape.record("max", (a,), np.max(x, axis=axis), vjp)


def dropout(a: Tensor, mask: np.ndarray) -> Tensor:
    """Applies an externally sampled (already rescaled) dropout mask."""
    mask = np.asarray(mask, dtype=DTYPE)
    if mask.shape != a.shape:
        raise ShapeMismatchError("dropout", a.shape, mask.shape)
    return a.tape.record("dropout", (a,), a.data * mask, lambda g: (g * mask,))


def gather(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gathers rows of a 2-d table; repeated ids accumulate gradient."""
    rows = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeMismatchError("gather", table.shape, rows.shape)
    if rows.size and (rows.min() < 0 or rows.max() >= table.shape[0]):
        raise LookupRangeError(f"row id out of range for table with {table.shape[0]} rows")
    shape = table.shape

    def vjp(g):
        full = np.zeros(shape, dtype=DTYPE)
        np.add.at(full, rows, g)
        return (full,)

    return table.tape.record("gather", (table,), table.data[rows], vjp)


# --- Checking ---

def grad_check(
    function: Callable[..., Tensor],
    point: Union[ArrayLike, Mapping[str, ArrayLike]],
    step: float = 1e-5,
) -> float:
    """
    Compares backward() against central finite differences.

    Args:
        function: Maps a Tensor (or a dict of named Tensors, when point is a
                  mapping) to a scalar Tensor on the same tape.
        point: Where to evaluate, an array or a mapping name -> array.
        step (float): Finite-difference step h.

    Returns:
        float: max over coordinates of |analytic - numeric| / max(1, |analytic|).

    Raises:
        NonFiniteError: If the function or its gradient is not finite.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    named = isinstance(point, Mapping)
    values = {k: np.array(v, dtype=DTYPE) for k, v in (point.items() if named else [("x", point)])}

    def evaluate(current: Dict[str, np.ndarray]) -> Tuple[Tape, Dict[str, Tensor], Tensor]:
        tape = Tape()
        leaves = {k: tape.input(v, name=k) for k, v in current.items()}
        out = function(leaves if named else leaves["x"])
        return tape, leaves, check_finite(out, "function value")

    tape, leaves, out = evaluate(values)
    grads = tape.backward(out)

    worst = 0.0
    for name, base in values.items():
        analytic = grads[leaves[name].id]
        if not np.all(np.isfinite(analytic)):
            raise NonFiniteError(f"gradient w.r.t. {name} holds NaN or Inf")
        for index in np.ndindex(base.shape):
            shifted = dict(values)
            plus = base.copy()
            plus[index] += step
            shifted[name] = plus
            f_plus = evaluate(shifted)[2].item()
            minus = base.copy()
            minus[index] -= step
            shifted[name] = minus
            f_minus = evaluate(shifted)[2].item()
            numeric = (f_plus - f_minus) / (2.0 * step)
            error = abs(analytic[index] - numeric) / np.maximum(1.0, abs(analytic[index]))
            worst = np.maximum(worst, error)
    logger.debug(f"grad_check over {sum(v.size for v in values.values())} coordinates: max error {worst:.3e}")
    return float(worst)
