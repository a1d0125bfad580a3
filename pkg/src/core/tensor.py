"""
Motor diferenciable mínimo: tensores densos float64 con gradiente en modo reverso

ARQUITECTURA:
- Cada Tensor guarda sus valores (numpy float64), sus padres y una regla de
  backward que acumula gradientes en los padres.
- backward() ordena topológicamente el grafo desde la pérdida y reproduce las
  reglas en orden inverso (cinta implícita).
- Sin derivadas de orden superior: los gradientes son arreglos numpy, no Tensors.

Las operaciones binarias aceptan broadcasting estilo numpy; una combinación
de shapes incompatible es un ShapeError que nombra ambos shapes.
"""

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np


ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]

_state = threading.local()


class ShapeError(ValueError):
    """Shapes incompatibles en una operación del motor"""


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Desactivar la construcción del grafo (evaluación, dumps)"""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    """
    Tensor denso float64 con soporte de gradiente

    Attributes:
        data: valores (np.ndarray float64, row-major)
        requires_grad: si participa en el cálculo de gradientes
        grad: buffer de gradiente del mismo shape; las hojas con requires_grad
              arrancan en cero, los nodos intermedios en None hasta el backward
        name: nombre opcional (parámetros del modelo)
    """

    __array_priority__ = 100

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _parents: Tuple["Tensor", ...] = (),
        _op: str = "",
    ):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = _parents
        self.grad: Optional[np.ndarray] = (
            np.zeros_like(self.data) if self.requires_grad and not _parents else None
        )
        self._op = _op
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    # ------------------------------------------------------------------
    # Propiedades básicas
    # ------------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __len__(self) -> int:
        return len(self.data)

    # ------------------------------------------------------------------
    # Construcción del grafo
    # ------------------------------------------------------------------

    @staticmethod
    def _make(
        data: np.ndarray,
        parents: Tuple["Tensor", ...],
        op: str,
        backward: Callable[[np.ndarray], None],
    ) -> "Tensor":
        track = is_grad_enabled() and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=track, _parents=parents if track else (), _op=op)
        if track:
            out._backward = backward
        return out

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if grad.shape != self.data.shape:
            raise ShapeError(
                f"Gradiente con shape {grad.shape} para tensor {self.data.shape} (op {self._op!r})"
            )
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Propagar gradientes desde este tensor

        Los nodos intermedios empiezan en cero en cada llamada; las hojas
        acumulan (usar zero_grad entre pasos de optimización).
        """
        if not self.requires_grad:
            raise RuntimeError("backward() sobre un tensor que no requiere gradiente")
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() implícito requiere un escalar, shape {self.shape}")
            grad = np.ones_like(self.data)

        topo: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        for node in topo:
            if node._parents:
                node.grad = np.zeros_like(node.data)
            elif node.grad is None and node.requires_grad:
                node.grad = np.zeros_like(node.data)

        self.grad = self.grad + np.asarray(grad, dtype=np.float64)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # ------------------------------------------------------------------
    # Operaciones elementales
    # ------------------------------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        _check_broadcast(self, other, "add")

        def backward(grad: np.ndarray) -> None:
            self._accumulate(_unbroadcast(grad, self.shape))
            other._accumulate(_unbroadcast(grad, other.shape))

        return Tensor._make(self.data + other.data, (self, other), "add", backward)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) + self

    def __neg__(self) -> "Tensor":
        def backward(grad: np.ndarray) -> None:
            self._accumulate(-grad)

        return Tensor._make(-self.data, (self,), "neg", backward)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        _check_broadcast(self, other, "sub")

        def backward(grad: np.ndarray) -> None:
            self._accumulate(_unbroadcast(grad, self.shape))
            other._accumulate(_unbroadcast(-grad, other.shape))

        return Tensor._make(self.data - other.data, (self, other), "sub", backward)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        _check_broadcast(self, other, "mul")

        def backward(grad: np.ndarray) -> None:
            self._accumulate(_unbroadcast(grad * other.data, self.shape))
            other._accumulate(_unbroadcast(grad * self.data, other.shape))

        return Tensor._make(self.data * other.data, (self, other), "mul", backward)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) * self

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        _check_broadcast(self, other, "div")
        out_data = self.data / other.data

        def backward(grad: np.ndarray) -> None:
            self._accumulate(_unbroadcast(grad / other.data, self.shape))
            other._accumulate(_unbroadcast(-grad * out_data / other.data, other.shape))

        return Tensor._make(out_data, (self, other), "div", backward)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        if isinstance(exponent, Tensor):
            raise TypeError("Solo se soportan exponentes escalares")
        exponent = float(exponent)

        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad * exponent * self.data ** (exponent - 1.0))

        return Tensor._make(self.data**exponent, (self,), "pow", backward)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index) -> "Tensor":
        index = _normalize_index(index)
        out_data = self.data[index]

        def backward(grad: np.ndarray) -> None:
            full = np.zeros_like(self.data)
            np.add.at(full, index, grad)
            self._accumulate(full)

        return Tensor._make(np.array(out_data), (self,), "getitem", backward)

    # ------------------------------------------------------------------
    # Funciones elementales
    # ------------------------------------------------------------------

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)

        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad * out_data)

        return Tensor._make(out_data, (self,), "exp", backward)

    def log(self) -> "Tensor":
        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad / self.data)

        return Tensor._make(np.log(self.data), (self,), "log", backward)

    def sigmoid(self) -> "Tensor":
        out_data = _stable_sigmoid(self.data)

        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad * out_data * (1.0 - out_data))

        return Tensor._make(out_data, (self,), "sigmoid", backward)

    def relu(self) -> "Tensor":
        positive = self.data > 0

        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad * positive)

        return Tensor._make(self.data * positive, (self,), "relu", backward)

    def maximum(self, other: ArrayLike) -> "Tensor":
        """Máximo elemento a elemento; en empates el gradiente va a self"""
        other = as_tensor(other)
        _check_broadcast(self, other, "maximum")
        take_self = self.data >= other.data

        def backward(grad: np.ndarray) -> None:
            self._accumulate(_unbroadcast(grad * take_self, self.shape))
            other._accumulate(_unbroadcast(grad * ~take_self, other.shape))

        return Tensor._make(np.maximum(self.data, other.data), (self, other), "maximum", backward)

    def minimum(self, other: ArrayLike) -> "Tensor":
        """Mínimo elemento a elemento; en empates el gradiente va a self"""
        other = as_tensor(other)
        _check_broadcast(self, other, "minimum")
        take_self = self.data <= other.data

        def backward(grad: np.ndarray) -> None:
            self._accumulate(_unbroadcast(grad * take_self, self.shape))
            other._accumulate(_unbroadcast(grad * ~take_self, other.shape))

        return Tensor._make(np.minimum(self.data, other.data), (self, other), "minimum", backward)

    # ------------------------------------------------------------------
    # Reducciones y forma
    # ------------------------------------------------------------------

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(grad: np.ndarray) -> None:
            if axis is not None and not keepdims:
                grad = np.expand_dims(grad, _positive_axes(axis, self.ndim))
            self._accumulate(np.broadcast_to(grad, self.shape).copy())

        return Tensor._make(out_data, (self,), "sum", backward)

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else int(
            np.prod([self.shape[a] for a in _positive_axes(axis, self.ndim)])
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def max(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return self._extremum(np.max, axis, keepdims, "max")

    def min(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return self._extremum(np.min, axis, keepdims, "min")

    def _extremum(self, reducer, axis, keepdims: bool, op: str) -> "Tensor":
        kept = reducer(self.data, axis=axis, keepdims=True)
        hits = self.data == kept
        # empates: el subgradiente se reparte por igual
        share = hits / hits.sum(axis=axis, keepdims=True)
        out_data = kept if keepdims else reducer(self.data, axis=axis)

        def backward(grad: np.ndarray) -> None:
            if not keepdims:
                grad = grad.reshape(kept.shape)
            self._accumulate(share * grad)

        return Tensor._make(np.array(out_data), (self,), op, backward)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        try:
            out_data = self.data.reshape(shape)
        except ValueError as exc:
            raise ShapeError(f"No se puede reshape {self.shape} -> {shape}") from exc

        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad.reshape(self.shape))

        return Tensor._make(out_data, (self,), "reshape", backward)

    def transpose(self, *axes) -> "Tensor":
        """Sin argumentos intercambia los dos últimos ejes"""
        if not axes:
            if self.ndim < 2:
                raise ShapeError(f"transpose requiere al menos 2 ejes, shape {self.shape}")
            axes = tuple(range(self.ndim - 2)) + (self.ndim - 1, self.ndim - 2)
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = tuple(np.argsort(axes))

        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad.transpose(inverse))

        return Tensor._make(self.data.transpose(axes), (self,), "transpose", backward)

    def softmax(self, axis: int = -1) -> "Tensor":
        """Softmax estable (resta del máximo); backward por identidad JVP"""
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        exps = np.exp(shifted)
        out_data = exps / exps.sum(axis=axis, keepdims=True)

        def backward(grad: np.ndarray) -> None:
            dot = (grad * out_data).sum(axis=axis, keepdims=True)
            self._accumulate(out_data * (grad - dot))

        return Tensor._make(out_data, (self,), "softmax", backward)

    def log_softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        out_data = shifted - log_norm
        probs = np.exp(out_data)

        def backward(grad: np.ndarray) -> None:
            self._accumulate(grad - probs * grad.sum(axis=axis, keepdims=True))

        return Tensor._make(out_data, (self,), "log_softmax", backward)


# ----------------------------------------------------------------------
# Funciones libres
# ----------------------------------------------------------------------


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data: ArrayLike, name: Optional[str] = None) -> Tensor:
    """Hoja entrenable"""
    return Tensor(data, requires_grad=True, name=name)


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Producto matricial con lotes (>= 2 ejes en ambos operandos)"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul incompatible: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError as exc:
        raise ShapeError(f"matmul incompatible: {a.shape} @ {b.shape}") from exc

    def backward(grad: np.ndarray) -> None:
        a._accumulate(_unbroadcast(grad @ np.swapaxes(b.data, -1, -2), a.shape))
        b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ grad, b.shape))

    return Tensor._make(a.data @ b.data, (a, b), "matmul", backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat de una lista vacía")
    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"concat incompatible en eje {axis}: {shapes}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(grad: np.ndarray) -> None:
        for tensor, piece in zip(tensors, np.split(grad, bounds, axis=axis)):
            tensor._accumulate(piece)

    return Tensor._make(out_data, tuple(tensors), "concat", backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack con shapes distintos: {sorted(shapes)}")
    return concat([t.reshape(t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors], axis=axis)


def scatter_rows(source: Tensor, indices: np.ndarray, num_rows: int) -> Tensor:
    """Colocar las filas de source en una matriz de num_rows filas (resto en cero)"""
    indices = np.asarray(indices, dtype=np.int64)
    if source.shape[0] != len(indices):
        raise ShapeError(f"scatter_rows: {source.shape} filas vs {len(indices)} índices")
    if len(indices) and (indices.min() < 0 or indices.max() >= num_rows):
        raise IndexError(f"scatter_rows: índices fuera de [0, {num_rows})")
    out_data = np.zeros((num_rows,) + source.shape[1:])
    out_data[indices] = source.data

    def backward(grad: np.ndarray) -> None:
        source._accumulate(grad[indices])

    return Tensor._make(out_data, (source,), "scatter_rows", backward)


def straight_through(hard: np.ndarray, soft: Tensor) -> Tensor:
    """Valor exacto de `hard` en el forward; gradiente de `soft` en el backward"""
    if hard.shape != soft.shape:
        raise ShapeError(f"straight_through: {hard.shape} vs {soft.shape}")

    def backward(grad: np.ndarray) -> None:
        soft._accumulate(grad)

    return Tensor._make(np.array(hard, dtype=np.float64), (soft,), "straight_through", backward)


# ----------------------------------------------------------------------
# Auxiliares
# ----------------------------------------------------------------------


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: shapes incompatibles {a.shape} y {b.shape}") from exc


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sumar el gradiente sobre los ejes que el broadcasting expandió"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    squeeze = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if squeeze:
        grad = grad.sum(axis=squeeze, keepdims=True)
    return grad.reshape(shape)


def _positive_axes(axis: Union[int, Tuple[int, ...]], ndim: int) -> Tuple[int, ...]:
    axes = axis if isinstance(axis, tuple) else (axis,)
    return tuple(sorted(a % ndim for a in axes))


def _normalize_index(index):
    if isinstance(index, Tensor):
        return index.data.astype(np.int64)
    if isinstance(index, list):
        return np.asarray(index, dtype=np.int64)
    if isinstance(index, tuple):
        return tuple(_normalize_index(part) for part in index)
    return index


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    exp_x = np.exp(x[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out
