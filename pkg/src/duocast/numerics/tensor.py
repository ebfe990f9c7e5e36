"""Dense float tensors with reverse-mode differentiation.

Every primitive that produces a tensor records the adjoint closure needed
to propagate gradients back to its parents; ``backward`` replays those
closures in reverse topological order. Tensors are immutable values once
created -- the only sanctioned in-place write is an optimizer update on a
leaf parameter.
"""

from __future__ import annotations

import numpy as np


class NumericsError(Exception):
    """Base class for tensor-engine failures."""


class ShapeError(NumericsError):
    pass


class NonFiniteError(NumericsError):
    """A primitive produced NaN or Inf."""


class TapeError(NumericsError):
    pass


_DTYPES = {"float64": np.float64, "float32": np.float32}
_dtype = np.float64
_grad_enabled = True


def set_precision(mode: str) -> None:
    """Switch the global dtype for newly created tensors.

    64-bit is the default and is required for gradient checks and the
    determinism guarantees; 32-bit is offered for faster training runs.
    """
    global _dtype
    if mode not in _DTYPES:
        raise ValueError(f"unknown precision {mode!r}; expected one of {sorted(_DTYPES)}")
    _dtype = _DTYPES[mode]


def get_precision() -> str:
    return "float64" if _dtype is np.float64 else "float32"


def current_dtype():
    return _dtype


class precision:
    """Context manager form of `set_precision`."""

    def __init__(self, mode: str):
        self.mode = mode
        self._saved = None

    def __enter__(self):
        self._saved = get_precision()
        set_precision(self.mode)
        return self

    def __exit__(self, *exc):
        set_precision(self._saved)
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class no_grad:
    """Disable tape recording inside the block (inference fast path)."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved
        return False


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_bwd", "_consumed", "_op")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=_dtype)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor constructed from non-finite values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._bwd = None
        self._consumed = False
        self._op = "leaf"

    # -- construction used by primitives -------------------------------
    @classmethod
    def _from_op(cls, data: np.ndarray, parents, bwd, op: str) -> "Tensor":
        arr = np.asarray(data, dtype=_dtype)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"primitive {op!r} produced non-finite values")
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t._consumed = False
        t._op = op
        if _grad_enabled and any(p.requires_grad for p in parents):
            t.requires_grad = True
            t._parents = tuple(parents)
            t._bwd = bwd
        else:
            t.requires_grad = False
            t._parents = ()
            t._bwd = None
        return t

    # -- views ----------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        """Detached copy of the values."""
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op!r}, grad={self.requires_grad})"

    # -- operator sugar (implementations live in ops.py) ----------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Topologically ordered record of the primitives reachable from a root.

    Built lazily at backward time from the parent links each primitive
    stored; replaying the stored adjoints in reverse order visits every
    node exactly once.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes = []
        seen = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

    def backward(self) -> None:
        root = self.root
        if root.data.size != 1:
            raise TapeError(f"backward requires a scalar loss, got shape {root.shape}")
        for node in self.nodes:
            if node._consumed:
                raise TapeError(
                    "tape already consumed by a previous backward; rebuild the forward pass"
                )
        root.grad = np.ones_like(root.data)
        for node in reversed(self.nodes):
            if node._bwd is None:
                continue
            node._consumed = True
            if node.grad is None:
                # no consumer contributed gradient; nothing to propagate
                node._bwd = None
                continue
            grads = node._bwd(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.asarray(g, dtype=parent.data.dtype).reshape(parent.data.shape)
                else:
                    parent.grad = parent.grad + np.asarray(g, dtype=parent.data.dtype).reshape(
                        parent.data.shape
                    )
            node._bwd = None
            node.grad = None  # free intermediate adjoints


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``."""
    Tape(loss).backward()
