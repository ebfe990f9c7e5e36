"""Neural building blocks: parameters, modules, attention, norm blocks."""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import ShapeError, Tensor


class Parameter:
    """A named leaf tensor that the optimizer may update in place."""

    def __init__(self, value: np.ndarray, name: str = "", trainable: bool = True):
        self.value = Tensor(np.asarray(value), requires_grad=trainable)
        self.name = name
        self.trainable = trainable

    @property
    def grad(self):
        return self.value.grad

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.value.grad = None

    def set_trainable(self, flag: bool) -> None:
        self.trainable = flag
        self.value.requires_grad = flag

    def assign(self, array: np.ndarray) -> None:
        if array.shape != self.value.data.shape:
            raise ShapeError(f"assign to {self.name!r}: {array.shape} != {self.value.data.shape}")
        self.value.data = np.asarray(array, dtype=self.value.data.dtype).copy()

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, trainable={self.trainable})"


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Container with recursively named parameters, checkpoint-stable order."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}
        self._children: dict[str, Module] = {}

    def register(self, name: str, value: np.ndarray, trainable: bool = True) -> Parameter:
        p = Parameter(value, name=name, trainable=trainable)
        self._params[name] = p
        return p

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            path = f"{prefix}{name}"
            p.name = path
            yield path, p
        for cname, child in self._children.items():
            yield from child.named_parameters(prefix=f"{prefix}{cname}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self) -> list[Parameter]:
        return [p for p in self.parameters() if p.trainable]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def freeze(self) -> None:
        for p in self.parameters():
            p.set_trainable(False)

    def unfreeze(self) -> None:
        for p in self.parameters():
            p.set_trainable(True)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.value.data.copy() for name, p in self.named_parameters()}

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in own.items():
            p.assign(state[name])


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 bias: bool = True, zero_init: bool = False):
        super().__init__()
        w = np.zeros((in_dim, out_dim)) if zero_init else fan_in_uniform(rng, (in_dim, out_dim), in_dim)
        self.w = self.register("w", w)
        self.b = self.register("b", np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = ops.matmul(x, self.w.value)
        if self.b is not None:
            out = ops.add_bias(out, self.b.value)
        return out


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = self.register("gamma", np.ones(dim))
        self.beta = self.register("beta", np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma.value, self.beta.value, eps=self.eps)


class FeedForward(Module):
    """Two-layer gelu MLP used inside transformer blocks."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.up = self.add_child("up", Linear(dim, hidden, rng))
        self.down = self.add_child("down", Linear(hidden, dim, rng))

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(ops.gelu(self.up(x)))


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """softmax(q k^T / sqrt(d_k) + mask) v for 2-D q, k, v."""
    d_k = q.shape[-1]
    scores = ops.mul(ops.matmul(q, ops.transpose(k)), 1.0 / np.sqrt(d_k))
    if mask is not None:
        scores = ops.add(scores, Tensor(mask))
    return ops.matmul(ops.softmax(scores, axis=-1), v)


def causal_mask(n: int) -> np.ndarray:
    """Additive mask hiding positions j > i."""
    m = np.zeros((n, n))
    m[np.triu_indices(n, k=1)] = -1e9
    return m


class MultiHeadAttention(Module):
    """Projected multi-head attention; self-attention when q==k==v inputs."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % heads != 0:
            raise ShapeError(f"model dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        for name in ("wq", "wk", "wv", "wo"):
            setattr(self, name, self.register(name, fan_in_uniform(rng, (dim, dim), dim)))

    def __call__(self, q_in: Tensor, k_in: Tensor, v_in: Tensor,
                 mask: np.ndarray | None = None) -> Tensor:
        q = ops.matmul(q_in, self.wq.value)
        k = ops.matmul(k_in, self.wk.value)
        v = ops.matmul(v_in, self.wv.value)
        outs = []
        for h in range(self.heads):
            j0, j1 = h * self.head_dim, (h + 1) * self.head_dim
            outs.append(scaled_dot_attention(
                ops.cols(q, j0, j1), ops.cols(k, j0, j1), ops.cols(v, j0, j1), mask=mask))
        merged = outs[0] if len(outs) == 1 else ops.concat(outs, axis=1)
        return ops.matmul(merged, self.wo.value)


class EncoderBlock(Module):
    """Pre-norm residual block: x + MSA(LN(x)), then x + FFN(LN(x))."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, ffn_hidden: int | None = None):
        super().__init__()
        hidden = ffn_hidden or 2 * dim
        self.ln1 = self.add_child("ln1", LayerNorm(dim))
        self.attn = self.add_child("attn", MultiHeadAttention(dim, heads, rng))
        self.ln2 = self.add_child("ln2", LayerNorm(dim))
        self.ffn = self.add_child("ffn", FeedForward(dim, hidden, rng))

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        h = self.ln1(x)
        x = ops.add(x, self.attn(h, h, h, mask=mask))
        return ops.add(x, self.ffn(self.ln2(x)))
