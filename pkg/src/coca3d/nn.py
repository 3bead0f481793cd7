#
# coca3d.nn.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#
import logging
import numpy as np
from collections import OrderedDict
from math import sqrt
from typing import Dict
from typing import Iterator
from typing import Optional
from typing import Tuple
from coca3d.tensor import Parameter
from coca3d.tensor import Tensor
import coca3d.tensor as T


__all__ = [
    "Module",
    "Linear",
    "LayerNorm",
    "MLP",
    "MultiHeadAttention",
    "TransformerBlock",
    "Transformer",
    "split_heads",
    "merge_heads",
    "scaled_dot_product_attention",
    "multi_head_attention",
]


# Get the logger
logger = logging.getLogger(__name__)


class Module(object):
    """
    Base class for anything holding parameters

    Parameters are discovered from the instance attributes in definition
    order. Attributes which are modules, or lists of modules, contribute
    their parameters under a dotted prefix.

    """

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix + name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters("%s%s.%d." % (prefix, name, i))
                    elif isinstance(item, Parameter):
                        yield "%s%s.%d" % (prefix, name, i), item

    def parameters(self) -> Dict[str, Parameter]:
        """
        Returns:
            The parameters keyed by their dotted names

        """
        result: Dict[str, Parameter] = OrderedDict()
        for name, parameter in self.named_parameters():
            if name in result:
                raise RuntimeError("Duplicate parameter name %s" % name)
            parameter.name = name
            result[name] = parameter
        return result

    def trainable_parameters(self) -> Dict[str, Parameter]:
        return OrderedDict(
            (name, p) for name, p in self.parameters().items() if not p.frozen
        )

    def frozen_parameters(self) -> Dict[str, Parameter]:
        return OrderedDict(
            (name, p) for name, p in self.parameters().items() if p.frozen
        )

    def freeze(self):
        for parameter in self.parameters().values():
            parameter.freeze()

    def zero_grad(self, set_to_none: bool = False):
        for parameter in self.parameters().values():
            parameter.zero_grad(set_to_none)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return OrderedDict(
            (name, p.data.copy()) for name, p in self.parameters().items()
        )

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True):
        """
        Copy values into the parameters

        Args:
            state: The arrays keyed by parameter name
            strict: Every parameter must be present in state

        """
        for name, parameter in self.parameters().items():
            if name not in state:
                if strict:
                    raise RuntimeError("Missing parameter %s" % name)
                continue
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != parameter.shape:
                raise RuntimeError(
                    "Shape mismatch for %s: %s != %s"
                    % (name, value.shape, parameter.shape)
                )
            parameter.data[...] = value

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Linear(Module):
    """
    An affine map x @ W + b

    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        rng: np.random.Generator,
        bias: bool = True,
        std: float = None,
    ):
        if std is None:
            std = 1.0 / sqrt(in_dim)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Parameter(rng.normal(0, std, size=(in_dim, out_dim)))
        self.bias = Parameter(np.zeros(out_dim)) if bias else None

    def named_parameters(self, prefix: str = ""):
        yield prefix + "weight", self.weight
        if self.bias is not None:
            yield prefix + "bias", self.bias

    def forward(self, x) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ValueError(
                "Linear expected width %d, got %d" % (self.in_dim, x.shape[-1])
            )
        y = T.matmul(x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self.eps = eps

    def named_parameters(self, prefix: str = ""):
        yield prefix + "gain", self.gain
        yield prefix + "bias", self.bias

    def forward(self, x) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class MLP(Module):
    """
    Two affine layers with a nonlinearity between them

    """

    def __init__(
        self,
        in_dim: int,
        hidden_dim: int,
        out_dim: int,
        rng: np.random.Generator,
        activation: str = "relu",
    ):
        assert activation in ["relu", "gelu"]
        self.layer1 = Linear(in_dim, hidden_dim, rng)
        self.layer2 = Linear(hidden_dim, out_dim, rng)
        self.activation = activation

    @property
    def in_dim(self) -> int:
        return self.layer1.in_dim

    @property
    def out_dim(self) -> int:
        return self.layer2.out_dim

    def forward(self, x) -> Tensor:
        h = self.layer1(x)
        h = T.relu(h) if self.activation == "relu" else T.gelu(h)
        return self.layer2(h)


def split_heads(x: Tensor, heads: int) -> Tensor:
    """
    (B, L, D) -> (B, H, L, D / H)

    """
    b, l, d = x.shape
    return x.reshape(b, l, heads, d // heads).transpose(0, 2, 1, 3)


def merge_heads(x: Tensor) -> Tensor:
    """
    (B, H, L, Dk) -> (B, L, H * Dk)

    """
    b, h, l, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * dk)


def scaled_dot_product_attention(
    q: Tensor, k: Tensor, v: Tensor, causal_mask: bool = False
) -> Tensor:
    """
    softmax(q k^T / sqrt(d_k)) v over the last two axes

    With causal_mask, query position t only attends to key positions <= t.

    """
    scores = T.matmul(q, T.swapaxes(k, -1, -2)) * (1.0 / sqrt(q.shape[-1]))
    mask = None
    if causal_mask:
        lq, lk = scores.shape[-2], scores.shape[-1]
        mask = np.tril(np.ones((lq, lk), dtype=bool), k=lk - lq)
    return T.matmul(T.softmax(scores, axis=-1, mask=mask), v)


def multi_head_attention(
    q, k, v, heads: int, causal_mask: bool = False, projection=None
) -> Tensor:
    """
    Multi-head scaled dot product attention

    Args:
        q: The queries (B, Lq, D)
        k: The keys (B, Lk, Dk)
        v: The values (B, Lk, Dv)
        heads: The number of heads
        causal_mask: Mask attention to future positions
        projection: The MultiHeadAttention holding the input and output
            projections. If None the projections are the identity.

    Returns:
        The attended values (B, Lq, D)

    """
    q, k, v = T.as_tensor(q), T.as_tensor(k), T.as_tensor(v)
    if projection is not None:
        q = projection.w_q(q)
        k = projection.w_k(k)
        v = projection.w_v(v)
    if q.shape[-1] % heads != 0:
        raise ValueError(
            "Model dimension %d is not divisible by %d heads" % (q.shape[-1], heads)
        )
    out = merge_heads(
        scaled_dot_product_attention(
            split_heads(q, heads),
            split_heads(k, heads),
            split_heads(v, heads),
            causal_mask,
        )
    )
    if projection is not None:
        out = projection.w_o(out)
    return out


class MultiHeadAttention(Module):
    """
    Attention with learned query, key, value and output projections

    """

    def __init__(
        self, dim: int, heads: int, rng: np.random.Generator, kv_dim: int = None
    ):
        if dim % heads != 0:
            raise ValueError(
                "Model dimension %d is not divisible by %d heads" % (dim, heads)
            )
        if kv_dim is None:
            kv_dim = dim
        self.heads = heads
        self.w_q = Linear(dim, dim, rng)
        self.w_k = Linear(kv_dim, dim, rng)
        self.w_v = Linear(kv_dim, dim, rng)
        self.w_o = Linear(dim, dim, rng)

    def project_kv(self, memory) -> Tuple[Tensor, Tensor]:
        """
        Project and split the keys and values once so they can be reused

        """
        return (
            split_heads(self.w_k(memory), self.heads),
            split_heads(self.w_v(memory), self.heads),
        )

    def forward(
        self,
        query,
        memory=None,
        causal_mask: bool = False,
        kv: Optional[Tuple[Tensor, Tensor]] = None,
    ) -> Tensor:
        """
        Attend from query to memory (or to itself when memory is None)

        """
        if kv is None:
            if memory is None:
                memory = query
            return multi_head_attention(
                query, memory, memory, self.heads, causal_mask, self
            )
        q = split_heads(self.w_q(query), self.heads)
        out = scaled_dot_product_attention(q, kv[0], kv[1], causal_mask)
        return self.w_o(merge_heads(out))


class TransformerBlock(Module):
    """
    A pre-norm block: self-attention then feed-forward, each residual

    """

    def __init__(self, dim: int, heads: int, mlp_ratio: int, rng: np.random.Generator):
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim)
        self.mlp = MLP(dim, dim * mlp_ratio, dim, rng, activation="gelu")

    def forward(self, x: Tensor, causal_mask: bool = False) -> Tensor:
        x = x + self.attn(self.ln1(x), causal_mask=causal_mask)
        return x + self.mlp(self.ln2(x))


class Transformer(Module):
    """
    A stack of transformer blocks

    """

    def __init__(
        self,
        dim: int,
        layers: int,
        heads: int,
        mlp_ratio: int,
        rng: np.random.Generator,
    ):
        if dim % heads != 0:
            raise ValueError(
                "Model dimension %d is not divisible by %d heads" % (dim, heads)
            )
        self.dim = dim
        self.blocks = [TransformerBlock(dim, heads, mlp_ratio, rng) for _ in range(layers)]

    def forward(self, x: Tensor, causal_mask: bool = False) -> Tensor:
        for block in self.blocks:
            x = block(x, causal_mask)
        return x
