"""Vision transformer with the three classification heads.

Forward pass for one image::

    image H x W x 3
      -> patchify                      n x patch_dim
      -> embed (linear + positions)    n x d
      -> encoder_forward (pre-norm)    n x d
      -> head                          C logits
      -> softmax                       C probabilities, index 0 = real access

Heads, all starting with u = GELU(tokens . FC1 + b1), u in n x h:

    BaselineViT        s = mean of u over features (n x 1)
    AAMLPNoAttention   a = adaptive_avg_pool_1d(u, P) (n x P)
    AAMLP              p = adaptive_avg_pool_1d(u, P)
                       a = softmax((p Wq)(p Wk)^T / sqrt(P)) (p Wv)

and finally logits = flatten(s or a) . FC2 + b2. There is no class token:
the head sees every patch token.
"""
import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from aavit.errors import ContractError, DimensionError
from aavit.rng import SplitMix64
from aavit.schemas.model import HeadKind, ModelConfig
from aavit.tensor import (
    Precision,
    Tensor,
    adaptive_avg_pool_1d,
    add,
    add_row,
    concat_cols,
    gelu,
    layer_norm,
    matmul,
    mean_last,
    reshape,
    scale,
    slice_cols,
    softmax_rowwise,
    transpose,
)

POS_EMBED_STD = 0.02

# (name, shape, init) where init is one of "uniform", "normal", "zeros", "ones"
ParamSpec = Tuple[str, Tuple[int, ...], str]


def parameter_specs(config: ModelConfig) -> List[ParamSpec]:
    """Every parameter tensor in canonical (checkpoint) order."""
    d, n, hidden = config.embed_dim, config.num_patches, config.encoder_hidden
    specs: List[ParamSpec] = [
        ("patch_embed.weight", (config.patch_dim, d), "uniform"),
        ("patch_embed.bias", (d,), "zeros"),
        ("pos_embed", (n, d), "normal"),
    ]
    for i in range(config.depth):
        block = f"blocks.{i}"
        specs += [
            (f"{block}.norm1.gain", (d,), "ones"),
            (f"{block}.norm1.bias", (d,), "zeros"),
        ]
        for proj in ("q", "k", "v", "o"):
            specs += [
                (f"{block}.attn.{proj}.weight", (d, d), "uniform"),
                (f"{block}.attn.{proj}.bias", (d,), "zeros"),
            ]
        specs += [
            (f"{block}.norm2.gain", (d,), "ones"),
            (f"{block}.norm2.bias", (d,), "zeros"),
            (f"{block}.mlp.fc1.weight", (d, hidden), "uniform"),
            (f"{block}.mlp.fc1.bias", (hidden,), "zeros"),
            (f"{block}.mlp.fc2.weight", (hidden, d), "uniform"),
            (f"{block}.mlp.fc2.bias", (d,), "zeros"),
        ]
    specs += [
        ("head.fc1.weight", (d, config.mlp_hidden), "uniform"),
        ("head.fc1.bias", (config.mlp_hidden,), "zeros"),
    ]
    if config.head_kind.attends:
        p = config.pool_out
        specs += [(f"head.attn.{proj}", (p, p), "uniform") for proj in ("q", "k", "v")]
    specs += [
        ("head.fc2.weight", (config.head_features, config.num_classes), "uniform"),
        ("head.fc2.bias", (config.num_classes,), "zeros"),
    ]
    return specs


def _initial_value(config: ModelConfig, name: str, shape: Tuple[int, ...], init: str) -> np.ndarray:
    if init == "zeros":
        return np.zeros(shape)
    if init == "ones":
        return np.ones(shape)
    # one stream per parameter name, so variants share whatever names they share
    rng = SplitMix64.for_stream(config.seed, name)
    if init == "normal":
        return rng.normal(shape, std=POS_EMBED_STD)
    bound = 1.0 / math.sqrt(shape[0])
    return (2.0 * rng.uniform(shape) - 1.0) * bound


class ModelParams:
    """Ordered mapping of parameter name to trainable tensor."""

    def __init__(self, config: ModelConfig, tensors: Dict[str, Tensor]):
        expected = parameter_specs(config)
        if [name for name, _, _ in expected] != list(tensors):
            raise ContractError("parameter names do not match the model config")
        for name, shape, _ in expected:
            if tensors[name].shape != shape:
                raise DimensionError(
                    f"parameter {name}: expected shape {list(shape)}, got {list(tensors[name].shape)}"
                )
        self.config = config
        self._tensors = dict(tensors)

    @classmethod
    def initialize(cls, config: ModelConfig) -> "ModelParams":
        return cls.from_arrays(
            config,
            {name: _initial_value(config, name, shape, init) for name, shape, init in parameter_specs(config)},
        )

    @classmethod
    def zeros(cls, config: ModelConfig) -> "ModelParams":
        return cls.from_arrays(config, {name: np.zeros(shape) for name, shape, _ in parameter_specs(config)})

    @classmethod
    def from_arrays(
        cls, config: ModelConfig, arrays: Dict[str, np.ndarray], requires_grad: bool = True
    ) -> "ModelParams":
        return cls(
            config,
            {
                name: Tensor(np.asarray(value), requires_grad=requires_grad, precision=config.precision)
                for name, value in arrays.items()
            },
        )

    def frozen(self) -> "ModelParams":
        """Copy that records no graph; for scoring only."""
        return ModelParams.from_arrays(self.config, self.arrays(), requires_grad=False)

    @property
    def precision(self) -> Precision:
        return self.config.precision

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self) -> List[Tuple[str, Tensor]]:
        return list(self._tensors.items())

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def count(self) -> int:
        return sum(t.data.size for t in self._tensors.values())

    def zero_grad(self) -> None:
        for tensor in self._tensors.values():
            tensor.zero_grad()


def _linear(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    return add_row(matmul(x, params[f"{prefix}.weight"]), params[f"{prefix}.bias"])


def patchify(image: Tensor, patch_size: int) -> Tensor:
    """Non-overlapping patches in row-major patch order, pixels row-major then channel."""
    if image.data.ndim != 3 or image.shape[2] != 3:
        raise DimensionError(f"patchify: expected H x W x 3, got {list(image.shape)}")
    height, width, _ = image.shape
    if height % patch_size or width % patch_size:
        raise DimensionError(
            f"patchify: image {height}x{width} is not divisible into {patch_size}x{patch_size} patches"
        )
    rows = (
        image.data.reshape(height // patch_size, patch_size, width // patch_size, patch_size, 3)
        .transpose(0, 2, 1, 3, 4)
        .reshape(-1, patch_size * patch_size * 3)
    )
    return Tensor(np.ascontiguousarray(rows), precision=image.precision)


def embed(patches: Tensor, params: ModelParams) -> Tensor:
    return add(_linear(patches, params, "patch_embed"), params["pos_embed"])


def multi_head_attention(
    x: Tensor,
    params: ModelParams,
    prefix: str,
    num_heads: int,
    attention_maps: Optional[List[np.ndarray]] = None,
) -> Tensor:
    q = _linear(x, params, f"{prefix}.q")
    k = _linear(x, params, f"{prefix}.k")
    v = _linear(x, params, f"{prefix}.v")
    head_dim = params.config.head_dim
    heads = []
    for h in range(num_heads):
        lo, hi = h * head_dim, (h + 1) * head_dim
        q_h, k_h, v_h = (slice_cols(t, lo, hi) for t in (q, k, v))
        weights = softmax_rowwise(scale(matmul(q_h, transpose(k_h)), 1.0 / math.sqrt(head_dim)))
        if attention_maps is not None:
            attention_maps.append(weights.data.copy())
        heads.append(matmul(weights, v_h))
    merged = heads[0] if num_heads == 1 else concat_cols(heads)
    return _linear(merged, params, f"{prefix}.o")


def encoder_forward(
    tokens: Tensor,
    params: ModelParams,
    attention_maps: Optional[List[np.ndarray]] = None,
) -> Tensor:
    config = params.config
    x = tokens
    for i in range(config.depth):
        block = f"blocks.{i}"
        normed = layer_norm(x, params[f"{block}.norm1.gain"], params[f"{block}.norm1.bias"])
        x = add(x, multi_head_attention(normed, params, f"{block}.attn", config.num_heads, attention_maps))
        normed = layer_norm(x, params[f"{block}.norm2.gain"], params[f"{block}.norm2.bias"])
        hidden = gelu(_linear(normed, params, f"{block}.mlp.fc1"))
        x = add(x, _linear(hidden, params, f"{block}.mlp.fc2"))
    return x


def _classify(features: Tensor, params: ModelParams) -> Tensor:
    flat = reshape(features, (1, features.data.size))
    logits = _linear(flat, params, "head.fc2")
    return reshape(logits, (params.config.num_classes,))


def head_baseline(tokens: Tensor, params: ModelParams) -> Tensor:
    if params.config.head_kind is not HeadKind.BASELINE_VIT:
        raise ContractError(f"head_baseline needs a BaselineViT model, got {params.config.head_kind.value}")
    u = gelu(_linear(tokens, params, "head.fc1"))
    return _classify(mean_last(u), params)


def head_aamlp(
    tokens: Tensor,
    params: ModelParams,
    attention_enabled: bool,
    attention_maps: Optional[List[np.ndarray]] = None,
) -> Tensor:
    kind = params.config.head_kind
    if not kind.pools or kind.attends != attention_enabled:
        raise ContractError(
            f"head_aamlp(attention_enabled={attention_enabled}) does not fit head kind {kind.value}"
        )
    pool_out = params.config.pool_out
    u = gelu(_linear(tokens, params, "head.fc1"))
    pooled = adaptive_avg_pool_1d(u, pool_out)
    if attention_enabled:
        q = matmul(pooled, params["head.attn.q"])
        k = matmul(pooled, params["head.attn.k"])
        v = matmul(pooled, params["head.attn.v"])
        weights = softmax_rowwise(scale(matmul(q, transpose(k)), 1.0 / math.sqrt(pool_out)))
        if attention_maps is not None:
            attention_maps.append(weights.data.copy())
        pooled = matmul(weights, v)
    return _classify(pooled, params)


def forward_logits(
    image: Tensor,
    params: ModelParams,
    attention_maps: Optional[List[np.ndarray]] = None,
) -> Tensor:
    config = params.config
    if image.shape != (config.image_size, config.image_size, 3):
        raise DimensionError(
            f"expected a {config.image_size}x{config.image_size}x3 image, got {list(image.shape)}"
        )
    if image.precision is not params.precision:
        image = Tensor(image.data, precision=params.precision)
    tokens = encoder_forward(embed(patchify(image, config.patch_size), params), params, attention_maps)
    if config.head_kind is HeadKind.BASELINE_VIT:
        return head_baseline(tokens, params)
    return head_aamlp(tokens, params, config.head_kind.attends, attention_maps)


def model_forward(image: Tensor, config: ModelConfig, params: ModelParams) -> Tensor:
    """Class probabilities for one image; index 0 is real access."""
    if params.config != config:
        raise ContractError("parameters were built for a different model config")
    return softmax_rowwise(forward_logits(image, params))


class AAViT:
    """A model config together with its parameters."""

    def __init__(self, config: ModelConfig, params: Optional[ModelParams] = None):
        self.config = config
        self.params = params if params is not None else ModelParams.initialize(config)
        if self.params.config != config:
            raise ContractError("parameters were built for a different model config")

    def logits(self, image: Tensor) -> Tensor:
        return forward_logits(image, self.params)

    def forward(self, image: Tensor) -> Tensor:
        return model_forward(image, self.config, self.params)

    __call__ = forward

    def score(self, image: Tensor) -> float:
        """Liveness score: probability of the real-access class."""
        return float(self.forward(image).data[0])

    def frozen(self) -> "AAViT":
        return AAViT(self.config, self.params.frozen())

    def zero_grad(self) -> None:
        self.params.zero_grad()
