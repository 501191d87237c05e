"""Compact vision transformer for orientation classification.

Two variants share one code path: "flat2d" consumes a single composed frame
(grid formats), "stacked3d" patch-embeds every frame and attends globally
over all frame tokens with an additive learned frame embedding. Parameters
live in an ordered name -> Tensor mapping whose definition order is the
canonical serialization order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat, gelu, layer_norm, no_grad, softmax
from .imaging import FormatError
from .rng import SplitMix64, derive_seed

VARIANTS = ("flat2d", "stacked3d")


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "flat2d"
    frames: int = 1
    height: int = 96
    width: int = 96
    patch: int = 16
    embed_dim: int = 64
    depth: int = 4
    heads: int = 4
    mlp_ratio: int = 4
    n_classes: int = 8

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "flat2d" and self.frames != 1:
            raise ValueError("flat2d requires exactly 1 frame")
        if self.height % self.patch or self.width % self.patch:
            raise ValueError(
                f"patch {self.patch} must divide {self.height}x{self.width}")
        if self.embed_dim % self.heads:
            raise ValueError("heads must divide embed_dim")

    @property
    def patches_per_frame(self) -> int:
        return (self.height // self.patch) * (self.width // self.patch)

    @property
    def n_tokens(self) -> int:
        return self.frames * self.patches_per_frame

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter order and shapes for a config."""
    d, p = cfg.embed_dim, cfg.patch
    hidden = cfg.mlp_ratio * d
    shapes: dict[str, tuple[int, ...]] = {
        "patch_w": (p * p * 3, d),
        "patch_b": (d,),
        "pos": (cfg.n_tokens, d),
        "cls": (1, 1, d),
    }
    if cfg.variant == "stacked3d":
        shapes["frame_embed"] = (cfg.frames, d)
    for b in range(cfg.depth):
        shapes[f"blk{b}.ln1_s"] = (d,)
        shapes[f"blk{b}.ln1_b"] = (d,)
        shapes[f"blk{b}.wq"] = (d, d)
        shapes[f"blk{b}.bq"] = (d,)
        shapes[f"blk{b}.wk"] = (d, d)
        shapes[f"blk{b}.bk"] = (d,)
        shapes[f"blk{b}.wv"] = (d, d)
        shapes[f"blk{b}.bv"] = (d,)
        shapes[f"blk{b}.wo"] = (d, d)
        shapes[f"blk{b}.bo"] = (d,)
        shapes[f"blk{b}.ln2_s"] = (d,)
        shapes[f"blk{b}.ln2_b"] = (d,)
        shapes[f"blk{b}.w1"] = (d, hidden)
        shapes[f"blk{b}.b1"] = (hidden,)
        shapes[f"blk{b}.w2"] = (hidden, d)
        shapes[f"blk{b}.b2"] = (d,)
    shapes["ln_f_s"] = (d,)
    shapes["ln_f_b"] = (d,)
    shapes["head_w"] = (d, cfg.n_classes)
    shapes["head_b"] = (cfg.n_classes,)
    return shapes


def param_count(cfg: ModelConfig) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(cfg).values())


def _trunc_normal(rng: SplitMix64, shape: tuple[int, ...], sigma: float) -> np.ndarray:
    out = np.empty(int(np.prod(shape)), dtype=np.float64)
    for i in range(out.size):
        z = rng.normal()
        while abs(z) > 2.0:
            z = rng.normal()
        out[i] = z * sigma
    return out.reshape(shape)


def init_params(cfg: ModelConfig, seed: int) -> dict[str, Tensor]:
    """Truncated-normal (sigma 0.02) projections, zero biases and head."""
    rng = SplitMix64(derive_seed(seed, "init"))
    params: dict[str, Tensor] = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(("_s",)) and ("ln" in name):
            data = np.ones(shape)
        elif name in ("head_w", "head_b") or name.endswith(
                ("_b", ".bq", ".bk", ".bv", ".bo", ".b1", ".b2")):
            data = np.zeros(shape)
        else:
            data = _trunc_normal(rng, shape, 0.02)
        params[name] = Tensor(data)
    return params


def patchify(cfg: ModelConfig, x: np.ndarray) -> np.ndarray:
    """(N, T, H, W, 3) -> (N, tokens, patch*patch*3), frame-major then row-major."""
    n = x.shape[0]
    p = cfg.patch
    gh, gw = cfg.height // p, cfg.width // p
    x = x.reshape(n, cfg.frames, gh, p, gw, p, 3)
    x = x.transpose(0, 1, 2, 4, 3, 5, 6)
    return x.reshape(n, cfg.frames * gh * gw, p * p * 3)


def _attention(cfg: ModelConfig, params: dict[str, Tensor], b: int, x: Tensor) -> Tensor:
    n, t = x.shape[0], x.shape[1]
    h, hd = cfg.heads, cfg.head_dim
    q = (x @ params[f"blk{b}.wq"] + params[f"blk{b}.bq"])
    k = (x @ params[f"blk{b}.wk"] + params[f"blk{b}.bk"])
    v = (x @ params[f"blk{b}.wv"] + params[f"blk{b}.bv"])
    q = q.reshape(n, t, h, hd).transpose((0, 2, 1, 3))
    k = k.reshape(n, t, h, hd).transpose((0, 2, 1, 3))
    v = v.reshape(n, t, h, hd).transpose((0, 2, 1, 3))
    scores = (q @ k.transpose((0, 1, 3, 2))) * (hd ** -0.5)
    attn = softmax(scores, axis=-1)
    out = (attn @ v).transpose((0, 2, 1, 3)).reshape(n, t, cfg.embed_dim)
    return out @ params[f"blk{b}.wo"] + params[f"blk{b}.bo"]


def forward(cfg: ModelConfig, params: dict[str, Tensor], x: np.ndarray) -> Tensor:
    """Logits for one composed input (T, H, W, 3) or a batch (N, T, H, W, 3).

    Returns a Tensor of shape (n_classes,) or (N, n_classes); run inside
    autodiff.no_grad() for inference.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 4
    if single:
        x = x[None]
    if x.shape[1:] != (cfg.frames, cfg.height, cfg.width, 3):
        raise ValueError(
            f"input shape {x.shape[1:]} does not match config "
            f"({cfg.frames}, {cfg.height}, {cfg.width}, 3)")
    n = x.shape[0]

    tokens = Tensor(patchify(cfg, x)) @ params["patch_w"] + params["patch_b"]
    tokens = tokens + params["pos"]
    if cfg.variant == "stacked3d":
        per_frame = params["frame_embed"].reshape(cfg.frames, 1, cfg.embed_dim)
        frame_add = per_frame.expand(
            (cfg.frames, cfg.patches_per_frame, cfg.embed_dim)).reshape(
            cfg.n_tokens, cfg.embed_dim)
        tokens = tokens + frame_add
    cls = params["cls"].expand((n, 1, cfg.embed_dim))
    h = concat([cls, tokens], axis=1)

    for b in range(cfg.depth):
        normed = layer_norm(h, params[f"blk{b}.ln1_s"], params[f"blk{b}.ln1_b"])
        h = h + _attention(cfg, params, b, normed)
        normed = layer_norm(h, params[f"blk{b}.ln2_s"], params[f"blk{b}.ln2_b"])
        mlp = gelu(normed @ params[f"blk{b}.w1"] + params[f"blk{b}.b1"])
        h = h + (mlp @ params[f"blk{b}.w2"] + params[f"blk{b}.b2"])

    h = layer_norm(h, params["ln_f_s"], params["ln_f_b"])
    logits = h.take_token(0) @ params["head_w"] + params["head_b"]
    if single:
        logits = logits.reshape(cfg.n_classes)
    return logits


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log softmax probability of the true class.

    Max-subtracted for stability. labels: int or int array matching the
    batch dimension.
    """
    if logits.data.ndim == 1:
        logits = logits.reshape(1, logits.data.shape[0])
        labels = np.array([labels], dtype=np.intp)
    else:
        labels = np.asarray(labels, dtype=np.intp)
    n, c = logits.data.shape
    shifted = logits - Tensor(logits.data.max(axis=-1, keepdims=True))
    log_z = shifted.exp().sum(axis=-1, keepdims=True).log()
    log_probs = shifted - log_z
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    return (log_probs * Tensor(onehot)).sum() * (-1.0 / n)


def predict(cfg: ModelConfig, params: dict[str, Tensor], x: np.ndarray) -> int:
    """Argmax orientation bin; ties break toward the lowest index."""
    with no_grad():
        logits = forward(cfg, params, x)
    return int(np.argmax(logits.data))


def predict_batch(cfg: ModelConfig, params: dict[str, Tensor],
                  x: np.ndarray) -> np.ndarray:
    with no_grad():
        logits = forward(cfg, params, x)
    return np.argmax(logits.data, axis=-1)


# -- serialization --------------------------------------------------------

_HEADER_PREFIX = "panorient-model v1"


def _config_tokens(cfg: ModelConfig) -> str:
    return (f"variant={cfg.variant} frames={cfg.frames} height={cfg.height} "
            f"width={cfg.width} patch={cfg.patch} embed_dim={cfg.embed_dim} "
            f"depth={cfg.depth} heads={cfg.heads} mlp_ratio={cfg.mlp_ratio} "
            f"n_classes={cfg.n_classes}")


def save_params(cfg: ModelConfig, params: dict[str, Tensor], path,
                extra: dict[str, str] | None = None) -> None:
    """One ASCII header line, then the flat little-endian float64 parameters.

    Parameters are concatenated in the canonical param_shapes order. `extra`
    key=value tokens (training metadata) are echoed into the header.
    """
    count = param_count(cfg)
    tokens = [_HEADER_PREFIX, _config_tokens(cfg)]
    for key, val in (extra or {}).items():
        tokens.append(f"{key}={val}")
    tokens.append(f"count={count}")
    header = " ".join(tokens) + "\n"
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        for name in param_shapes(cfg):
            f.write(np.ascontiguousarray(params[name].data, dtype="<f8").tobytes())


def read_model_header(path) -> dict[str, str]:
    """Parse the header line into a key -> value dict (config echo + extras)."""
    with open(path, "rb") as f:
        line = f.readline().decode("ascii").strip()
    if not line.startswith(_HEADER_PREFIX):
        raise FormatError(f"not a model file: header starts {line[:32]!r}")
    fields: dict[str, str] = {}
    for tok in line[len(_HEADER_PREFIX):].split():
        if "=" not in tok:
            raise FormatError(f"malformed header token {tok!r}")
        key, val = tok.split("=", 1)
        fields[key] = val
    return fields


def config_from_header(fields: dict[str, str]) -> ModelConfig:
    return ModelConfig(
        variant=fields["variant"], frames=int(fields["frames"]),
        height=int(fields["height"]), width=int(fields["width"]),
        patch=int(fields["patch"]), embed_dim=int(fields["embed_dim"]),
        depth=int(fields["depth"]), heads=int(fields["heads"]),
        mlp_ratio=int(fields["mlp_ratio"]), n_classes=int(fields["n_classes"]))


def load_params(cfg: ModelConfig, path) -> dict[str, Tensor]:
    """Load parameters, validating the header against the given config."""
    fields = read_model_header(path)
    stored = config_from_header(fields)
    if stored != cfg:
        raise FormatError(
            f"model config mismatch: file holds {stored}, expected {cfg}")
    expected = param_count(cfg)
    if int(fields["count"]) != expected:
        raise FormatError(
            f"header count {fields['count']} != config count {expected}")
    with open(path, "rb") as f:
        f.readline()
        raw = np.frombuffer(f.read(), dtype="<f8")
    if raw.size != expected:
        raise FormatError(
            f"parameter payload holds {raw.size} values, expected {expected}")
    params: dict[str, Tensor] = {}
    offset = 0
    for name, shape in param_shapes(cfg).items():
        size = int(np.prod(shape))
        params[name] = Tensor(raw[offset:offset + size].reshape(shape).copy())
        offset += size
    return params


def config_for_format(fmt_spec, variant: str | None = None,
                      patch: int | None = None, **overrides) -> ModelConfig:
    """Model config matched to a composer FormatSpec's tensor shape."""
    frames, h, w, _ = fmt_spec.tensor_shape
    if variant is None:
        variant = "flat2d" if frames == 1 else "stacked3d"
    if patch is None:
        patch = fmt_spec.cell  # one token per composed cell
    cfg = ModelConfig(variant=variant, frames=frames, height=h, width=w,
                      patch=patch, **overrides)
    return cfg


def clone_params(params: dict[str, Tensor]) -> dict[str, Tensor]:
    return {name: Tensor(t.data.copy()) for name, t in params.items()}
