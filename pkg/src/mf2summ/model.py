"""The forward model: projection adapters, sinusoidal positional encoding,
visual temporal self-attention with residual, bidirectional cross-modal
attention, alignment-guided masked self-attention fusion, and the three
prediction heads (importance, boundary offsets, center-ness).

Blocks are pre-norm Transformer blocks (LN -> attention -> residual ->
LN -> FFN -> residual); layer norm and the FFN sublayer can be switched off
for ablations. Masking is additive (large negative fill before softmax) so
forbidden attention weights are exactly zero.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict, field, replace
from pathlib import Path

import numpy as np

from . import tensor as tk
from .errors import ConfigError, ParseError, ShapeError
from .features import FeatureSequence
from .tensor import Tensor2

CHECKPOINT_MAGIC = b"MF2C"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    d_v: int = 1024
    d_a: int = 128
    d_model: int = 128
    n_heads: int = 4
    n_cross_layers: int = 1
    n_fusion_layers: int = 1
    align_window: int = 2
    dropout: float = 0.0
    head_hidden: int = 64
    ffn_mult: int = 2
    use_layer_norm: bool = True
    use_ffn: bool = True
    use_audio: bool = True
    use_align_mask: bool = True
    use_centerness: bool = True

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}"
            )
        if self.align_window < 0:
            raise ConfigError("align_window must be >= 0")
        if min(self.d_v, self.d_a, self.d_model, self.n_heads, self.head_hidden) < 1:
            raise ConfigError("model dimensions must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must be in [0, 1)")

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_heads


@dataclass
class FramePredictions:
    """Per-frame outputs; plain arrays for consumers past the model."""

    s: np.ndarray  # (T,) importance in (0,1)
    dl: np.ndarray  # (T,) left offset >= 0
    dr: np.ndarray  # (T,) right offset >= 0
    v: np.ndarray  # (T,) center-ness in (0,1)


@dataclass
class ForwardOutput:
    """Taped head outputs (each T x 1) plus collected attention maps."""

    s: Tensor2
    dl: Tensor2
    dr: Tensor2
    v: Tensor2 | None
    attention: list[np.ndarray] = field(default_factory=list)

    def predictions(self) -> FramePredictions:
        t = self.s.rows
        v = self.v.data[:, 0] if self.v is not None else np.ones(t)
        return FramePredictions(
            s=self.s.data[:, 0].copy(),
            dl=self.dl.data[:, 0].copy(),
            dr=self.dr.data[:, 0].copy(),
            v=v.copy(),
        )


def positional_encoding(T: int, d: int) -> Tensor2:
    """Fixed sinusoidal encoding: sin at even dims, cos at odd dims."""
    if d % 2 != 0:
        raise ConfigError(f"positional encoding dimension must be even, got {d}")
    pos = np.arange(T, dtype=np.float64)[:, None]
    i = np.arange(d // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / d)
    pe = np.empty((T, d))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return tk.tensor(pe)


def build_alignment_mask(T_v: int, T_a: int, w: int) -> np.ndarray:
    """Joint (T_v+T_a) square boolean mask: global attention within each
    modality, cross-modal attention only within +-w frames. Visual block
    comes first."""
    n = T_v + T_a
    mask = np.zeros((n, n), dtype=bool)
    mask[:T_v, :T_v] = True
    mask[T_v:, T_v:] = True
    iv = np.arange(T_v)[:, None]
    ja = np.arange(T_a)[None, :]
    cross = np.abs(iv - ja) <= w
    mask[:T_v, T_v:] = cross
    mask[T_v:, :T_v] = cross.T
    return mask


# ---------------------------------------------------------------------------
# Parameters


def _block_param_shapes(cfg: ModelConfig, prefix: str) -> list[tuple[str, tuple[int, int]]]:
    d, dk = cfg.d_model, cfg.d_k
    shapes: list[tuple[str, tuple[int, int]]] = []
    for h in range(cfg.n_heads):
        shapes += [
            (f"{prefix}.h{h}.wq", (d, dk)),
            (f"{prefix}.h{h}.wk", (d, dk)),
            (f"{prefix}.h{h}.wv", (d, dk)),
        ]
    shapes.append((f"{prefix}.wo", (d, d)))
    if cfg.use_layer_norm:
        shapes += [(f"{prefix}.ln1.g", (1, d)), (f"{prefix}.ln1.b", (1, d))]
    if cfg.use_ffn:
        ff = cfg.ffn_mult * d
        if cfg.use_layer_norm:
            shapes += [(f"{prefix}.ln2.g", (1, d)), (f"{prefix}.ln2.b", (1, d))]
        shapes += [
            (f"{prefix}.ffn.w1", (d, ff)),
            (f"{prefix}.ffn.b1", (1, ff)),
            (f"{prefix}.ffn.w2", (ff, d)),
            (f"{prefix}.ffn.b2", (1, d)),
        ]
    return shapes


def _head_param_shapes(cfg: ModelConfig, prefix: str, n_out: int) -> list[tuple[str, tuple[int, int]]]:
    return [
        (f"{prefix}.w1", (cfg.d_model, cfg.head_hidden)),
        (f"{prefix}.b1", (1, cfg.head_hidden)),
        (f"{prefix}.w2", (cfg.head_hidden, n_out)),
        (f"{prefix}.b2", (1, n_out)),
    ]


def param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, int]]]:
    """Ordered (name, shape) inventory; a pure function of the config."""
    shapes: list[tuple[str, tuple[int, int]]] = [
        ("vis_in.w", (cfg.d_v, cfg.d_model)),
        ("vis_in.b", (1, cfg.d_model)),
    ]
    if cfg.use_audio:
        shapes += [("aud_in.w", (cfg.d_a, cfg.d_model)), ("aud_in.b", (1, cfg.d_model))]
    shapes += _block_param_shapes(cfg, "vis_self")
    if cfg.use_audio:
        for i in range(cfg.n_cross_layers):
            shapes += _block_param_shapes(cfg, f"cross{i}.vis")
            shapes += _block_param_shapes(cfg, f"cross{i}.aud")
    for i in range(cfg.n_fusion_layers):
        shapes += _block_param_shapes(cfg, f"fusion{i}")
    shapes += _head_param_shapes(cfg, "head.cls", 1)
    shapes += _head_param_shapes(cfg, "head.reg", 2)
    if cfg.use_centerness:
        shapes += _head_param_shapes(cfg, "head.ctr", 1)
    return shapes


class ModelParams(dict):
    """Ordered name -> Tensor2 mapping of every learnable weight."""

    def n_scalars(self) -> int:
        return sum(t.data.size for t in self.values())

    def validate(self, cfg: ModelConfig) -> None:
        expected = dict(param_shapes(cfg))
        if set(expected) != set(self):
            missing = sorted(set(expected) - set(self))
            extra = sorted(set(self) - set(expected))
            raise ConfigError(f"params inconsistent with config: missing={missing} extra={extra}")
        for name, shape in expected.items():
            if self[name].shape != shape:
                raise ConfigError(
                    f"param {name}: shape {self[name].shape}, config requires {shape}"
                )


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Xavier-uniform matrices, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    params = ModelParams()
    for name, (r, c) in param_shapes(cfg):
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("b", "b1", "b2"):
            params[name] = tk.zeros(r, c)
        elif leaf == "g":
            params[name] = tk.full(r, c, 1.0)
        else:
            bound = np.sqrt(6.0 / (r + c))
            params[name] = tk.tensor(rng.uniform(-bound, bound, size=(r, c)))
    return params


# ---------------------------------------------------------------------------
# Attention blocks


def _dropout(x: Tensor2, rate: float, rng: np.random.Generator | None) -> Tensor2:
    if rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return tk.mul(x, tk.tensor(keep))


def multi_head_attention(
    x_target: Tensor2,
    x_source: Tensor2,
    params: ModelParams,
    prefix: str,
    cfg: ModelConfig,
    mask: np.ndarray | None = None,
    collect: list[np.ndarray] | None = None,
) -> Tensor2:
    """softmax(Q K^T / sqrt(d_k)) V per head, heads concatenated, output
    projection. `mask` (target_len x source_len) restricts attention; a
    masked position gets exactly zero weight."""
    if x_target.cols != cfg.d_model or x_source.cols != cfg.d_model:
        raise ShapeError(
            f"attention inputs must be T x d_model={cfg.d_model}, "
            f"got {x_target.shape} and {x_source.shape}"
        )
    if mask is not None:
        if mask.shape != (x_target.rows, x_source.rows):
            raise ShapeError(
                f"mask shape {mask.shape} != ({x_target.rows}, {x_source.rows})"
            )
        if not mask.any(axis=1).all():
            raise tk.ContractError("attention mask has an all-false row")
    inv_sqrt_dk = 1.0 / np.sqrt(cfg.d_k)
    heads: Tensor2 | None = None
    for h in range(cfg.n_heads):
        q = tk.matmul(x_target, params[f"{prefix}.h{h}.wq"])
        k = tk.matmul(x_source, params[f"{prefix}.h{h}.wk"])
        v = tk.matmul(x_source, params[f"{prefix}.h{h}.wv"])
        scores = tk.scale(tk.matmul(q, tk.transpose(k)), inv_sqrt_dk)
        if mask is not None:
            scores = tk.masked_fill(scores, mask)
        weights = tk.softmax_rows(scores)
        if collect is not None:
            collect.append(weights.data)
        out_h = tk.matmul(weights, v)
        heads = out_h if heads is None else tk.concat_cols(heads, out_h)
    return tk.matmul(heads, params[f"{prefix}.wo"])


def _maybe_ln(x: Tensor2, params: ModelParams, name: str, cfg: ModelConfig) -> Tensor2:
    if not cfg.use_layer_norm:
        return x
    normed = tk.layer_norm_rows(x)
    return tk.add_bias(tk.mul_bias(normed, params[f"{name}.g"]), params[f"{name}.b"])


def attention_block(
    x_target: Tensor2,
    x_source: Tensor2,
    params: ModelParams,
    prefix: str,
    cfg: ModelConfig,
    mask: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
    collect: list[np.ndarray] | None = None,
) -> Tensor2:
    """Pre-norm block. Self-attention when x_target is x_source; cross-
    attention otherwise (the source stream is normed with the same ln1)."""
    q_in = _maybe_ln(x_target, params, f"{prefix}.ln1", cfg)
    kv_in = q_in if x_source is x_target else _maybe_ln(x_source, params, f"{prefix}.ln1", cfg)
    att = multi_head_attention(q_in, kv_in, params, prefix, cfg, mask=mask, collect=collect)
    x = tk.add(x_target, _dropout(att, cfg.dropout, rng))
    if cfg.use_ffn:
        h = _maybe_ln(x, params, f"{prefix}.ln2", cfg)
        h = tk.relu(tk.add_bias(tk.matmul(h, params[f"{prefix}.ffn.w1"]), params[f"{prefix}.ffn.b1"]))
        h = tk.add_bias(tk.matmul(h, params[f"{prefix}.ffn.w2"]), params[f"{prefix}.ffn.b2"])
        x = tk.add(x, _dropout(h, cfg.dropout, rng))
    return x


def cross_modal_attention(
    x_target: Tensor2,
    x_source: Tensor2,
    params: ModelParams,
    prefix: str,
    cfg: ModelConfig,
) -> Tensor2:
    """Bare cross-modal attention (no residual/FFN), exposed for testing
    against the brute-force formula."""
    return multi_head_attention(x_target, x_source, params, prefix, cfg)


def aligned_self_attention(
    z: Tensor2,
    mask: np.ndarray,
    params: ModelParams,
    prefix: str,
    cfg: ModelConfig,
    collect: list[np.ndarray] | None = None,
) -> Tensor2:
    """Masked self-attention over the joint sequence."""
    return multi_head_attention(z, z, params, prefix, cfg, mask=mask, collect=collect)


def _head(x: Tensor2, params: ModelParams, prefix: str) -> Tensor2:
    h = tk.relu(tk.add_bias(tk.matmul(x, params[f"{prefix}.w1"]), params[f"{prefix}.b1"]))
    return tk.add_bias(tk.matmul(h, params[f"{prefix}.w2"]), params[f"{prefix}.b2"])


def forward(
    visual: FeatureSequence,
    audio: FeatureSequence,
    params: ModelParams,
    cfg: ModelConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
    collect_attention: bool = False,
) -> ForwardOutput:
    """Full pipeline. In eval mode (train=False) the computation is pure and
    deterministic; in train mode record onto the active GradTape and apply
    dropout using `rng`."""
    if visual.T != audio.T:
        raise ShapeError(f"modality length mismatch: visual T={visual.T}, audio T={audio.T}")
    if visual.dim != cfg.d_v or audio.dim != cfg.d_a:
        raise ConfigError(
            f"feature dims ({visual.dim}, {audio.dim}) != config ({cfg.d_v}, {cfg.d_a})"
        )
    params.validate(cfg)
    t = visual.T
    drop_rng = rng if train else None
    attn_maps: list[np.ndarray] | None = [] if collect_attention else None

    pe = positional_encoding(t, cfg.d_model)
    xv = tk.tensor(visual.data.astype(np.float64))
    xv = tk.add_bias(tk.matmul(xv, params["vis_in.w"]), params["vis_in.b"])
    xv = tk.add(xv, pe)
    # temporal self-attention with residual: x = w + v
    xv = attention_block(xv, xv, params, "vis_self", cfg, rng=drop_rng, collect=attn_maps)

    if cfg.use_audio:
        xa = tk.tensor(audio.data.astype(np.float64))
        xa = tk.add_bias(tk.matmul(xa, params["aud_in.w"]), params["aud_in.b"])
        xa = tk.add(xa, pe)
        for i in range(cfg.n_cross_layers):
            nv = attention_block(xv, xa, params, f"cross{i}.vis", cfg, rng=drop_rng, collect=attn_maps)
            na = attention_block(xa, xv, params, f"cross{i}.aud", cfg, rng=drop_rng, collect=attn_maps)
            xv, xa = nv, na
        z = tk.concat_rows(xv, xa)
        if cfg.use_align_mask:
            mask = build_alignment_mask(t, t, cfg.align_window)
        else:
            mask = np.ones((2 * t, 2 * t), dtype=bool)
    else:
        z = xv
        mask = np.ones((t, t), dtype=bool)

    for i in range(cfg.n_fusion_layers):
        z = attention_block(z, z, params, f"fusion{i}", cfg, mask=mask, rng=drop_rng, collect=attn_maps)

    fused = tk.slice_rows(z, 0, t)  # visual positions carry the frame targets

    s = tk.sigmoid(_head(fused, params, "head.cls"))
    deltas = tk.softplus(_head(fused, params, "head.reg"))
    dl = tk.slice_cols(deltas, 0, 1)
    dr = tk.slice_cols(deltas, 1, 2)
    v = tk.sigmoid(_head(fused, params, "head.ctr")) if cfg.use_centerness else None
    return ForwardOutput(s=s, dl=dl, dr=dr, v=v, attention=attn_maps or [])


# ---------------------------------------------------------------------------
# Checkpoints (header + named tensors, same binary conventions as feature
# files: little-endian, fixed magic, explicit version)


def save_checkpoint(
    params: ModelParams,
    state: tk.AdamState | None,
    path,
    cfg: ModelConfig,
    meta: dict | None = None,
) -> None:
    names = list(params.keys())
    tensors: list[np.ndarray] = [params[n].data for n in names]
    index = [{"name": n, "rows": params[n].rows, "cols": params[n].cols} for n in names]
    opt = None
    if state is not None:
        opt = {
            "lr": state.lr,
            "beta1": state.beta1,
            "beta2": state.beta2,
            "eps": state.eps,
            "t": state.t,
        }
        for n in names:
            if n in state.m:
                index.append({"name": f"adam.m.{n}", "rows": state.m[n].shape[0], "cols": state.m[n].shape[1]})
                tensors.append(state.m[n])
                index.append({"name": f"adam.v.{n}", "rows": state.v[n].shape[0], "cols": state.v[n].shape[1]})
                tensors.append(state.v[n])
    header = {
        "config": asdict(cfg),
        "tensors": index,
        "adam": opt,
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<HI", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        for arr in tensors:
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, tk.AdamState | None, ModelConfig, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < 10 or raw[:4] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: not a checkpoint file (bad magic)")
    version, blob_len = struct.unpack_from("<HI", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[10 : 10 + blob_len].decode())
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ParseError(f"{path}: corrupt checkpoint header: {e}") from e
    cfg = ModelConfig(**header["config"])
    offset = 10 + blob_len
    arrays: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        n_bytes = entry["rows"] * entry["cols"] * 8
        if offset + n_bytes > len(raw):
            raise ParseError(f"{path}: truncated checkpoint payload at tensor {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8", count=entry["rows"] * entry["cols"], offset=offset).reshape(entry["rows"], entry["cols"])
        offset += n_bytes
    if offset != len(raw):
        raise ParseError(f"{path}: {len(raw) - offset} trailing bytes in checkpoint")
    params = ModelParams()
    for name, shape in param_shapes(cfg):
        if name not in arrays:
            raise ParseError(f"{path}: checkpoint missing parameter {name}")
        params[name] = tk.tensor(arrays[name])
    params.validate(cfg)
    state = None
    if header.get("adam") is not None:
        opt = header["adam"]
        state = tk.AdamState(lr=opt["lr"], beta1=opt["beta1"], beta2=opt["beta2"], eps=opt["eps"], t=opt["t"])
        for name in params:
            mk, vk = f"adam.m.{name}", f"adam.v.{name}"
            if mk in arrays:
                state.m[name] = arrays[mk].copy()
                state.v[name] = arrays[vk].copy()
    return params, state, cfg, header.get("meta", {})


def config_with_ablations(
    cfg: ModelConfig,
    no_audio: bool = False,
    no_align_mask: bool = False,
    no_centerness: bool = False,
) -> ModelConfig:
    return replace(
        cfg,
        use_audio=cfg.use_audio and not no_audio,
        use_align_mask=cfg.use_align_mask and not no_align_mask,
        use_centerness=cfg.use_centerness and not no_centerness,
    )
