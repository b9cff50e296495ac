"""Multimodal windowed-attention classifier with per-block prune state.

Parameters live in one flat ``name -> Tensor`` mapping so that surgery,
aggregation, freezing and serialization all operate on the same view.
Names follow ``stages.{s}.blocks.{b}.{attn|mlp|norm1|norm2}.*``; the
patch-merging layer that feeds stage ``s`` is ``stages.{s}.downsample.*``.
"""

from __future__ import annotations

import copy
import zlib
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import autograd as ag
from .autograd import DimensionError, Tensor


class ConfigError(ValueError):
    """Invalid model / run configuration."""


@dataclass
class ModelConfig:
    image_size: int = 32
    patch_size: int = 4
    in_chans: int = 3
    embed_dim: int = 32
    depths: tuple[int, ...] = (2, 2)
    num_heads: tuple[int, ...] = (2, 4)
    window_size: int = 4
    mlp_ratio: int = 4
    num_classes: int = 7
    use_shift: bool = True
    use_rel_pos_bias: bool = True
    sex_vocab: int = 3
    age_vocab: int = 22
    loc_vocab: int = 16
    fusion_weights: tuple[float, float, float, float] = (0.85, 0.05, 0.05, 0.05)
    # "ratio": r groups of stage_dim channels; "width": stage_dim groups of r channels
    mlp_grouping: str = "width"
    ln_eps: float = 1e-5
    # fixed input normalization (x - mean) / std applied before patch embedding
    pixel_mean: float = 0.5
    pixel_std: float = 0.25
    seed: int = 0

    def __post_init__(self):
        self.depths = tuple(int(d) for d in self.depths)
        self.num_heads = tuple(int(h) for h in self.num_heads)
        self.fusion_weights = tuple(float(w) for w in self.fusion_weights)
        self.validate()

    def validate(self) -> None:
        if self.image_size % self.patch_size:
            raise ConfigError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if len(self.depths) != len(self.num_heads) or not self.depths:
            raise ConfigError("depths and num_heads must be non-empty and of equal length")
        if any(d < 0 for d in self.depths) or any(h < 1 for h in self.num_heads):
            raise ConfigError("depths must be >= 0 and num_heads >= 1")
        if len(self.fusion_weights) != 4 or abs(sum(self.fusion_weights) - 1.0) > 1e-9:
            raise ConfigError(f"fusion_weights must be 4 values summing to 1, got {self.fusion_weights}")
        if self.mlp_grouping not in ("ratio", "width"):
            raise ConfigError(f"mlp_grouping must be 'ratio' or 'width', got {self.mlp_grouping!r}")
        if self.mlp_ratio < 1 or min(self.sex_vocab, self.age_vocab, self.loc_vocab) < 1:
            raise ConfigError("mlp_ratio and vocab sizes must be positive")
        for s in range(self.num_stages):
            g, dim, heads = self.grid(s), self.stage_dim(s), self.num_heads[s]
            if g < 1 or (s > 0 and self.grid(s - 1) % 2):
                raise ConfigError(f"token grid cannot be halved before stage {s}")
            if self.depths[s] and g % self.window_size:
                raise ConfigError(f"stage {s} grid {g} not divisible by window {self.window_size}")
            if dim % heads:
                raise ConfigError(f"stage {s} dim {dim} not divisible by {heads} heads")

    @property
    def num_stages(self) -> int:
        return len(self.depths)

    def grid(self, stage: int) -> int:
        return (self.image_size // self.patch_size) >> stage

    def stage_dim(self, stage: int) -> int:
        return self.embed_dim * 2 ** stage

    def head_dim(self, stage: int) -> int:
        return self.stage_dim(stage) // self.num_heads[stage]

    def mlp_hidden(self, stage: int) -> int:
        return self.mlp_ratio * self.stage_dim(stage)

    def group_size(self, stage: int) -> int:
        return self.stage_dim(stage) if self.mlp_grouping == "ratio" else self.mlp_ratio

    @property
    def feature_dim(self) -> int:
        return self.stage_dim(self.num_stages - 1)

    def shift_size(self, stage: int, block: int) -> int:
        # a single window per side has nothing to exchange across borders
        if not self.use_shift or block % 2 == 0 or self.grid(stage) <= self.window_size:
            return 0
        return self.window_size // 2

    def blocks(self) -> list[tuple[int, int]]:
        return [(s, b) for s in range(self.num_stages) for b in range(self.depths[s])]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["depths"] = list(self.depths)
        d["num_heads"] = list(self.num_heads)
        d["fusion_weights"] = list(self.fusion_weights)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**dict(d))


@dataclass
class BlockPruneState:
    kept_heads: tuple[int, ...]
    kept_channels: tuple[int, ...]

    @property
    def msa_is_identity(self) -> bool:
        return not self.kept_heads

    @property
    def mlp_is_identity(self) -> bool:
        return not self.kept_channels

    def to_dict(self) -> dict:
        return {"kept_heads": list(self.kept_heads), "kept_channels": list(self.kept_channels)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BlockPruneState":
        return cls(tuple(int(i) for i in d["kept_heads"]), tuple(int(i) for i in d["kept_channels"]))


@dataclass(frozen=True)
class TabularInput:
    sex_id: int = 0
    age_bucket_id: int = 0
    localization_id: int = 0


def tabular_array(tab) -> np.ndarray:
    """Coerce a sequence of TabularInput (or an (B, 3) int array) to int64 (B, 3)."""
    if isinstance(tab, np.ndarray):
        arr = tab.astype(np.int64)
    else:
        arr = np.array([[t.sex_id, t.age_bucket_id, t.localization_id] for t in tab], dtype=np.int64)
    return arr.reshape(-1, 3)


def block_prefix(stage: int, block: int) -> str:
    return f"stages.{stage}.blocks.{block}"


MSA_KEYS = ("w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o", "rel_pos")
MLP_KEYS = ("w1", "b1", "w2", "b2")


def param_stage(name: str) -> int | None:
    """Stage that owns a parameter (patch embedding belongs to stage 0)."""
    if name.startswith("patch_"):
        return 0
    if name.startswith("stages."):
        return int(name.split(".")[1])
    return None


# ---------------------------------------------------------------- init

def _rng_for(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, key])))


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) truncated to +/- 2 std by resampling."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return (out * std).astype(np.float32)


def _param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    e0, p, w = cfg.embed_dim, cfg.patch_size, cfg.window_size
    shapes["patch_embed.weight"] = (cfg.in_chans * p * p, e0)
    shapes["patch_embed.bias"] = (e0,)
    shapes["patch_norm.gamma"] = (e0,)
    shapes["patch_norm.beta"] = (e0,)
    for s in range(cfg.num_stages):
        e = cfg.stage_dim(s)
        if s > 0:
            shapes[f"stages.{s}.downsample.norm.gamma"] = (2 * e,)
            shapes[f"stages.{s}.downsample.norm.beta"] = (2 * e,)
            shapes[f"stages.{s}.downsample.reduction"] = (2 * e, e)
        hd, c = cfg.num_heads[s] * cfg.head_dim(s), cfg.mlp_hidden(s)
        for b in range(cfg.depths[s]):
            pre = block_prefix(s, b)
            for n in ("norm1", "norm2"):
                shapes[f"{pre}.{n}.gamma"] = (e,)
                shapes[f"{pre}.{n}.beta"] = (e,)
            for n in ("q", "k", "v"):
                shapes[f"{pre}.attn.w_{n}"] = (e, hd)
                shapes[f"{pre}.attn.b_{n}"] = (hd,)
            shapes[f"{pre}.attn.w_o"] = (hd, e)
            shapes[f"{pre}.attn.b_o"] = (e,)
            if cfg.use_rel_pos_bias:
                shapes[f"{pre}.attn.rel_pos"] = ((2 * w - 1) ** 2, cfg.num_heads[s])
            shapes[f"{pre}.mlp.w1"] = (e, c)
            shapes[f"{pre}.mlp.b1"] = (c,)
            shapes[f"{pre}.mlp.w2"] = (c, e)
            shapes[f"{pre}.mlp.b2"] = (e,)
    f = cfg.feature_dim
    shapes["norm.gamma"] = (f,)
    shapes["norm.beta"] = (f,)
    shapes["tab.sex"] = (cfg.sex_vocab, f)
    shapes["tab.age"] = (cfg.age_vocab, f)
    shapes["tab.loc"] = (cfg.loc_vocab, f)
    shapes["head.weight"] = (f, cfg.num_classes)
    shapes["head.bias"] = (cfg.num_classes,)
    return shapes


def init_params(cfg: ModelConfig) -> dict[str, np.ndarray]:
    out = {}
    for name, shape in sorted(_param_shapes(cfg).items()):
        leaf = name.rsplit(".", 1)[1]
        if leaf == "gamma":
            out[name] = np.ones(shape, np.float32)
        elif leaf in ("beta", "bias") or leaf.startswith("b_") or leaf in ("b1", "b2"):
            out[name] = np.zeros(shape, np.float32)
        else:
            out[name] = trunc_normal(_rng_for(cfg.seed, name), shape)
    return out


# ---------------------------------------------------------------- windows

def window_partition(x: Tensor, w: int, shift: int = 0) -> Tensor:
    """(B, G, G, E) grid -> (B * nW, w*w, E) windows in row-major window order.

    With ``shift`` the grid is first rolled by ``-shift`` on both spatial axes.
    """
    b, g, g2, e = x.shape
    if g != g2 or g % w:
        raise DimensionError(f"window_partition: grid {g}x{g2} not divisible by window {w}")
    if shift:
        x = ag.roll(x, (-shift, -shift), (1, 2))
    n = g // w
    x = x.reshape(b, n, w, n, w, e).permute(0, 1, 3, 2, 4, 5)
    return x.reshape(b * n * n, w * w, e)


def window_reverse(windows: Tensor, w: int, grid: int, shift: int = 0) -> Tensor:
    """Exact inverse of :func:`window_partition`."""
    nw, t, e = windows.shape
    n = grid // w
    if grid % w or t != w * w or nw % (n * n):
        raise DimensionError(f"window_reverse: {windows.shape} incompatible with grid {grid}, window {w}")
    b = nw // (n * n)
    x = windows.reshape(b, n, n, w, w, e).permute(0, 1, 3, 2, 4, 5).reshape(b, grid, grid, e)
    if shift:
        x = ag.roll(x, (shift, shift), (1, 2))
    return x


@lru_cache(maxsize=None)
def relative_position_index(w: int) -> np.ndarray:
    coords = np.stack(np.meshgrid(np.arange(w), np.arange(w), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :] + (w - 1)
    return (rel[0] * (2 * w - 1) + rel[1]).astype(np.int64)


@lru_cache(maxsize=None)
def shift_attention_mask(grid: int, w: int, shift: int) -> np.ndarray:
    """(nW, w*w, w*w) additive mask: -100 between tokens from different pre-shift regions."""
    label = np.zeros((grid, grid), np.int64)
    cuts = (slice(0, -w), slice(-w, -shift), slice(-shift, None))
    cnt = 0
    for hs in cuts:
        for ws in cuts:
            label[hs, ws] = cnt
            cnt += 1
    n = grid // w
    win = label.reshape(n, w, n, w).transpose(0, 2, 1, 3).reshape(n * n, w * w)
    diff = win[:, None, :] != win[:, :, None]
    return np.where(diff, -100.0, 0.0).astype(np.float32)


# ---------------------------------------------------------------- model

class SwinMultimodal:
    """Swin-style image encoder fused with tabular lookup embeddings."""

    def __init__(self, config: ModelConfig, params: Mapping[str, np.ndarray] | None = None,
                 prune_state: Mapping[tuple[int, int], BlockPruneState] | None = None,
                 frozen_stages: Iterable[int] = ()):
        self.config = config
        raw = init_params(config) if params is None else params
        self.params: dict[str, Tensor] = {
            k: Tensor(np.array(raw[k], dtype=np.float32, copy=True), requires_grad=True) for k in sorted(raw)
        }
        if prune_state is None:
            prune_state = {
                (s, b): BlockPruneState(tuple(range(config.num_heads[s])), tuple(range(config.mlp_hidden(s))))
                for s, b in config.blocks()
            }
        self.prune_state = {k: BlockPruneState(tuple(v.kept_heads), tuple(v.kept_channels))
                            for k, v in prune_state.items()}
        self.frozen_stages = set(frozen_stages)
        self.check_consistency()

    # -- structure ------------------------------------------------------

    def heads(self, stage: int, block: int) -> int:
        return len(self.prune_state[(stage, block)].kept_heads)

    def channels(self, stage: int, block: int) -> int:
        return len(self.prune_state[(stage, block)].kept_channels)

    def groups(self, stage: int, block: int) -> int:
        return self.channels(stage, block) // self.config.group_size(stage)

    def check_consistency(self) -> None:
        """Verify every tensor shape agrees with the prune state."""
        cfg = self.config
        expected = _param_shapes(cfg)
        for s, b in cfg.blocks():
            st = self.prune_state[(s, b)]
            pre = block_prefix(s, b)
            e, d = cfg.stage_dim(s), cfg.head_dim(s)
            for idx, bound, what in ((st.kept_heads, cfg.num_heads[s], "heads"),
                                     (st.kept_channels, cfg.mlp_hidden(s), "channels")):
                if list(idx) != sorted(set(idx)) or (idx and (idx[0] < 0 or idx[-1] >= bound)):
                    raise ConfigError(f"{pre}: kept {what} must be strictly increasing within [0, {bound})")
            if len(st.kept_channels) % cfg.group_size(s):
                raise ConfigError(f"{pre}: kept channel count not a multiple of group size")
            h, c = len(st.kept_heads), len(st.kept_channels)
            for k in MSA_KEYS:
                expected.pop(f"{pre}.attn.{k}", None)
            for k in MLP_KEYS:
                expected.pop(f"{pre}.mlp.{k}", None)
            if h:
                for n in ("q", "k", "v"):
                    expected[f"{pre}.attn.w_{n}"] = (e, h * d)
                    expected[f"{pre}.attn.b_{n}"] = (h * d,)
                expected[f"{pre}.attn.w_o"] = (h * d, e)
                expected[f"{pre}.attn.b_o"] = (e,)
                if cfg.use_rel_pos_bias:
                    expected[f"{pre}.attn.rel_pos"] = ((2 * cfg.window_size - 1) ** 2, h)
            if c:
                expected[f"{pre}.mlp.w1"] = (e, c)
                expected[f"{pre}.mlp.b1"] = (c,)
                expected[f"{pre}.mlp.w2"] = (c, e)
                expected[f"{pre}.mlp.b2"] = (e,)
        if set(expected) != set(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ConfigError(f"parameter set mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
        for k, shape in expected.items():
            if self.params[k].shape != tuple(shape):
                raise DimensionError(f"{k}: shape {self.params[k].shape}, expected {tuple(shape)}")

    def trainable_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if param_stage(k) not in self.frozen_stages}

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            a = arrays[k]
            if a.shape != t.shape:
                raise DimensionError(f"{k}: cannot load {a.shape} into {t.shape}")
            t.data = np.array(a, dtype=np.float32, copy=True)

    def copy(self) -> "SwinMultimodal":
        return SwinMultimodal(copy.deepcopy(self.config), self.state_arrays(), self.prune_state, self.frozen_stages)

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    # -- forward --------------------------------------------------------

    def __call__(self, images, tab, capture=None):
        return self.forward(images, tab, capture)

    def forward(self, images, tab, capture: Iterable[tuple[int, int]] | str | None = None):
        """Return ``(logits, captures)``.

        ``capture`` names blocks (``(stage, block)`` pairs, or ``"all"``) whose
        per-head attention outputs ``A`` (instances, w*w, H, D) and MLP
        intermediates ``Z`` (instances, w*w, C) are recorded as numpy arrays.
        """
        cfg = self.config
        images = np.asarray(getattr(images, "data", images), dtype=np.float32)
        tab = tabular_array(tab)
        if images.ndim != 4 or images.shape[1:] != (cfg.in_chans, cfg.image_size, cfg.image_size):
            raise DimensionError(
                f"images must be (B, {cfg.in_chans}, {cfg.image_size}, {cfg.image_size}), got {images.shape}")
        if tab.shape[0] != images.shape[0]:
            raise DimensionError(f"batch mismatch: {images.shape[0]} images vs {tab.shape[0]} tabular rows")
        want = set(cfg.blocks()) if capture == "all" else set(capture or ())
        captures: dict[tuple[int, int], dict[str, np.ndarray]] = {}
        p = self.params

        x = self._patch_embed(images)
        for s in range(cfg.num_stages):
            if s > 0:
                x = self._merge(x, s)
            for b in range(cfg.depths[s]):
                cap = captures.setdefault((s, b), {}) if (s, b) in want else None
                x = self._block(x, s, b, cap)
        bsz, g, _, f = x.shape
        x = ag.layer_norm(x, p["norm.gamma"], p["norm.beta"], cfg.ln_eps)
        feat = ag.mean(x.reshape(bsz, g * g, f), axis=1)

        w_img, w_sex, w_age, w_loc = cfg.fusion_weights
        fused = feat * w_img
        for key, col, wt in (("tab.sex", 0, w_sex), ("tab.age", 1, w_age), ("tab.loc", 2, w_loc)):
            fused = fused + ag.embedding(p[key], tab[:, col]) * wt
        logits = ag.linear(fused, p["head.weight"], p["head.bias"])
        return logits, captures

    def _patch_embed(self, images: np.ndarray) -> Tensor:
        cfg = self.config
        bsz, c, size, _ = images.shape
        ps, g = cfg.patch_size, size // cfg.patch_size
        images = (images - np.float32(cfg.pixel_mean)) / np.float32(cfg.pixel_std)
        patches = images.reshape(bsz, c, g, ps, g, ps).transpose(0, 2, 4, 1, 3, 5).reshape(bsz, g, g, c * ps * ps)
        x = ag.linear(Tensor(patches), self.params["patch_embed.weight"], self.params["patch_embed.bias"])
        return ag.layer_norm(x, self.params["patch_norm.gamma"], self.params["patch_norm.beta"], cfg.ln_eps)

    def _merge(self, x: Tensor, stage: int) -> Tensor:
        bsz, g, _, e = x.shape
        x = x.reshape(bsz, g // 2, 2, g // 2, 2, e).permute(0, 1, 3, 4, 2, 5).reshape(bsz, g // 2, g // 2, 4 * e)
        pre = f"stages.{stage}.downsample"
        x = ag.layer_norm(x, self.params[f"{pre}.norm.gamma"], self.params[f"{pre}.norm.beta"], self.config.ln_eps)
        return ag.linear(x, self.params[f"{pre}.reduction"])

    def _block(self, x: Tensor, stage: int, block: int, cap: dict | None) -> Tensor:
        cfg, p = self.config, self.params
        pre = block_prefix(stage, block)
        st = self.prune_state[(stage, block)]
        h = ag.layer_norm(x, p[f"{pre}.norm1.gamma"], p[f"{pre}.norm1.beta"], cfg.ln_eps)
        if st.msa_is_identity:
            x_hat = h + x
        else:
            x_hat = x + self._attention(h, stage, block, cap)
        h2 = ag.layer_norm(x_hat, p[f"{pre}.norm2.gamma"], p[f"{pre}.norm2.beta"], cfg.ln_eps)
        if st.mlp_is_identity:
            return h2 + x_hat
        mid = ag.gelu(ag.linear(h2, p[f"{pre}.mlp.w1"], p[f"{pre}.mlp.b1"]))
        if cap is not None:
            shift = cfg.shift_size(stage, block)
            cap["Z"] = window_partition(Tensor(mid.data), cfg.window_size, shift).data.copy()
        return x_hat + ag.linear(mid, p[f"{pre}.mlp.w2"], p[f"{pre}.mlp.b2"])

    def _attention(self, h: Tensor, stage: int, block: int, cap: dict | None) -> Tensor:
        cfg, p = self.config, self.params
        pre = block_prefix(stage, block) + ".attn"
        w, grid = cfg.window_size, h.shape[1]
        t = w * w
        heads, d = self.heads(stage, block), cfg.head_dim(stage)
        shift = cfg.shift_size(stage, block)
        win = window_partition(h, w, shift)
        n = win.shape[0]

        def split(name):
            y = ag.linear(win, p[f"{pre}.w_{name}"], p[f"{pre}.b_{name}"])
            return y.reshape(n, t, heads, d).permute(0, 2, 1, 3)

        q, k, v = split("q"), split("k"), split("v")
        scores = ag.matmul(q * float(d ** -0.5), k.permute(0, 1, 3, 2))
        if cfg.use_rel_pos_bias:
            idx = relative_position_index(w).reshape(-1)
            bias = ag.embedding(p[f"{pre}.rel_pos"], idx).reshape(t, t, heads).permute(2, 0, 1)
            scores = scores + bias
        if shift:
            mask = shift_attention_mask(grid, w, shift)
            nw = mask.shape[0]
            scores = (scores.reshape(n // nw, nw, heads, t, t) + mask[None, :, None]).reshape(n, heads, t, t)
        out = ag.matmul(ag.softmax(scores), v)
        if cap is not None:
            cap["A"] = out.data.transpose(0, 2, 1, 3).copy()
        out = out.permute(0, 2, 1, 3).reshape(n, t, heads * d)
        out = ag.linear(out, p[f"{pre}.w_o"], p[f"{pre}.b_o"])
        return window_reverse(out, w, grid, shift)

    def predict(self, images, tab, batch_size: int = 256) -> np.ndarray:
        preds = []
        with ag.no_grad():
            for i in range(0, len(images), batch_size):
                logits, _ = self.forward(images[i:i + batch_size], tabular_array(tab)[i:i + batch_size])
                preds.append(logits.data.argmax(axis=1))
        return np.concatenate(preds) if preds else np.zeros(0, np.int64)


# ---------------------------------------------------------------- accounting

def count_params(model: SwinMultimodal) -> int:
    return int(sum(t.size for t in model.params.values()))


def persistent_buffer_count(model: SwinMultimodal) -> int:
    """Relative-position indices and shift masks are rebuilt from config, so nothing persists."""
    return 0


def memory_footprint_bytes(model: SwinMultimodal) -> int:
    return 4 * (count_params(model) + persistent_buffer_count(model))


# per-element costs
LN_FLOPS, GELU_FLOPS, SOFTMAX_FLOPS = 5, 8, 5


def count_flops(model: SwinMultimodal, batch: int = 1) -> int:
    """Forward FLOPs: 2*T*in*out per linear, 4*w^4*D per window per head for
    the two attention products, plus per-element layer-norm / GeLU / softmax
    costs. Bias adds, residual adds, pooling and fusion are not counted."""
    cfg = model.config
    w4 = cfg.window_size ** 4
    g0 = cfg.grid(0)
    t = g0 * g0
    total = 2 * t * cfg.in_chans * cfg.patch_size ** 2 * cfg.embed_dim + LN_FLOPS * t * cfg.embed_dim
    for s in range(cfg.num_stages):
        e = cfg.stage_dim(s)
        t = cfg.grid(s) ** 2
        if s > 0:
            total += LN_FLOPS * t * 2 * e + 2 * t * 2 * e * e
        for b in range(cfg.depths[s]):
            h, c, d = model.heads(s, b), model.channels(s, b), cfg.head_dim(s)
            n_win = t // cfg.window_size ** 2
            total += 2 * LN_FLOPS * t * e
            if h:
                total += 3 * 2 * t * e * h * d + n_win * h * (4 * w4 * d + SOFTMAX_FLOPS * w4) + 2 * t * h * d * e
            if c:
                total += 2 * t * e * c + GELU_FLOPS * t * c + 2 * t * c * e
    f = cfg.feature_dim
    total += LN_FLOPS * cfg.grid(cfg.num_stages - 1) ** 2 * f + 2 * f * cfg.num_classes
    return int(total * batch)
