"""Skewness scoring of attention heads and MLP channel groups.

For a captured block, each head (or channel group) is summarised by the
L2 norm of its output at every window position of one calibration
window instance. The population skewness of that length-w*w vector
decides the fate of the unit: ``s <= 0`` means prune.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import BlockPruneState, ConfigError, SwinMultimodal


class StateError(RuntimeError):
    """Operation applied against model state it was not computed for."""


SELECTORS = ("first", "mean")


def _select(norms: np.ndarray, selector) -> np.ndarray:
    """Reduce (instances, positions, units) norms to (positions, units)."""
    if selector == "first":
        return norms[0]
    if selector == "mean":
        return norms.mean(axis=0)
    if isinstance(selector, (int, np.integer)):
        return norms[int(selector)]
    raise ConfigError(f"unknown calibration selector {selector!r}; use one of {SELECTORS} or an instance index")


def extract_norms_msa(A: np.ndarray | None, selector="first") -> np.ndarray:
    """Per-head norm vectors from a (instances, w*w, H, D) capture.

    Returns an (H, w*w) float64 array; row ``h`` is ``v_h``.
    """
    if A is None:
        raise StateError("no attention capture for this block (was capture requested, or is the MSA pruned?)")
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 4:
        raise ConfigError(f"attention capture must be 4-d (instances, positions, heads, dim), got {A.shape}")
    norms = np.sqrt((A * A).sum(axis=-1))
    return _select(norms, selector).T.copy()


def extract_norms_mlp(Z: np.ndarray | None, *, group_size: int | None = None, groups: int | None = None,
                      selector="first") -> np.ndarray:
    """Per-group norm vectors from a (instances, w*w, C) capture.

    Channels are split into contiguous groups; give either the group size or
    the number of groups. Returns a (G, w*w) float64 array.
    """
    if Z is None:
        raise StateError("no MLP capture for this block (was capture requested, or is the MLP pruned?)")
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 3:
        raise ConfigError(f"MLP capture must be 3-d (instances, positions, channels), got {Z.shape}")
    c = Z.shape[-1]
    if (group_size is None) == (groups is None):
        raise ConfigError("give exactly one of group_size / groups")
    if groups is not None:
        if groups < 1 or c % groups:
            raise ConfigError(f"{c} channels cannot form {groups} equal groups")
        group_size = c // groups
    if group_size < 1 or c % group_size:
        raise ConfigError(f"{c} channels not divisible into groups of {group_size}")
    grouped = Z.reshape(Z.shape[0], Z.shape[1], c // group_size, group_size)
    norms = np.sqrt((grouped * grouped).sum(axis=-1))
    return _select(norms, selector).T.copy()


def skewness(v) -> float:
    """Population third standardized moment; 0 for a constant vector.

    Moments are accumulated exactly: every float64 is an integer times a
    power of two, so after scaling to a common exponent the power sums are
    Python integers. Only the final square root rounds, which makes the
    result exactly 0 for any mirror-symmetric input and immune to
    underflow of tiny variances.
    """
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    n = v.size
    if n < 2:
        raise ValueError(f"skewness needs at least 2 values, got {n}")
    if not np.isfinite(v).all():
        raise ValueError("skewness of a vector with NaN or infinite entries")
    ratios = [x.as_integer_ratio() for x in v.tolist()]
    top = max(den.bit_length() for _, den in ratios)
    xs = [num << (top - den.bit_length()) for num, den in ratios]
    s1 = sum(xs)
    s2 = sum(x * x for x in xs)
    s3 = sum(x * x * x for x in xs)
    # n^2 m2 and n^3 m3 in the common scale
    var = n * s2 - s1 * s1
    if var == 0:
        return 0.0
    third = n * n * s3 - 3 * n * s1 * s2 + 2 * s1 ** 3
    if third == 0:
        return 0.0
    # int / int true division is correctly rounded at any size
    return math.copysign(math.sqrt((third * third) / var ** 3), 1 if third > 0 else -1)


@dataclass
class SkewReport:
    stage: int
    block: int
    head_skews: list[tuple[int, float]]
    group_skews: list[tuple[int, float]]
    group_count: int
    group_size: int
    calibration: str = "batch0"
    selector: str = "first"
    state: BlockPruneState | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "block": self.block,
            "calibration": self.calibration,
            "selector": str(self.selector),
            "group_count": self.group_count,
            "group_size": self.group_size,
            "head_skews": [[h, round(s, 6)] for h, s in self.head_skews],
            "group_skews": [[g, round(s, 6)] for g, s in self.group_skews],
        }


@dataclass(frozen=True)
class PruneDecision:
    stage: int
    block: int
    heads_to_prune: tuple[int, ...]
    groups_to_prune: tuple[int, ...]
    num_heads: int
    num_groups: int
    state: BlockPruneState | None = field(default=None, compare=False, repr=False)

    @property
    def msa_identity(self) -> bool:
        return self.num_heads > 0 and len(self.heads_to_prune) == self.num_heads

    @property
    def mlp_identity(self) -> bool:
        return self.num_groups > 0 and len(self.groups_to_prune) == self.num_groups

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "block": self.block,
            "heads_to_prune": list(self.heads_to_prune),
            "groups_to_prune": list(self.groups_to_prune),
            "msa_identity": self.msa_identity,
            "mlp_identity": self.mlp_identity,
        }


def score_block(model: SwinMultimodal, capture: dict, stage: int, block: int, selector="first",
                calibration: str = "batch0") -> SkewReport:
    """Skewness of every current head and channel group of one block."""
    st = model.prune_state[(stage, block)]
    gs = model.config.group_size(stage)
    heads: list[tuple[int, float]] = []
    groups: list[tuple[int, float]] = []
    if not st.msa_is_identity:
        heads = [(h, skewness(v)) for h, v in enumerate(extract_norms_msa(capture.get("A"), selector))]
    if not st.mlp_is_identity:
        vecs = extract_norms_mlp(capture.get("Z"), group_size=gs, selector=selector)
        groups = [(g, skewness(v)) for g, v in enumerate(vecs)]
    return SkewReport(stage, block, heads, groups, len(groups), gs, calibration, selector, state=st)


def decide(report: SkewReport) -> PruneDecision:
    """Prune every head / group whose skewness is not strictly positive."""
    return PruneDecision(
        report.stage,
        report.block,
        tuple(h for h, s in report.head_skews if s <= 0),
        tuple(g for g, s in report.group_skews if s <= 0),
        len(report.head_skews),
        len(report.group_skews),
        state=report.state,
    )
