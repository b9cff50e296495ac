"""Structural removal of attention heads and MLP channel groups.

Surgery materializes smaller tensors; nothing is masked. Head and group
ids passed in always index the block's *current* structure, while
``BlockPruneState`` keeps the surviving ids in the original numbering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor
from .model import MLP_KEYS, MSA_KEYS, BlockPruneState, SwinMultimodal, block_prefix, count_flops, count_params
from .skew import PruneDecision, StateError


def _check_ids(ids, n: int, what: str) -> list[int]:
    ids = sorted(set(int(i) for i in ids))
    for i in ids:
        if i < 0 or i >= n:
            raise IndexError(f"{what} id {i} out of range for {n} current {what}s")
    return ids


def _set(model: SwinMultimodal, name: str, arr: np.ndarray) -> None:
    model.params[name] = Tensor(np.ascontiguousarray(arr), requires_grad=True)


def prune_heads(model: SwinMultimodal, stage: int, block: int, heads_to_prune) -> SwinMultimodal:
    st = model.prune_state[(stage, block)]
    n = len(st.kept_heads)
    drop = _check_ids(heads_to_prune, n, "head")
    if not drop:
        return model
    pre = block_prefix(stage, block) + ".attn"
    keep = [h for h in range(n) if h not in drop]
    if not keep:
        for k in MSA_KEYS:
            model.params.pop(f"{pre}.{k}", None)
    else:
        d = model.config.head_dim(stage)
        cols = np.concatenate([np.arange(h * d, (h + 1) * d) for h in keep])
        p = model.params
        for n_ in ("q", "k", "v"):
            _set(model, f"{pre}.w_{n_}", p[f"{pre}.w_{n_}"].data[:, cols])
            _set(model, f"{pre}.b_{n_}", p[f"{pre}.b_{n_}"].data[cols])
        _set(model, f"{pre}.w_o", p[f"{pre}.w_o"].data[cols, :])
        if f"{pre}.rel_pos" in p:
            _set(model, f"{pre}.rel_pos", p[f"{pre}.rel_pos"].data[:, keep])
    model.prune_state[(stage, block)] = BlockPruneState(tuple(st.kept_heads[h] for h in keep), st.kept_channels)
    return model


def prune_mlp(model: SwinMultimodal, stage: int, block: int, groups_to_prune) -> SwinMultimodal:
    st = model.prune_state[(stage, block)]
    gs = model.config.group_size(stage)
    n = len(st.kept_channels) // gs
    drop = _check_ids(groups_to_prune, n, "group")
    if not drop:
        return model
    pre = block_prefix(stage, block) + ".mlp"
    keep = [g for g in range(n) if g not in drop]
    if not keep:
        for k in MLP_KEYS:
            model.params.pop(f"{pre}.{k}", None)
        kept: tuple[int, ...] = ()
    else:
        pos = np.concatenate([np.arange(g * gs, (g + 1) * gs) for g in keep])
        p = model.params
        _set(model, f"{pre}.w1", p[f"{pre}.w1"].data[:, pos])
        _set(model, f"{pre}.b1", p[f"{pre}.b1"].data[pos])
        _set(model, f"{pre}.w2", p[f"{pre}.w2"].data[pos, :])
        kept = tuple(st.kept_channels[i] for i in pos)
    model.prune_state[(stage, block)] = BlockPruneState(st.kept_heads, kept)
    return model


@dataclass(frozen=True)
class PruneAudit:
    stage: int
    block: int
    heads_before: int
    heads_after: int
    channels_before: int
    channels_after: int
    params_before: int
    params_after: int
    flops_before: int
    flops_after: int
    pruned_heads: tuple[int, ...]
    pruned_channels_groups: tuple[int, ...]

    @property
    def param_delta(self) -> int:
        return self.params_before - self.params_after

    @property
    def flops_delta(self) -> int:
        return self.flops_before - self.flops_after

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "block": self.block,
            "heads_before": self.heads_before,
            "heads_after": self.heads_after,
            "channels_before": self.channels_before,
            "channels_after": self.channels_after,
            "params_before": self.params_before,
            "params_after": self.params_after,
            "param_delta": self.param_delta,
            "flops_before": self.flops_before,
            "flops_after": self.flops_after,
            "flops_delta": self.flops_delta,
            "pruned_heads": list(self.pruned_heads),
            "pruned_groups": list(self.pruned_channels_groups),
        }


def apply_decision(model: SwinMultimodal, decision: PruneDecision) -> tuple[SwinMultimodal, PruneAudit]:
    """Apply a decision computed against the block's current structure.

    A decision that does not match the block state it was made for (for
    example one that was already applied) raises ``StateError``.
    """
    key = (decision.stage, decision.block)
    st = model.prune_state[key]
    if decision.state is not None and decision.state != st:
        raise StateError(f"stale prune decision for block {key}: block structure changed since scoring")
    if decision.num_heads != len(st.kept_heads) or decision.num_groups != model.groups(*key):
        raise StateError(f"stale prune decision for block {key}: expected {decision.num_heads} heads / "
                         f"{decision.num_groups} groups, block has {len(st.kept_heads)} / {model.groups(*key)}")
    p0, f0 = count_params(model), count_flops(model)
    h0, c0 = len(st.kept_heads), len(st.kept_channels)
    pruned_heads = tuple(st.kept_heads[h] for h in sorted(decision.heads_to_prune))
    prune_heads(model, *key, decision.heads_to_prune)
    prune_mlp(model, *key, decision.groups_to_prune)
    st1 = model.prune_state[key]
    audit = PruneAudit(decision.stage, decision.block, h0, len(st1.kept_heads), c0, len(st1.kept_channels),
                       p0, count_params(model), f0, count_flops(model), pruned_heads,
                       tuple(sorted(decision.groups_to_prune)))
    return model, audit
