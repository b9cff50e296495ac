import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import skew_direct, skew_exact
from skewprune.model import ConfigError, ModelConfig, SwinMultimodal
from skewprune.skew import (
    SkewReport,
    StateError,
    decide,
    extract_norms_mlp,
    extract_norms_msa,
    score_block,
    skewness,
)

vectors = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=4, max_size=64)


def test_skewness_known_value():
    # mean 2, deviations (-1, -1, -1, 3): m2 = 3, m3 = 6 -> 6 / 3**1.5
    assert skewness([1, 1, 1, 5]) == pytest.approx(2 / math.sqrt(3), rel=1e-15)
    assert skewness([5, 1, 1, 1]) == skewness([1, 1, 1, 5])
    assert skewness([1, 5, 5, 5]) == pytest.approx(-2 / math.sqrt(3), rel=1e-15)


def test_skewness_zero_cases():
    assert skewness([3.0] * 16) == 0.0
    assert skewness([-1.0, 0.0, 1.0]) == 0.0
    assert skewness([0.1, 1.3, 0.1, 1.3]) == 0.0
    assert skewness([0.1, 0.7, -0.1, -0.7, 0.0]) == 0.0
    assert skewness([1e-300, -1e-300, 3e-301, -3e-301]) == 0.0


def test_skewness_needs_two_values():
    with pytest.raises(ValueError):
        skewness([1.0])


@settings(max_examples=200, deadline=None)
@given(vectors)
def test_skewness_matches_exact_moments(v):
    assume(np.ptp(v) > 1e-6 * max(1.0, np.abs(v).max()))
    assert skewness(v) == pytest.approx(skew_exact(v), rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(vectors, st.floats(0.01, 100), st.floats(-100, 100))
def test_skewness_affine_invariance(v, a, b):
    assume(np.ptp(v) > 1e-3)
    s = skewness(v)
    assert skewness(np.asarray(v) * a + b) == pytest.approx(s, rel=1e-6, abs=1e-6)
    assert skewness(-np.asarray(v)) == pytest.approx(-s, rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=32))
def test_vector_and_its_negation_are_exactly_zero(half):
    assert skewness(half + [-x for x in half]) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.integers(1, 10))
def test_two_point_equal_mass_is_exactly_zero(a, b, k):
    assert skewness([a, b] * k) == 0.0


def test_tiny_variance_does_not_underflow():
    v = [0.0, 3.7e-153, 0.0, 5e-153, 0.0]
    assert skewness(v) == pytest.approx(skew_exact(np.array(v) * 1e150), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-64, 64), min_size=2, max_size=32), st.integers(-8, 8))
def test_dyadic_mirrored_vectors_are_exactly_zero(half, centre):
    v = [centre + x / 4 for x in half] + [centre - x / 4 for x in half]
    assert skewness(v) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.permutations(list(range(10)) + [40]))
def test_skewness_permutation_invariant(v):
    assert skewness(v) == pytest.approx(skew_direct(list(range(10)) + [40]), rel=1e-12)


# ---------------------------------------------------------------- extraction

def test_extract_msa_brute_force():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 16, 2, 5))
    norms = extract_norms_msa(A)
    for h in range(2):
        for t in range(16):
            assert norms[h, t] == pytest.approx(math.sqrt(sum(A[0, t, h, j] ** 2 for j in range(5))), rel=1e-12)
    np.testing.assert_allclose(extract_norms_msa(A, "mean")[1, 4],
                               np.mean([np.linalg.norm(A[i, 4, 1]) for i in range(3)]), rtol=1e-12)
    np.testing.assert_allclose(extract_norms_msa(A, 2), np.linalg.norm(A[2], axis=-1).T, rtol=1e-12)


def test_extract_mlp_contiguous_groups():
    rng = np.random.default_rng(1)
    Z = rng.standard_normal((2, 4, 12))
    norms = extract_norms_mlp(Z, group_size=3)
    assert norms.shape == (4, 4)
    for g in range(4):
        for t in range(4):
            assert norms[g, t] == pytest.approx(np.linalg.norm(Z[0, t, 3 * g:3 * g + 3]), rel=1e-12)
    np.testing.assert_array_equal(extract_norms_mlp(Z, groups=4), norms)


def test_extract_mlp_indivisible_rejected():
    with pytest.raises(ConfigError):
        extract_norms_mlp(np.zeros((1, 4, 10)), group_size=3)
    with pytest.raises(ConfigError):
        extract_norms_mlp(np.zeros((1, 4, 10)), groups=4)


def test_missing_capture_is_a_state_error():
    with pytest.raises(StateError):
        extract_norms_msa(None)


def test_unknown_selector_rejected():
    with pytest.raises(ConfigError):
        extract_norms_msa(np.zeros((1, 4, 1, 2)), selector="median")


# ---------------------------------------------------------------- decisions

def report(heads, groups):
    return SkewReport(0, 0, list(enumerate(heads)), list(enumerate(groups)), len(groups), 4)


def test_decide_boundary_zero_is_pruned():
    d = decide(report([0.0, 1e-12, -0.5], [0.3, 0.0]))
    assert d.heads_to_prune == (0, 2)
    assert d.groups_to_prune == (1,)
    assert not d.msa_identity and not d.mlp_identity


def test_decide_full_prune_flags_identity():
    d = decide(report([-1.0, -2.0], [-0.1]))
    assert d.msa_identity and d.mlp_identity


def test_score_block_on_real_capture():
    cfg = ModelConfig()
    model = SwinMultimodal(cfg)
    rng = np.random.default_rng(2)
    images = rng.random((2, 3, 32, 32)).astype(np.float32)
    tab = np.zeros((2, 3), int)
    _, caps = model.forward(images, tab, capture=[(1, 0)])
    rep = score_block(model, caps[(1, 0)], 1, 0)
    assert [h for h, _ in rep.head_skews] == [0, 1, 2, 3]
    assert rep.group_count == 64 and rep.group_size == 4
    norms = np.linalg.norm(caps[(1, 0)]["A"][0].astype(np.float64), axis=-1)
    for h, s in rep.head_skews:
        assert s == pytest.approx(skew_direct(norms[:, h]), rel=1e-9, abs=1e-12)
