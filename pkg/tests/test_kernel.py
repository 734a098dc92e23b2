import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from surgkit.datamodel import Conversation, Protocol, TaskKind, Turn
from surgkit.kernel import (
    REFUSAL_TEXT,
    KernelConfig,
    MockVLM,
    Planted,
    PositionTriple,
    attention,
    finite_difference_check,
    fuse_blocks,
    loss_from_scores,
    mock_generate,
    mrope_apply,
    mrope_rotate,
    multitask_loss,
    patch_embed,
    rope_1d,
    rope_frequencies,
    token_fuse,
    window_mask,
)
from surgkit.kernel.selftest import format_table, run_selftest

seeds = st.integers(0, 2**32 - 1)
positions = st.builds(PositionTriple, st.integers(0, 500), st.integers(0, 64), st.integers(0, 64))


# ---------------------------------------------------------------- config


def test_default_sections_cover_all_pairs():
    cfg = KernelConfig()
    assert sum(cfg.sections()) == cfg.head_dim // 2 == 64
    assert cfg.sections() == (22, 21, 21)


@pytest.mark.parametrize(
    "kwargs",
    [dict(head_dim=7), dict(patch_size=0), dict(rope_base=1.0), dict(head_dim=12, mrope_sections=(2, 2, 1)), dict(head_dim=12, mrope_sections=(7, -1, 0))],
)
def test_invalid_configs_rejected(kwargs):
    with pytest.raises(ValueError):
        KernelConfig(**kwargs)


# ---------------------------------------------------------------- rotary


def test_rope_frequencies_geometric():
    f = rope_frequencies(8, 10000.0)
    assert np.allclose(f, [1.0, 0.1, 0.01, 0.001])


def test_rope_rotates_first_pair_by_position():
    x = np.zeros(4)
    x[0] = 1.0
    out = rope_1d(x, math.pi / 2)
    assert np.allclose(out, [0.0, 1.0, 0.0, 0.0], atol=1e-12)


@given(seeds, st.integers(1, 24), st.integers(0, 10_000))
def test_text_positions_reduce_to_1d_rope(seed, pairs, n):
    rng = np.random.default_rng(seed)
    cfg = KernelConfig(head_dim=2 * pairs)
    x = rng.normal(size=2 * pairs)
    assert np.allclose(mrope_rotate(x, PositionTriple.text(n), cfg), rope_1d(x, n), atol=1e-9)


@given(seeds, positions)
def test_rotation_preserves_norm(seed, pos):
    cfg = KernelConfig()
    x = np.random.default_rng(seed).normal(size=cfg.head_dim)
    assert math.isclose(np.linalg.norm(mrope_rotate(x, pos, cfg)), np.linalg.norm(x), abs_tol=1e-12)


@given(seeds, positions, positions, st.integers(0, 100), st.integers(0, 30), st.integers(0, 30))
def test_scores_depend_only_on_offsets(seed, a, b, dt, du, dv):
    cfg = KernelConfig(head_dim=36)
    rng = np.random.default_rng(seed)
    q, k = rng.normal(size=36), rng.normal(size=36)
    base = np.dot(*mrope_apply(q, k, a, b, cfg))
    moved = np.dot(*mrope_apply(q, k, a.shifted(dt, du, dv), b.shifted(dt, du, dv), cfg))
    assert math.isclose(base, moved, abs_tol=1e-9)


def test_each_section_follows_its_own_axis():
    cfg = KernelConfig(head_dim=12, mrope_sections=(2, 2, 2))
    x = np.ones(12)
    moved_v = mrope_rotate(x, PositionTriple(0, 0, 3), cfg)
    assert np.allclose(moved_v[:8], 1.0)
    assert not np.allclose(moved_v[8:], 1.0)


def test_wrong_vector_length_rejected():
    with pytest.raises(ValueError):
        mrope_rotate(np.ones(10), PositionTriple.text(0), KernelConfig())


def test_negative_positions_rejected():
    with pytest.raises(ValueError):
        PositionTriple(-1, 0, 0)


# ---------------------------------------------------------------- patches and fusion


def test_patch_embed_matches_explicit_loop():
    rng = np.random.default_rng(0)
    cfg = KernelConfig(patch_size=2)
    img = rng.normal(size=(4, 6, 3))
    w, b = rng.normal(size=(5, 12)), rng.normal(size=5)
    grid = patch_embed(img, w, b, cfg, t=3)
    assert grid.shape == (2, 3)
    for r in range(2):
        for c in range(3):
            patch = img[2 * r : 2 * r + 2, 2 * c : 2 * c + 2, :].reshape(-1)
            assert np.allclose(grid.tokens[r * 3 + c], w @ patch + b)
            assert grid.positions[r * 3 + c] == PositionTriple(3, r, c)


def test_patch_embed_rejects_ragged_image():
    with pytest.raises(ValueError):
        patch_embed(np.zeros((5, 4, 3)), np.zeros((2, 12)), np.zeros(2), KernelConfig(patch_size=2))


def test_fusion_block_order():
    cfg = KernelConfig(patch_size=1)
    img = np.arange(16, dtype=float).reshape(4, 4, 1).repeat(3, axis=2)
    grid = patch_embed(img, np.array([[1.0, 0.0, 0.0]]), np.zeros(1), cfg)
    fused = fuse_blocks(grid)
    assert fused.shape == (4, 4)
    assert fused[0].tolist() == [0, 1, 4, 5]
    assert fused[3].tolist() == [10, 11, 14, 15]


@given(seeds, st.integers(1, 4), st.integers(1, 4))
def test_fusion_quarters_token_count(seed, hr, hc):
    rng = np.random.default_rng(seed)
    cfg = KernelConfig(patch_size=1)
    grid = patch_embed(rng.normal(size=(2 * hr, 2 * hc, 3)), rng.normal(size=(3, 3)), np.zeros(3), cfg)
    out = token_fuse(grid, rng.normal(size=(8, 12)), np.zeros(8), rng.normal(size=(6, 4)), np.zeros(6))
    assert out.shape == (hr * hc, 6)


def test_fusion_needs_even_grid():
    cfg = KernelConfig(patch_size=1)
    grid = patch_embed(np.zeros((3, 2, 3)), np.zeros((1, 3)), np.zeros(1), cfg)
    with pytest.raises(ValueError):
        fuse_blocks(grid)


# ---------------------------------------------------------------- windows and attention


def _brute_mask(rows, cols, m):
    n = rows * cols
    out = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            ri, ci, rj, cj = i // cols, i % cols, j // cols, j % cols
            out[i, j] = ri // m == rj // m and ci // m == cj // m
    return out


@given(st.integers(1, 10), st.integers(1, 10), st.integers(1, 6))
def test_window_mask_matches_brute_force(rows, cols, m):
    mask = window_mask((rows, cols), m, 0)
    assert (mask == _brute_mask(rows, cols, m)).all()
    assert mask.sum() <= rows * cols * m * m
    if rows % m == 0 and cols % m == 0:
        assert mask.sum() == rows * cols * m * m


def test_full_attention_layers_see_everything():
    for layer in (7, 15, 23, 31):
        assert window_mask((5, 5), 2, layer).all()
    assert not window_mask((5, 5), 2, 8).all()


def test_windowed_attention_equals_per_window_attention():
    rng = np.random.default_rng(1)
    rows, cols, m, d = 4, 4, 2, 5
    q, k, v = (rng.normal(size=(rows * cols, d)) for _ in range(3))
    out = attention(q, k, v, window_mask((rows, cols), m, 0))
    for i in range(rows * cols):
        members = [j for j in range(rows * cols) if (j // cols) // m == (i // cols) // m and (j % cols) // m == (i % cols) // m]
        s = q[i] @ k[members].T / math.sqrt(d)
        w = np.exp(s - s.max())
        w /= w.sum()
        assert np.allclose(out[i], w @ v[members])


# ---------------------------------------------------------------- loss


def test_uniform_loss_closed_form():
    assert math.isclose(multitask_loss([np.full((7, 11), 1 / 11)], [[0] * 7]), 7 * math.log(11))


def test_loss_sums_over_examples_without_averaging():
    p = np.array([[0.5, 0.5]])
    assert math.isclose(multitask_loss([p, p, p], [[0], [1], [0]]), 3 * math.log(2))


def test_loss_of_certain_correct_prediction_is_zero():
    assert multitask_loss([np.eye(3)], [[0, 1, 2]]) == 0.0


@pytest.mark.parametrize(
    "probs, ys",
    [
        (np.array([[0.5, 0.6]]), [0]),
        (np.array([[1.2, -0.2]]), [0]),
        (np.array([[0.5, 0.5]]), [2]),
        (np.array([[0.5, 0.5]]), [0, 1]),
    ],
)
def test_loss_rejects_bad_inputs(probs, ys):
    with pytest.raises(ValueError):
        multitask_loss([probs], [ys])


@given(seeds)
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    scores = [rng.normal(size=(int(rng.integers(1, 3)), 4)) for _ in range(2)]
    targets = [rng.integers(0, 4, size=s.shape[0]) for s in scores]
    check = finite_difference_check(scores, targets)
    assert check.max_relative_error < 1e-5
    assert check.checked == sum(s.size for s in scores)


def test_loss_from_scores_agrees_with_probability_form():
    rng = np.random.default_rng(2)
    s = rng.normal(size=(3, 6))
    p = np.exp(s) / np.exp(s).sum(axis=1, keepdims=True)
    assert math.isclose(loss_from_scores([s], [[0, 5, 2]])[0], multitask_loss([p], [[0, 5, 2]]), abs_tol=1e-12)


# ---------------------------------------------------------------- selftest


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_selftest_passes(seed):
    results = run_selftest(seed)
    assert len(results) == 7
    assert all(r.passed for r in results), format_table(results)
    assert "PASS" in format_table(results)


# ---------------------------------------------------------------- mock model


def _conv(i, protocol=Protocol.OV):
    label = "preparation"
    if protocol is Protocol.MCQ:
        turn = Turn("Q?\nA. preparation\nB. clipping and cutting", label, (label,), TaskKind.PHASE_RECOGNITION, ("preparation", "clipping and cutting"), label)
    else:
        turn = Turn("Which phase?", "The current phase is preparation.", (label,), TaskKind.PHASE_RECOGNITION, None, label)
    return Conversation(f"c{i}", f"s{i}", protocol, (turn,))


def test_mock_is_deterministic_and_near_p():
    convs = [_conv(i) for i in range(2000)]
    a = MockVLM("planted", p=0.3, seed=5).fit().predict(convs)
    b = MockVLM("planted", p=0.3, seed=5).predict(convs)
    assert a == b
    frac = sum(r == convs[0].turns[0].answer for r in a) / len(a)
    assert abs(frac - 0.3) < 0.04


def test_mock_refuser_and_oracle():
    convs = [_conv(i) for i in range(500)]
    refusals = MockVLM("refuser", rate=0.2, seed=1).predict(convs)
    assert 0.14 < refusals.count(REFUSAL_TEXT) / 500 < 0.26
    assert all(r == c.turns[0].answer for r, c in zip(MockVLM().predict(convs), convs))


def test_mock_mcq_answers_with_letters():
    conv = _conv(0, Protocol.MCQ)
    assert mock_generate(conv, Planted(1.0)) == "A."
    assert mock_generate(conv, Planted(0.0)) == "B."


def test_mock_params_and_bad_behavior():
    assert MockVLM("planted", p=0.5).get_params()["p"] == 0.5
    with pytest.raises(ValueError):
        MockVLM("chaotic").fit()
    with pytest.raises(ValueError):
        Planted(1.5)
