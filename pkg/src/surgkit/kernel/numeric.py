"""Small dense reference implementations of the vision-language architecture math.

Everything is plain numpy in float64; shapes follow the usual row-major layout
(tokens along axis 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class KernelConfig:
    patch_size: int = 14
    window_size: int = 8  # patches per window side (112 px / 14 px)
    full_attention_layers: frozenset[int] = frozenset({7, 15, 23, 31})
    vision_width: int = 1280
    fusion_hidden: int = 5120
    model_width: int = 3584
    rope_base: float = 10000.0
    head_dim: int = 128
    vocab_size: int = 151646
    # rotation pairs given to (t, u, v); None splits the pairs into near-equal thirds
    mrope_sections: tuple[int, int, int] | None = None

    def __post_init__(self):
        for name in ("patch_size", "window_size", "vision_width", "fusion_hidden", "model_width", "head_dim", "vocab_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.head_dim % 2:
            raise ValueError("head_dim must be even")
        if self.rope_base <= 1:
            raise ValueError("rope_base must exceed 1")
        object.__setattr__(self, "full_attention_layers", frozenset(self.full_attention_layers))
        if self.mrope_sections is not None:
            if len(self.mrope_sections) != 3 or sum(self.mrope_sections) != self.head_dim // 2:
                raise ValueError("mrope_sections must be three pair counts summing to head_dim / 2")
            if min(self.mrope_sections) < 0:
                raise ValueError("mrope_sections must be non-negative")

    def sections(self) -> tuple[int, int, int]:
        if self.mrope_sections is not None:
            return tuple(self.mrope_sections)
        pairs = self.head_dim // 2
        base, extra = divmod(pairs, 3)
        return tuple(base + (1 if i < extra else 0) for i in range(3))


@dataclass(frozen=True)
class PositionTriple:
    t: float
    u: int
    v: int

    def __post_init__(self):
        if self.t < 0 or self.u < 0 or self.v < 0:
            raise ValueError("position components must be non-negative")

    @classmethod
    def text(cls, index: int) -> "PositionTriple":
        return cls(index, index, index)

    def shifted(self, dt: float, du: int, dv: int) -> "PositionTriple":
        return PositionTriple(self.t + dt, self.u + du, self.v + dv)


@dataclass(frozen=True)
class TokenGrid:
    tokens: np.ndarray  # (rows * cols, width)
    positions: tuple[PositionTriple, ...]
    shape: tuple[int, int]

    def __post_init__(self):
        rows, cols = self.shape
        if self.tokens.shape[0] != rows * cols or len(self.positions) != rows * cols:
            raise ValueError("token count must equal rows * cols")


# ---------------------------------------------------------------- patches


def patch_embed(
    image: np.ndarray, weight: np.ndarray, bias: np.ndarray, config: KernelConfig = KernelConfig(), t: float = 0
) -> TokenGrid:
    """Split an (H, W, 3) image into P x P patches and apply ``weight @ vec(patch) + bias``.

    ``vec`` flattens a (P, P, 3) patch in row-major order. Tokens and their
    (t, row, col) positions are emitted row by row.
    """
    image = np.asarray(image, dtype=float)
    p = config.patch_size
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("image must have shape (H, W, 3)")
    h, w, _ = image.shape
    if h % p or w % p:
        raise ValueError(f"image size {h}x{w} is not divisible by patch size {p}")
    weight = np.asarray(weight, dtype=float)
    if weight.shape[1] != p * p * 3:
        raise ValueError(f"weight must have {p * p * 3} columns")
    rows, cols = h // p, w // p
    patches = image.reshape(rows, p, cols, p, 3).transpose(0, 2, 1, 3, 4).reshape(rows * cols, p * p * 3)
    tokens = patches @ weight.T + np.asarray(bias, dtype=float)
    positions = tuple(PositionTriple(t, r, c) for r in range(rows) for c in range(cols))
    return TokenGrid(tokens, positions, (rows, cols))


# ---------------------------------------------------------------- rotary


def rope_frequencies(dim: int, base: float) -> np.ndarray:
    """Angle per unit position for each of the dim / 2 adjacent pairs."""
    return base ** (-2.0 * np.arange(dim // 2) / dim)


def _rotate_pairs(x: np.ndarray, angles: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    even, odd = x[0::2], x[1::2]
    cos, sin = np.cos(angles), np.sin(angles)
    out = np.empty_like(x)
    out[0::2] = even * cos - odd * sin
    out[1::2] = even * sin + odd * cos
    return out


def rope_1d(x: np.ndarray, position: float, base: float = 10000.0) -> np.ndarray:
    """Standard rotary embedding of one vector at one position, adjacent-pair layout."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] % 2:
        raise ValueError("dimension must be even")
    return _rotate_pairs(x, position * rope_frequencies(x.shape[-1], base))


def mrope_angles(pos: PositionTriple, config: KernelConfig) -> np.ndarray:
    freqs = rope_frequencies(config.head_dim, config.rope_base)
    st, su, _ = config.sections()
    scale = np.empty_like(freqs)
    scale[:st] = pos.t
    scale[st : st + su] = pos.u
    scale[st + su :] = pos.v
    return scale * freqs


def mrope_rotate(x: np.ndarray, pos: PositionTriple, config: KernelConfig) -> np.ndarray:
    """Rotate the t, u and v sections of ``x`` by their own position component.

    Each pair keeps its 1D frequency, so a text token with t = u = v = n gets
    exactly the 1D rotation at n.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != config.head_dim:
        raise ValueError(f"expected a vector of length {config.head_dim}")
    return _rotate_pairs(x, mrope_angles(pos, config))


def mrope_apply(
    q: np.ndarray, k: np.ndarray, pos_q: PositionTriple, pos_k: PositionTriple, config: KernelConfig
) -> tuple[np.ndarray, np.ndarray]:
    return mrope_rotate(q, pos_q, config), mrope_rotate(k, pos_k, config)


# ---------------------------------------------------------------- attention


def window_mask(shape: tuple[int, int], window: int, layer: int, config: KernelConfig = KernelConfig()) -> np.ndarray:
    """Boolean N x N mask; full-attention layers see everything, others stay inside M x M windows.

    Windows tile the grid from the top-left; edge windows may be smaller.
    """
    rows, cols = shape
    if rows <= 0 or cols <= 0 or window <= 0:
        raise ValueError("grid shape and window must be positive")
    n = rows * cols
    if layer in config.full_attention_layers:
        return np.ones((n, n), dtype=bool)
    r, c = np.divmod(np.arange(n), cols)
    wid = (r // window) * (-(-cols // window)) + (c // window)
    return wid[:, None] == wid[None, :]


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """softmax(q k^T / sqrt(d_k)) v with disallowed pairs removed."""
    scores = q @ k.T / math.sqrt(q.shape[-1])
    if mask is not None:
        scores = np.where(mask, scores, -np.inf)
    scores = scores - scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    return weights @ v


# ---------------------------------------------------------------- fusion


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def swiglu(x: np.ndarray) -> np.ndarray:
    """Gated SiLU: first half gates the second half, halving the width."""
    half = x.shape[-1] // 2
    if x.shape[-1] % 2:
        raise ValueError("swiglu needs an even hidden width")
    return silu(x[..., :half]) * x[..., half:]


ACTIVATIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "swiglu": swiglu,
    "silu": silu,
    "gelu": gelu,
    "identity": lambda x: x,
}


def fuse_blocks(grid: TokenGrid) -> np.ndarray:
    """Concatenate each 2 x 2 block as (top-left, top-right, bottom-left, bottom-right)."""
    rows, cols = grid.shape
    if rows % 2 or cols % 2:
        raise ValueError(f"grid {rows}x{cols} must have even sides for 2x2 fusion")
    width = grid.tokens.shape[1]
    t = grid.tokens.reshape(rows // 2, 2, cols // 2, 2, width).transpose(0, 2, 1, 3, 4)
    return t.reshape((rows // 2) * (cols // 2), 4 * width)


def token_fuse(
    grid: TokenGrid,
    w1: np.ndarray,
    b1: np.ndarray,
    w2: np.ndarray,
    b2: np.ndarray,
    activation: str | Callable[[np.ndarray], np.ndarray] = "swiglu",
) -> np.ndarray:
    """``w2 @ act(w1 @ x + b1) + b2`` for every fused 2 x 2 block; returns (N / 4, d_model)."""
    act = ACTIVATIONS[activation] if isinstance(activation, str) else activation
    x = fuse_blocks(grid)
    hidden = act(x @ np.asarray(w1, dtype=float).T + np.asarray(b1, dtype=float))
    return hidden @ np.asarray(w2, dtype=float).T + np.asarray(b2, dtype=float)


# ---------------------------------------------------------------- loss


def _check_simplex(rows: np.ndarray, tol: float = 1e-9) -> None:
    if rows.ndim != 2:
        raise ValueError("each example needs an (L, V) probability matrix")
    if np.any(rows < 0) or np.any(np.abs(rows.sum(axis=1) - 1.0) > tol):
        raise ValueError("every row must be a probability distribution (sum 1 within 1e-9)")


def multitask_loss(probabilities: Sequence[np.ndarray], targets: Sequence[Sequence[int]]) -> float:
    """Negative log-likelihood summed over examples and positions (no averaging)."""
    if len(probabilities) != len(targets):
        raise ValueError("one target sequence per example")
    terms = []
    for probs, ys in zip(probabilities, targets):
        probs = np.asarray(probs, dtype=float)
        _check_simplex(probs)
        ys = np.asarray(ys, dtype=int)
        if ys.shape != (probs.shape[0],):
            raise ValueError("targets must have one id per row")
        if np.any(ys < 0) or np.any(ys >= probs.shape[1]):
            raise ValueError("target id outside the vocabulary")
        picked = probs[np.arange(len(ys)), ys]
        with np.errstate(divide="ignore"):
            terms.extend(-np.log(picked))
    return math.fsum(terms)


def log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def loss_from_scores(
    scores: Sequence[np.ndarray], targets: Sequence[Sequence[int]]
) -> tuple[float, list[np.ndarray]]:
    """Loss of softmax(scores) and its gradient with respect to the scores."""
    if len(scores) != len(targets):
        raise ValueError("one target sequence per example")
    terms, grads = [], []
    for s, ys in zip(scores, targets):
        s = np.asarray(s, dtype=float)
        ys = np.asarray(ys, dtype=int)
        if np.any(ys < 0) or np.any(ys >= s.shape[1]):
            raise ValueError("target id outside the vocabulary")
        logp = log_softmax(s)
        rows = np.arange(len(ys))
        terms.extend(-logp[rows, ys])
        g = np.exp(logp)
        g[rows, ys] -= 1.0
        grads.append(g)
    return math.fsum(terms), grads


@dataclass
class GradientCheck:
    max_relative_error: float
    checked: int = 0
    worst: tuple = field(default_factory=tuple)


def finite_difference_check(
    scores: Sequence[np.ndarray], targets: Sequence[Sequence[int]], step: float = 1e-5
) -> GradientCheck:
    """Compare the analytic score gradient with central differences, entry by entry."""
    _, grads = loss_from_scores(scores, targets)
    worst, worst_at, checked = 0.0, (), 0
    for e, s in enumerate(scores):
        s = np.asarray(s, dtype=float)
        for idx in np.ndindex(*s.shape):
            plus, minus = [np.array(x, dtype=float) for x in scores], [np.array(x, dtype=float) for x in scores]
            plus[e][idx] += step
            minus[e][idx] -= step
            numeric = (loss_from_scores(plus, targets)[0] - loss_from_scores(minus, targets)[0]) / (2 * step)
            analytic = grads[e][idx]
            err = abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8)
            checked += 1
            if err > worst:
                worst, worst_at = err, (e, *idx)
    return GradientCheck(worst, checked, worst_at)
