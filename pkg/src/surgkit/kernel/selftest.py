"""Invariant checks for the numeric kernel, runnable from the command line."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numeric import (
    KernelConfig,
    PositionTriple,
    finite_difference_check,
    loss_from_scores,
    mrope_apply,
    mrope_rotate,
    multitask_loss,
    patch_embed,
    rope_1d,
    token_fuse,
    window_mask,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_rope_reduction(rng: np.random.Generator, draws: int = 100) -> CheckResult:
    worst = 0.0
    for _ in range(draws):
        dim = 6 * int(rng.integers(1, 12))
        cfg = KernelConfig(head_dim=dim)
        x = rng.normal(size=dim)
        n = int(rng.integers(0, 4096))
        worst = max(worst, float(np.abs(mrope_rotate(x, PositionTriple.text(n), cfg) - rope_1d(x, n)).max()))
    return CheckResult("mrope reduces to 1D rope", worst < 1e-9, f"max abs diff {worst:.3e}")


def check_norm(rng: np.random.Generator, draws: int = 100) -> CheckResult:
    worst = 0.0
    cfg = KernelConfig(head_dim=48)
    for _ in range(draws):
        q, k = rng.normal(size=48), rng.normal(size=48)
        pos = PositionTriple(float(rng.integers(0, 50)), int(rng.integers(0, 64)), int(rng.integers(0, 64)))
        q2, k2 = mrope_apply(q, k, pos, pos, cfg)
        worst = max(worst, abs(np.linalg.norm(q2) - np.linalg.norm(q)), abs(np.linalg.norm(k2) - np.linalg.norm(k)))
    return CheckResult("mrope preserves norm", worst < 1e-12, f"max norm change {worst:.3e}")


def check_relative(rng: np.random.Generator, draws: int = 50) -> CheckResult:
    worst = 0.0
    cfg = KernelConfig(head_dim=24)
    for _ in range(draws):
        q, k = rng.normal(size=24), rng.normal(size=24)
        a = PositionTriple(*(int(v) for v in rng.integers(0, 20, size=3)))
        b = PositionTriple(*(int(v) for v in rng.integers(0, 20, size=3)))
        shift = [int(v) for v in rng.integers(0, 30, size=3)]
        base = np.dot(*mrope_apply(q, k, a, b, cfg))
        moved = np.dot(*mrope_apply(q, k, a.shifted(*shift), b.shifted(*shift), cfg))
        worst = max(worst, abs(base - moved))
    return CheckResult("mrope scores depend on offsets only", worst < 1e-9, f"max diff {worst:.3e}")


def check_window(rng: np.random.Generator) -> CheckResult:
    ok = True
    for _ in range(50):
        rows, cols, m = (int(v) for v in rng.integers(1, 12, size=3))
        allowed = int(window_mask((rows, cols), m, 0).sum())
        bound = rows * cols * m * m
        ok &= allowed <= bound
        if rows % m == 0 and cols % m == 0:
            ok &= allowed == bound
    ok &= bool(window_mask((4, 4), 8, 7).all())
    return CheckResult("window mask pair bound", bool(ok), "allowed pairs <= N*M^2, equality when M divides")


def check_fusion(rng: np.random.Generator) -> CheckResult:
    cfg = KernelConfig(patch_size=2)
    ok = True
    for rows, cols in ((2, 2), (4, 6), (8, 8)):
        img = rng.normal(size=(rows * 2, cols * 2, 3))
        grid = patch_embed(img, rng.normal(size=(3, 12)), np.zeros(3), cfg)
        out = token_fuse(grid, rng.normal(size=(8, 12)), np.zeros(8), rng.normal(size=(5, 4)), np.zeros(5))
        ok &= out.shape == (rows * cols // 4, 5)
    return CheckResult("token fusion is a 4x reduction", bool(ok), "output length = N / 4")


def check_loss(rng: np.random.Generator) -> CheckResult:
    length, vocab = 7, 11
    uniform = multitask_loss([np.full((length, vocab), 1 / vocab)], [rng.integers(0, vocab, size=length)])
    err_uniform = abs(uniform - length * math.log(vocab))
    probs = rng.random((3, 5))
    probs /= probs.sum(axis=1, keepdims=True)
    ys = [1, 4, 0]
    brute = -sum(math.log(probs[i, ys[i]]) for i in range(3))
    err_brute = abs(multitask_loss([probs], [ys]) - brute)
    ok = err_uniform < 1e-9 and err_brute < 1e-12
    return CheckResult("multitask loss closed forms", ok, f"uniform err {err_uniform:.1e}, brute err {err_brute:.1e}")


def check_gradient(rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    for _ in range(5):
        scores = [rng.normal(size=(int(rng.integers(1, 4)), 5)) for _ in range(2)]
        targets = [rng.integers(0, 5, size=s.shape[0]) for s in scores]
        worst = max(worst, finite_difference_check(scores, targets).max_relative_error)
    loss, _ = loss_from_scores([np.zeros((2, 3))], [[0, 1]])
    ok = worst < 1e-5 and abs(loss - 2 * math.log(3)) < 1e-12
    return CheckResult("loss gradient vs finite differences", ok, f"max relative error {worst:.2e}")


CHECKS: tuple[Callable[[np.random.Generator], CheckResult], ...] = (
    check_rope_reduction,
    check_norm,
    check_relative,
    check_window,
    check_fusion,
    check_loss,
    check_gradient,
)


def run_selftest(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [check(rng) for check in CHECKS]


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  detail"]
    lines += [f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}" for r in results]
    return "\n".join(lines)
