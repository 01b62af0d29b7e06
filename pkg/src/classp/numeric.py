"""Dense float64 arithmetic, a seeded PCG32 generator and a gradient checker.

Matrices are plain 2-D ``numpy.float64`` arrays in C (row-major) order; the
helpers here add the shape checks the rest of the package relies on.

The generator is PCG32 (XSH-RR output, 64-bit LCG state) as published by
O'Neill, seeded the same way as ``pcg32_srandom_r`` in pcg-c-basic, so a
given ``(seed, stream)`` pair yields the same words on every platform.
Bulk draws are vectorized by jumping the LCG ahead in closed form.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import DimensionError, NumericError

PCG_MULT = 6364136223846793005
DEFAULT_STREAM = 54
_MASK64 = (1 << 64) - 1


def as_matrix(a) -> np.ndarray:
    m = np.array(a, dtype=np.float64, order="C", ndmin=2)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


_ELEMENTWISE = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def elementwise(a, b, op: str) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(a, b)


class Pcg32:
    """PCG32 generator; the whole state is two 64-bit integers."""

    def __init__(self, seed: int, stream: int = DEFAULT_STREAM):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        self.inc = ((self.stream << 1) | 1) & _MASK64
        self.state = 0
        self._advance_scalar()
        self.state = (self.state + self.seed) & _MASK64
        self._advance_scalar()

    def _advance_scalar(self):
        self.state = (self.state * PCG_MULT + self.inc) & _MASK64

    def getstate(self) -> tuple[int, int]:
        return self.state, self.inc

    def setstate(self, st: tuple[int, int]) -> None:
        self.state, self.inc = int(st[0]), int(st[1])

    def next_u32(self) -> int:
        old = self.state
        self._advance_scalar()
        xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFFFFFF

    def random_u32(self, n: int) -> np.ndarray:
        """Next ``n`` output words as a uint32 array (same as n scalar calls)."""
        n = int(n)
        if n <= 0:
            return np.zeros(0, dtype=np.uint32)
        # state_k = A_k * s0 + C_k, with A_k = a^k, C_k = c * (a^(k-1) + ... + 1);
        # uint64 array arithmetic wraps mod 2^64, which is exactly what the LCG needs.
        mult = np.full(n, PCG_MULT, dtype=np.uint64)
        a_pow = np.cumprod(mult)
        ones = np.ones(1, dtype=np.uint64)
        geo = np.cumsum(np.concatenate([ones, a_pow[:-1]]))
        c_k = geo * np.uint64(self.inc)
        s0 = np.uint64(self.state)
        states = a_pow * s0 + c_k
        olds = np.concatenate([np.array([self.state], dtype=np.uint64), states[:-1]])
        self.state = int(states[-1])

        xorshifted = (((olds >> np.uint64(18)) ^ olds) >> np.uint64(27)).astype(np.uint32)
        rot = (olds >> np.uint64(59)).astype(np.uint32)
        left = (np.uint32(32) - rot) & np.uint32(31)
        return (xorshifted >> rot) | (xorshifted << left)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` floats in the open interval (0, 1): ``(u32 + 0.5) / 2**32``."""
        return (self.random_u32(n).astype(np.float64) + 0.5) * 2.0**-32

    def standard_normal(self, n: int) -> np.ndarray:
        """Box-Muller: each pair of uniforms (u1, u2) yields r·cos θ then r·sin θ."""
        pairs = (int(n) + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log(u[:, 0]))
        theta = 2.0 * math.pi * u[:, 1]
        z = np.empty((pairs, 2))
        z[:, 0] = r * np.cos(theta)
        z[:, 1] = r * np.sin(theta)
        return z.ravel()[:n]

    def permutation(self, n: int) -> np.ndarray:
        """Random permutation of ``range(n)`` by sorting one draw per index.

        Equal keys keep index order (stable sort), so the result is fully
        determined by the generator state.
        """
        keys = self.random_u32(n)
        return np.argsort(keys, kind="stable")

    def choice(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)`` (all of them if k >= n)."""
        return self.permutation(n)[: min(int(k), int(n))]


def rand_normal(rng: Pcg32, rows: int, cols: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    if rows < 1 or cols < 1:
        raise DimensionError(f"invalid shape ({rows}, {cols})")
    z = rng.standard_normal(rows * cols).reshape(rows, cols)
    return mean + std * z


def finite_diff_grad(f: Callable[[np.ndarray], float], w, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    if not h > 0:
        raise ValueError(f"step h must be positive, got {h}")
    w = np.array(w, dtype=np.float64).ravel()
    grad = np.empty_like(w)
    for i in range(w.size):
        orig = w[i]
        w[i] = orig + h
        fp = float(f(w))
        w[i] = orig - h
        fm = float(f(w))
        w[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NumericError(f"non-finite function value at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(a, b, floor: float = 1e-8) -> float:
    """max |a-b| / max(|a|, |b|, floor), the usual gradient-check metric."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
