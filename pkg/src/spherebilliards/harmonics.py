"""Real spherical harmonics as homogeneous harmonic polynomials in (x, y, z).

A degree-``l`` real spherical harmonic is the restriction to the unit sphere of
a homogeneous harmonic polynomial of degree ``l``.  Keeping the polynomial form
gives exact values, ambient gradients and round Laplacians (``-l(l+1)`` times
the value) with no charts or pole handling.

Convention: orthonormal on the unit sphere, ``m > 0`` goes with ``cos(m*phi)``,
``m < 0`` with ``sin(|m|*phi)``, no Condon-Shortley phase.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np


def _shift(poly: np.ndarray, axis: int) -> np.ndarray:
    """Multiply a coefficient cube by x, y or z."""
    out = np.zeros_like(poly)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    src[axis] = slice(0, poly.shape[axis] - 1)
    dst[axis] = slice(1, None)
    out[tuple(dst)] = poly[tuple(src)]
    return out


def _times_r2(poly: np.ndarray) -> np.ndarray:
    return _shift(_shift(poly, 0), 0) + _shift(_shift(poly, 1), 1) + _shift(_shift(poly, 2), 2)


@lru_cache(maxsize=None)
def solid_harmonics(lmax: int) -> dict[tuple[int, int], np.ndarray]:
    """Coefficient cubes ``P[a, b, c]`` (coefficient of x^a y^b z^c) for every (l, m), l <= lmax.

    Built with the standard recursion for real regular solid harmonics (which
    already carries the sqrt(2) for m != 0), then scaled to orthonormality.
    """
    n = lmax + 1
    C: dict[tuple[int, int], np.ndarray] = {}
    S: dict[tuple[int, int], np.ndarray] = {}
    one = np.zeros((n, n, n))
    one[0, 0, 0] = 1.0
    C[0, 0] = one
    S[0, 0] = np.zeros((n, n, n))
    for l in range(lmax):
        # diagonal step
        f = math.sqrt((2.0 if l == 0 else 1.0) * (2 * l + 1) / (2 * l + 2))
        C[l + 1, l + 1] = f * (_shift(C[l, l], 0) - (0.0 if l == 0 else 1.0) * _shift(S[l, l], 1))
        S[l + 1, l + 1] = f * (_shift(C[l, l], 1) + (0.0 if l == 0 else 1.0) * _shift(S[l, l], 0))
        for m in range(0, l + 1):
            a = math.sqrt((l + m) * (l - m))
            d = math.sqrt((l + m + 1) * (l - m + 1))
            for T in (C, S):
                prev = T.get((l - 1, m))
                term = (2 * l + 1) * _shift(T[l, m], 2)
                if prev is not None and a > 0:
                    term = term - a * _times_r2(prev)
                T[l + 1, m] = term / d

    out: dict[tuple[int, int], np.ndarray] = {}
    for l in range(lmax + 1):
        base = math.sqrt((2 * l + 1) / (4 * math.pi))
        out[l, 0] = base * C[l, 0]
        for m in range(1, l + 1):
            out[l, m] = base * C[l, m]
            out[l, -m] = base * S[l, m]
    return out


def _derivative(poly: np.ndarray, axis: int) -> np.ndarray:
    out = np.zeros_like(poly)
    n = poly.shape[axis]
    k = np.arange(1, n, dtype=float)
    shape = [1, 1, 1]
    shape[axis] = n - 1
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    src[axis] = slice(1, None)
    dst[axis] = slice(0, n - 1)
    out[tuple(dst)] = poly[tuple(src)] * k.reshape(shape)
    return out


class HarmonicField:
    """A real function on S^2 given by spherical-harmonic coefficients.

    ``evaluate`` returns value, ambient gradient of the polynomial extension and
    the round Laplacian in one contraction.
    """

    def __init__(self, coefficients: tuple[tuple[int, int, float], ...]):
        self.coefficients = tuple((int(l), int(m), float(c)) for l, m, c in coefficients)
        for l, m, _ in self.coefficients:
            if l < 0 or abs(m) > l:
                raise ValueError(f"invalid harmonic index (l={l}, m={m})")
        self.degree = max((l for l, _, _ in self.coefficients), default=0)
        basis = solid_harmonics(max(self.degree, 1))
        n = max(self.degree, 1) + 1
        value = np.zeros((n, n, n))
        lap = np.zeros((n, n, n))
        for l, m, c in self.coefficients:
            value += c * basis[l, m]
            lap += -l * (l + 1) * c * basis[l, m]
        stack = np.stack(
            [value, _derivative(value, 0), _derivative(value, 1), _derivative(value, 2), lap]
        )
        # keep only monomials that appear in some row
        a, b, c = np.nonzero(np.any(stack != 0.0, axis=0))
        if a.size == 0:
            a = b = c = np.zeros(1, dtype=int)
        self._exps = (a, b, c)
        self._matrix = stack[:, a, b, c]
        self._n = n
        self.is_zero = not any(c != 0.0 for _, _, c in self.coefficients)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Rows: value, d/dx, d/dy, d/dz, round Laplacian.  ``x`` is (3,) or (N, 3)."""
        x = np.asarray(x, dtype=float)
        a, b, c = self._exps
        if x.ndim == 1:
            pw = np.power.outer(x, np.arange(self._n))
            return self._matrix @ (pw[0, a] * pw[1, b] * pw[2, c])
        pw = x[:, :, None] ** np.arange(self._n)
        mono = pw[:, 0, a] * pw[:, 1, b] * pw[:, 2, c]
        return self._matrix @ mono.T

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)[0]

    def tangential_gradient(self, x: np.ndarray) -> np.ndarray:
        """Round-metric gradient of the restriction to the sphere at unit vector(s) ``x``."""
        ev = self.evaluate(x)
        grad = ev[1:4]
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return grad - np.dot(grad, x) * x
        grad = grad.T
        return grad - np.sum(grad * x, axis=1)[:, None] * x
