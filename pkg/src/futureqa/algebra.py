"""Complex-vector kernels used by every scoring path.

Vectors live in C^d and are stored as separate float64 real/imaginary
arrays. Leading batch dimensions broadcast; the trailing axis is d.

Two code paths exist on purpose: the `re_dot*` functions go through
numpy's complex arithmetic, while the `expand*_re` functions evaluate
the equivalent real-arithmetic term expansion. They must agree to
~1e-9 relative error, which the test suite enforces as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionMismatch(ValueError):
    """Operands do not share the trailing dimension d."""


@dataclass(frozen=True)
class ComplexVec:
    """A d-dimensional complex vector (or a batch of them).

    re/im have identical shape (..., d) and dtype float64.
    """

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        re = np.asarray(self.re, dtype=np.float64)
        im = np.asarray(self.im, dtype=np.float64)
        if re.shape != im.shape:
            raise DimensionMismatch(
                f"re shape {re.shape} != im shape {im.shape}")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @property
    def dim(self) -> int:
        return self.re.shape[-1]

    @property
    def shape(self):
        return self.re.shape

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    def copy(self) -> "ComplexVec":
        return ComplexVec(self.re.copy(), self.im.copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ComplexVec):
            return NotImplemented
        return np.array_equal(self.re, other.re) and np.array_equal(self.im, other.im)


def _check_dims(*vecs: ComplexVec) -> None:
    d = vecs[0].dim
    for v in vecs[1:]:
        if v.dim != d:
            raise DimensionMismatch(
                f"operand dims differ: {[v.dim for v in vecs]}")


def conjugate(v: ComplexVec) -> ComplexVec:
    """Elementwise complex conjugate: re unchanged, im negated."""
    return ComplexVec(v.re, -v.im)


def re_dot3(a: ComplexVec, b: ComplexVec, c: ComplexVec) -> np.ndarray:
    """Re(sum_k a(k) b(k) c(k)) via direct complex arithmetic."""
    _check_dims(a, b, c)
    prod = a.to_complex() * b.to_complex() * c.to_complex()
    return np.real(prod.sum(axis=-1))


def expand3_re(a: ComplexVec, b: ComplexVec, c: ComplexVec) -> np.ndarray:
    """Re(sum_k a b c) as a four-term expansion in real arithmetic.

    Equals re_dot3 on any input. When the third argument is the
    conjugate of some vector v, the four terms coincide with the
    familiar +ReReRe +ReImIm +ImReIm -ImImRe expansion in v's parts.
    """
    _check_dims(a, b, c)
    terms = (
        a.re * b.re * c.re
        - a.im * b.im * c.re
        - a.re * b.im * c.im
        - a.im * b.re * c.im
    )
    return terms.sum(axis=-1)


def re_dot4(a: ComplexVec, b: ComplexVec, c: ComplexVec, x: ComplexVec) -> np.ndarray:
    """Re(sum_k a(k) b(k) c(k) x(k)) via direct complex arithmetic."""
    _check_dims(a, b, c, x)
    prod = a.to_complex() * b.to_complex() * c.to_complex() * x.to_complex()
    return np.real(prod.sum(axis=-1))


def expand4_re(a: ComplexVec, b: ComplexVec, c: ComplexVec, x: ComplexVec) -> np.ndarray:
    """Re(sum_k a b c x) as an eight-term expansion in real arithmetic.

    Equals re_dot4 on any input; with a conjugated third argument the
    terms match the printed four-way expansion with four + and four -
    signs.
    """
    _check_dims(a, b, c, x)
    terms = (
        a.re * b.re * c.re * x.re
        - a.re * b.re * c.im * x.im
        - a.im * b.im * c.re * x.re
        + a.im * b.im * c.im * x.im
        - a.re * b.im * c.re * x.im
        - a.re * b.im * c.im * x.re
        - a.im * b.re * c.re * x.im
        - a.im * b.re * c.im * x.re
    )
    return terms.sum(axis=-1)


def complex_mul(a: ComplexVec, b: ComplexVec) -> ComplexVec:
    """Elementwise complex product."""
    _check_dims(a, b)
    return ComplexVec(a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re)


def split_to_complex(v: np.ndarray) -> ComplexVec:
    """Interpret a 2d real vector as C^d: first half real, second half imaginary."""
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[-1]
    if n % 2 != 0:
        raise DimensionMismatch(f"length {n} is odd; expected 2d")
    d = n // 2
    return ComplexVec(v[..., :d], v[..., d:])


def flatten_complex(v: ComplexVec) -> np.ndarray:
    """Inverse of split_to_complex: concatenate real and imaginary halves."""
    return np.concatenate([v.re, v.im], axis=-1)
