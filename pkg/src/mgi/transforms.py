"""Orthonormal sparsifying transforms on a pixel grid.

Images are flat vectors in row-major order, i.e. ``image.reshape(height,
width)`` gives the picture.  Three bases are offered:

* ``identity``
* ``dct2``  -- separable orthonormal DCT-II (``scipy.fft``)
* ``haar2`` -- nonstandard (Mallat) multilevel 2-D Haar decomposition

All three are orthogonal, so the inverse is the transpose.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import InvalidInputError

__all__ = ["SparsityBasis", "forward", "inverse", "component_std", "max_haar_levels"]

KINDS = ("identity", "dct2", "haar2")
_SQRT_HALF = np.sqrt(0.5)


def max_haar_levels(width, height):
    """Largest depth with both sides divisible by ``2**levels``."""
    levels = 0
    while (
        width % (2 ** (levels + 1)) == 0
        and height % (2 ** (levels + 1)) == 0
        and 2 ** (levels + 1) <= min(width, height)
    ):
        levels += 1
    return levels


@dataclass(frozen=True)
class SparsityBasis:
    kind: str
    width: int
    height: int
    haar_levels: int = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown basis {self.kind!r}; expected one of {KINDS}")
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("grid sides must be >= 1")
        if self.kind == "haar2":
            levels = self.haar_levels
            if levels is None:
                levels = max_haar_levels(self.width, self.height)
                object.__setattr__(self, "haar_levels", levels)
            f = 2**levels
            if levels < 0 or self.width % f or self.height % f:
                raise InvalidInputError(
                    f"{self.width}x{self.height} grid is not divisible by 2**{levels}"
                )

    @property
    def n(self):
        return self.width * self.height


def _stack(b, x):
    # (..., n) -> (..., height, width)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != b.n:
        raise InvalidInputError(f"expected length {b.n}, got {x.shape[-1]}")
    return x.reshape(x.shape[:-1] + (b.height, b.width))


def _haar_step(a, axis):
    a = np.moveaxis(a, axis, -1)
    even, odd = a[..., 0::2], a[..., 1::2]
    out = np.concatenate([(even + odd) * _SQRT_HALF, (even - odd) * _SQRT_HALF], axis=-1)
    return np.moveaxis(out, -1, axis)


def _haar_unstep(a, axis):
    a = np.moveaxis(a, axis, -1)
    half = a.shape[-1] // 2
    s, d = a[..., :half], a[..., half:]
    out = np.empty_like(a)
    out[..., 0::2] = (s + d) * _SQRT_HALF
    out[..., 1::2] = (s - d) * _SQRT_HALF
    return np.moveaxis(out, -1, axis)


def _haar_forward(img, levels):
    out = img.copy()
    h, w = out.shape[-2:]
    for _ in range(levels):
        block = out[..., :h, :w]
        block = _haar_step(block, -1)
        block = _haar_step(block, -2)
        out[..., :h, :w] = block
        h //= 2
        w //= 2
    return out


def _haar_inverse(coef, levels):
    out = coef.copy()
    H, W = out.shape[-2:]
    for lev in reversed(range(levels)):
        h, w = H >> lev, W >> lev
        block = out[..., :h, :w]
        block = _haar_unstep(block, -2)
        block = _haar_unstep(block, -1)
        out[..., :h, :w] = block
    return out


def forward(b, image):
    """Coefficients ``T @ image``.  Accepts a stack of images along axis 0."""
    img = _stack(b, image)
    if b.kind == "identity":
        out = img.copy()
    elif b.kind == "dct2":
        out = scipy.fft.dctn(img, type=2, norm="ortho", axes=(-2, -1))
    else:
        out = _haar_forward(img, b.haar_levels)
    return out.reshape(np.shape(image))


def inverse(b, coeffs):
    """Image ``T^T @ coeffs``."""
    c = _stack(b, coeffs)
    if b.kind == "identity":
        out = c.copy()
    elif b.kind == "dct2":
        out = scipy.fft.idctn(c, type=2, norm="ortho", axes=(-2, -1))
    else:
        out = _haar_inverse(c, b.haar_levels)
    return out.reshape(np.shape(coeffs))


def component_std(b, sigma, sym_rtol=1e-9):
    """Standard deviations of the transform coefficients.

    Returns ``sqrt(diag(T sigma T^T))``.  The transform is applied to the
    columns of ``sigma`` and then to the rows, so the cost is that of ``2n``
    fast transforms rather than a dense triple product.
    """
    sigma = np.asarray(sigma, dtype=float)
    n = b.n
    if sigma.shape != (n, n):
        raise InvalidInputError(f"sigma must be {n}x{n}, got {sigma.shape}")
    scale = max(np.abs(sigma).max(), np.finfo(float).tiny)
    if np.abs(sigma - sigma.T).max() > sym_rtol * scale:
        raise InvalidInputError("sigma is not symmetric")
    if b.kind == "identity":
        d = np.diag(sigma).copy()
    else:
        # rows of sigma are its columns (symmetry): forward on rows gives (T sigma)^T
        ts = forward(b, sigma)  # = sigma T^T
        d = np.empty(n)
        chunk = 512
        for start in range(0, n, chunk):
            stop = min(start + chunk, n)
            # (T sigma T^T)_ii = (T (sigma T^T))_ii
            block = forward(b, ts[:, start:stop].T.copy())  # rows: T applied to columns i
            d[start:stop] = block[np.arange(stop - start), np.arange(start, stop)]
    return np.sqrt(np.maximum(d, 0.0))
