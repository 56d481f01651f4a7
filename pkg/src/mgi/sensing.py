"""Measurement model ``xi = A f + nu`` for three multiplexed ghost images.

Units: ``xi`` is expressed in units of the photon budget, i.e. expected
photon counts divided by ``photons_per_pixel``.  With unit arm scales and
unit pixel area a fully transparent pixel contributes 1 to every detector
that covers it, so a size-3 detector over a transparent region reads 9.

Noise covariance (per model, as a function of the assumed object ``f``)::

    Sigma_nu(f) = g(f) g(f)^T + diag(sigma_prime)
    g(f)        = (sqrt(k_2) B f; sqrt(k_3) B f; sqrt(k_4) B f)

The rank-one part is the pixel-integrated ghost-image correlation; with
``k_j = a_j**2 * bucket_rel_var`` it is a common relative fluctuation of
all correlator outputs.  ``sigma_prime`` collects noise arising after the
correlators: worst-case shot noise, dark/readout variance and the fraction
``p_acc`` of noise photons that leaks through the coincidence window.

A correlator averages ``frames`` exposures, each lit with
``photons_per_pixel`` photons per pixel, so the photon-noise terms shrink
as ``1 / frames`` while the mean is unchanged.
"""

from dataclasses import dataclass, field
from functools import cached_property
import hashlib
import math

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInputError, SingularCovarianceError
from .linalg import LowRankPlusDiag, pseudoinverse

__all__ = [
    "DetectorGeometry",
    "SensingModel",
    "build_detector_matrix",
    "detector_footprint",
    "build_A",
    "make_model",
    "build_sigma_nu",
    "worst_case_f",
    "check_estimability",
    "noise_photon_term",
    "DEFAULT_FRAMES",
]

DEFAULT_FRAMES = 100_000

PLACEMENTS = ("sliding", "tiled")


@dataclass(frozen=True)
class DetectorGeometry:
    """Pixel grid plus square detectors of ``size`` x ``size`` pixels.

    ``sliding`` puts one detector per pixel: detector ``(r, c)`` integrates
    pixels ``r..r+size-1`` x ``c..c+size-1`` cropped to the image, so an
    interior detector's footprint is centred on pixel ``(r+size//2,
    c+size//2)``.  ``tiled`` uses non-overlapping tiles, edge tiles cropped.
    """

    width: int
    height: int
    size: int = 3
    placement: str = "sliding"

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("grid sides must be >= 1")
        if self.size < 1:
            raise InvalidInputError("detector size must be >= 1")
        if self.placement not in PLACEMENTS:
            raise InvalidInputError(f"placement must be one of {PLACEMENTS}")

    @property
    def n(self):
        return self.width * self.height

    @property
    def detector_shape(self):
        """(rows, cols) of the detector array."""
        if self.placement == "sliding":
            return self.height, self.width
        return -(-self.height // self.size), -(-self.width // self.size)

    @property
    def n_detectors(self):
        r, c = self.detector_shape
        return r * c


def _box_1d(n_pix, size, placement):
    if placement == "sliding":
        starts = np.arange(n_pix)
    else:
        starts = np.arange(0, n_pix, size)
    rows, cols = [], []
    for p, s in enumerate(starts):
        k = np.arange(s, min(s + size, n_pix))
        rows.append(np.full(k.size, p))
        cols.append(k)
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(starts.size, n_pix))


def build_detector_matrix(geometry):
    """Sparse detector matrix ``B``: row ``p`` sums the pixels under detector ``p``.

    The 2-D box response is separable, so ``B = B_rows (x) B_cols`` in
    row-major pixel order.
    """
    by = _box_1d(geometry.height, geometry.size, geometry.placement)
    bx = _box_1d(geometry.width, geometry.size, geometry.placement)
    return sp.kron(by, bx, format="csr")


def detector_footprint(geometry, row, col):
    """Flat pixel indices integrated by detector ``(row, col)``."""
    b = build_detector_matrix(geometry)
    rows, cols = geometry.detector_shape
    if not (0 <= row < rows and 0 <= col < cols):
        raise InvalidInputError("detector index out of range")
    return np.sort(b[row * cols + col].indices)


def build_A(geometry, arm_scales=(1.0, 1.0, 1.0), pixel_area=1.0):
    """Stacked measurement matrix ``[B C_2; B C_3; B C_4]`` (sparse).

    ``C_j = arm_scale_j * pixel_area * I``.  A single scale gives the
    one-block matrix of a direct (ordinary) image.
    """
    scales = np.atleast_1d(np.asarray(arm_scales, dtype=float))
    if scales.ndim != 1 or scales.size not in (1, 3) or np.any(scales <= 0) or pixel_area <= 0:
        raise InvalidInputError("need 3 (or 1) positive arm scales and a positive pixel area")
    b = build_detector_matrix(geometry)
    return sp.vstack([b * (a * pixel_area) for a in scales], format="csr")


def noise_photon_term(rate, arms=3, p_acc=0.1):
    """Per-pixel variance (in counts) added by noise photons.

    Correlators pass only the fraction ``p_acc`` of noise photons that
    fall into a coincidence window; a direct (single-arm) image gets them
    all.
    """
    if rate < 0:
        raise InvalidInputError("noise-photon rate must be >= 0")
    if not 0.0 <= p_acc <= 1.0:
        raise InvalidInputError("p_acc must lie in [0, 1]")
    return rate * (p_acc if arms > 1 else 1.0)


def _noiseless(photons):
    return photons == 0 or math.isinf(photons)


@dataclass(frozen=True, eq=False)
class SensingModel:
    geometry: DetectorGeometry
    arm_scales: tuple
    pixel_area: float
    sigma_prime: np.ndarray
    gi_scales: tuple
    photons_per_pixel: float
    noise_photons_per_pixel: float = 0.0
    p_acc: float = 0.1
    sigma_floor: float = 0.0
    dark_variance: float = 0.0
    U: np.ndarray = field(default=None, repr=False)
    frames: float = DEFAULT_FRAMES

    def __post_init__(self):
        sp_ = np.asarray(self.sigma_prime, dtype=float)
        object.__setattr__(self, "sigma_prime", sp_)
        if len(self.arm_scales) != len(self.gi_scales):
            raise InvalidInputError("arm_scales and gi_scales differ in length")
        if sp_.shape != (self.arms * self.geometry.n_detectors,):
            raise InvalidInputError("sigma_prime must have one entry per detector element")
        if np.any(sp_ <= 0):
            raise InvalidInputError("sigma_prime entries must be positive")
        if self.U is not None:
            u = np.asarray(self.U, dtype=float)
            if u.ndim != 2 or u.shape[1] != self.n:
                raise InvalidInputError(f"U must have {self.n} columns")
            object.__setattr__(self, "U", u)

    @property
    def n(self):
        return self.geometry.n

    @property
    def arms(self):
        return len(self.arm_scales)

    @property
    def noiseless(self):
        return _noiseless(self.photons_per_pixel)

    @cached_property
    def B(self):
        return build_detector_matrix(self.geometry)

    @cached_property
    def A(self):
        return build_A(self.geometry, self.arm_scales, self.pixel_area)

    def U_matrix(self):
        return np.eye(self.n) if self.U is None else self.U

    @cached_property
    def fingerprint(self):
        """Hex digest identifying everything the estimator depends on."""
        h = hashlib.sha256()
        g = self.geometry
        h.update(f"{g.width},{g.height},{g.size},{g.placement};".encode())
        h.update(np.asarray(self.arm_scales, dtype="<f8").tobytes())
        h.update(np.asarray([self.pixel_area, self.photons_per_pixel, self.noise_photons_per_pixel,
                             self.p_acc, self.dark_variance, self.frames], dtype="<f8").tobytes())
        h.update(np.asarray(self.gi_scales, dtype="<f8").tobytes())
        h.update(self.sigma_prime.astype("<f8").tobytes())
        if self.U is not None:
            h.update(self.U.astype("<f8").tobytes())
        return h.hexdigest()


def make_model(
    geometry,
    photons_per_pixel,
    noise_photons_per_pixel=0.0,
    p_acc=0.1,
    dark_variance=0.0,
    bucket_rel_var=None,
    arm_scales=(1.0, 1.0, 1.0),
    pixel_area=1.0,
    U=None,
    ordinary=False,
    frames=DEFAULT_FRAMES,
):
    """Assemble a SensingModel calibrated to a photon budget.

    ``ordinary=True`` builds the single-arm model of a direct image: no
    correlator, so no ghost-image correlation term and every noise photon
    counts.

    ``photons_per_pixel`` of 0 or ``inf`` means noiseless acquisition; the
    covariance then keeps the shape it has at a unit budget (without noise
    photons) so the estimator is still defined.
    ``bucket_rel_var`` defaults to ``1 / (photons_per_pixel * n * frames)``:
    the relative Poisson fluctuation of the accumulated bucket count at
    ``f = 1``.  ``dark_variance`` is added per correlator output and does
    not average down with ``frames``.
    """
    if photons_per_pixel < 0 or noise_photons_per_pixel < 0 or dark_variance < 0:
        raise InvalidInputError("budgets and variances must be >= 0")
    if not (frames >= 1 and math.isfinite(frames)):
        raise InvalidInputError("frames must be a finite number >= 1")
    n = geometry.n
    budget = 1.0 if _noiseless(photons_per_pixel) else float(photons_per_pixel)
    rate = 0.0 if _noiseless(photons_per_pixel) else float(noise_photons_per_pixel)
    if bucket_rel_var is None:
        bucket_rel_var = 1.0 / (budget * n * frames)
    scales = tuple(float(a) for a in arm_scales)
    if ordinary:
        scales = scales[:1]
        gi_scales = (0.0,)
    else:
        gi_scales = tuple(a * a * bucket_rel_var for a in scales)
    arms = 1 if ordinary else 3

    b = build_detector_matrix(geometry)
    mass = np.asarray(b.sum(axis=1)).ravel() * pixel_area  # pixels under each detector
    per_arm = []
    for a in scales:
        shot = a * mass / budget
        leak = noise_photon_term(rate, arms, p_acc) * mass / budget**2
        per_arm.append((shot + leak) / frames + dark_variance)
    sigma_prime = np.concatenate(per_arm)

    # floor: 1e-9 of the mean ghost-image variance at f = 1
    gi_diag = np.concatenate([k * mass**2 for k in gi_scales])
    floor = 1e-9 * float(gi_diag.mean())
    if floor == 0.0:
        floor = 1e-9 * float(np.mean(sigma_prime))
    sigma_prime = np.maximum(sigma_prime, max(floor, np.finfo(float).tiny))
    return SensingModel(
        geometry=geometry,
        arm_scales=scales,
        pixel_area=float(pixel_area),
        sigma_prime=sigma_prime,
        gi_scales=gi_scales,
        photons_per_pixel=float(photons_per_pixel),
        noise_photons_per_pixel=float(noise_photons_per_pixel),
        p_acc=float(p_acc),
        sigma_floor=floor,
        dark_variance=float(dark_variance),
        U=U,
        frames=float(frames),
    )


def worst_case_f(model):
    """All pixels fully transparent: the f that maximises the reduction MSE."""
    return np.ones(model.n)


def gi_factor(model, f):
    """Stacked ``(sqrt(k_j) B f)_j``, the rank-one factor of the GI covariance."""
    f = np.asarray(f, dtype=float).ravel()
    if f.size != model.n:
        raise InvalidInputError(f"object has {f.size} pixels, model expects {model.n}")
    bf = model.B @ f * model.pixel_area
    return np.concatenate([math.sqrt(k) * bf for k in model.gi_scales])


def build_sigma_nu(model, f_assumed):
    """Noise covariance ``Sigma_nu(f)`` as diagonal plus rank one."""
    if np.any(model.sigma_prime < model.sigma_floor):
        raise SingularCovarianceError("sigma_prime below the configured floor")
    return LowRankPlusDiag(model.sigma_prime, gi_factor(model, f_assumed)[:, None])


def check_estimability(model, rtol=1e-8):
    """Test ``U (I - A^- A) = 0``.

    Returns ``(ok, info)`` where ``info`` has the residual norm ratio and
    the dimension of the part of ``U`` that the device cannot see.
    """
    a = model.A
    ata = (a.T @ a).toarray() if sp.issparse(a) else a.T @ a
    u = model.U_matrix()
    w, v = np.linalg.eigh(ata)
    # eigenvalues of A^T A carry absolute error ~ n eps w_max
    rel = max((1e-10 * max(a.shape)) ** 2, 10 * a.shape[1] * np.finfo(float).eps)
    cutoff = rel * max(w.max(), 0.0)
    null = v[:, w <= cutoff]
    un = u @ null
    norm_u = np.linalg.norm(u)
    resid = np.linalg.norm(un)
    ratio = resid / norm_u if norm_u > 0 else 0.0
    if null.shape[1] and ratio > rtol:
        s = np.linalg.svd(un, compute_uv=False)
        deficiency = int(np.sum(s > rtol * norm_u))
    else:
        deficiency = 0
    return ratio <= rtol, {"residual": ratio, "deficiency": deficiency,
                           "nullity": int(null.shape[1])}


def check_estimability_dense(a, u, rtol=1e-8):
    """Same test for explicit dense ``A`` and ``U`` via the pseudoinverse."""
    a = np.asarray(a, dtype=float)
    u = np.asarray(u, dtype=float)
    m = u @ (np.eye(a.shape[1]) - pseudoinverse(a) @ a)
    norm_u = np.linalg.norm(u)
    ratio = np.linalg.norm(m) / norm_u if norm_u > 0 else 0.0
    deficiency = int(np.linalg.matrix_rank(m, tol=rtol * max(norm_u, 1e-300))) if ratio > rtol else 0
    return ratio <= rtol, {"residual": ratio, "deficiency": deficiency}
