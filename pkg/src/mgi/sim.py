"""Synthetic objects and seeded acquisition of ghost and ordinary images.

Each acquisition draws from one ``numpy.random.Generator`` (PCG64) seeded
with the configured 64-bit seed, so a seed fully determines the output on a
given numpy version.
"""

from dataclasses import asdict, dataclass
import math

import numpy as np

from .errors import InvalidInputError
from .io import read_pgm, write_measurement
from .sensing import (
    DEFAULT_FRAMES,
    DetectorGeometry,
    build_detector_matrix,
    gi_factor,
    make_model,
    noise_photon_term,
)

__all__ = [
    "AcquisitionConfig",
    "Measurement",
    "gen_object",
    "two_slit",
    "simulate_gi",
    "simulate_ordinary",
]

NOISE_MODES = ("gaussian", "poisson")


@dataclass(frozen=True)
class AcquisitionConfig:
    photons_per_pixel: float
    noise_photons_per_pixel: float = 0.0
    seed: int = 0
    noise_mode: str = "gaussian"
    arms: int = 3
    p_acc: float = 0.1
    frames: float = DEFAULT_FRAMES

    def __post_init__(self):
        if self.photons_per_pixel < 0 or self.noise_photons_per_pixel < 0:
            raise InvalidInputError("photon numbers must be >= 0")
        if not (self.frames >= 1 and math.isfinite(self.frames)):
            raise InvalidInputError("frames must be a finite number >= 1")
        if self.noise_mode not in NOISE_MODES:
            raise InvalidInputError(f"noise_mode must be one of {NOISE_MODES}")
        if self.arms not in (1, 3):
            raise InvalidInputError("arms must be 3 (ghost imaging) or 1 (ordinary)")

    @property
    def noiseless(self):
        return self.photons_per_pixel == 0 or math.isinf(self.photons_per_pixel)


@dataclass(frozen=True, eq=False)
class Measurement:
    xi: np.ndarray
    config: AcquisitionConfig
    model_fingerprint: str
    detector_shape: tuple

    @property
    def arms(self):
        return self.config.arms

    def save(self, path, extra=None):
        """Write MGIMEAS1 plus a JSON sidecar; ``extra`` is merged into the sidecar."""
        rows, cols = self.detector_shape
        meta = {"config": asdict(self.config), "model_fingerprint": self.model_fingerprint}
        meta.update(extra or {})
        write_measurement(path, self.xi, self.arms, rows, cols, meta)


def two_slit(width=64, height=64, bar_width=None, gap=None, bar_length=None):
    """Two vertical unit-transparency bars on an opaque background."""
    bar_width = bar_width or max(1, width // 10)
    gap = gap if gap is not None else max(1, width // 5)
    bar_length = bar_length or max(1, round(0.6 * height))
    if 2 * bar_width + gap > width or bar_length > height:
        raise InvalidInputError("slits do not fit on the grid")
    img = np.zeros((height, width))
    left = (width - (2 * bar_width + gap)) // 2
    top = (height - bar_length) // 2
    img[top : top + bar_length, left : left + bar_width] = 1.0
    right = left + bar_width + gap
    img[top : top + bar_length, right : right + bar_width] = 1.0
    return img.ravel()


def _resample_nearest(img, width, height):
    h, w = img.shape
    rows = np.minimum((np.arange(height) * h) // height, h - 1)
    cols = np.minimum((np.arange(width) * w) // width, w - 1)
    return img[np.ix_(rows, cols)]


def gen_object(pattern, width, height, **params):
    """Test object as a flat row-major transparency vector in [0, 1].

    ``pattern`` is ``"two_slit"`` (keywords as :func:`two_slit`),
    ``"constant"`` (``value=``) or ``"bitmap"`` (``path=``; a PGM resampled
    to the grid by nearest neighbour).
    """
    if pattern == "two_slit":
        return two_slit(width, height, **params)
    if pattern == "constant":
        value = float(params.get("value", 1.0))
        if not 0.0 <= value <= 1.0:
            raise InvalidInputError("transparency must lie in [0, 1]")
        return np.full(width * height, value)
    if pattern == "bitmap":
        img = read_pgm(params["path"])
        return np.clip(_resample_nearest(img, width, height), 0.0, 1.0).ravel()
    raise InvalidInputError(f"unknown object pattern {pattern!r}")


def _check(f_true, n):
    f = np.asarray(f_true, dtype=float).ravel()
    if f.size != n:
        raise InvalidInputError(f"object has {f.size} pixels, expected {n}")
    return f


def simulate_gi(f_true, model, cfg):
    """Acquire three ghost images ``xi = A f + nu`` of ``f_true``.

    ``gaussian`` draws ``nu`` with covariance ``Sigma_nu(f_true)`` exactly.
    ``poisson`` draws photon counts (shot noise of the actual signal and
    leaked noise photons), subtracts their known means, and adds the
    Gaussian ghost-image correlation and dark terms.  A budget of 0 or
    ``inf`` returns ``A f`` without noise.
    """
    if cfg.arms != model.arms:
        raise InvalidInputError(f"config has {cfg.arms} arms, model has {model.arms}")
    same = (
        cfg.noiseless and model.noiseless
        or cfg.photons_per_pixel == model.photons_per_pixel
        and cfg.noise_photons_per_pixel == model.noise_photons_per_pixel
        and cfg.p_acc == model.p_acc
        and cfg.frames == model.frames
    )
    if not same:
        raise InvalidInputError("acquisition config does not match the sensing model")
    f = _check(f_true, model.n)
    mean = model.A @ f
    if cfg.noiseless:
        xi = mean
    else:
        rng = np.random.default_rng(cfg.seed)
        g = gi_factor(model, f)
        if cfg.noise_mode == "gaussian":
            z = rng.standard_normal()
            w = rng.standard_normal(mean.size)
            xi = mean + g * z + np.sqrt(model.sigma_prime) * w
        else:
            xi = _poisson_draw(rng, mean, g, model)
    return Measurement(xi, cfg, model.fingerprint, model.geometry.detector_shape)


def _poisson_draw(rng, mean, g, model):
    # photons accumulated over all frames, rescaled to per-frame budget units
    total = model.photons_per_pixel * model.frames
    mass = np.tile(np.asarray(model.B.sum(axis=1)).ravel() * model.pixel_area, model.arms)
    counts = rng.poisson(total * mean)
    leak_mean = noise_photon_term(model.noise_photons_per_pixel, model.arms, model.p_acc) * mass * model.frames
    leak = rng.poisson(leak_mean) - leak_mean
    z = rng.standard_normal()
    dark = rng.standard_normal(mean.size) * math.sqrt(model.dark_variance)
    return counts / total + leak / total + g * z + dark


def simulate_ordinary(f_true, cfg, detector, dark_variance=0.0, center=True):
    """Direct (single-arm) image of ``f_true`` through ``detector``.

    No correlator, so all noise photons land on the image.  With
    ``center=False`` their mean ``rate * footprint / budget`` is left in.
    The fingerprint is that of :func:`mgi.sensing.make_model` with
    ``ordinary=True`` and the same budget.
    """
    if not isinstance(detector, DetectorGeometry):
        raise InvalidInputError("detector must be a DetectorGeometry")
    model = make_model(detector, cfg.photons_per_pixel, cfg.noise_photons_per_pixel,
                       p_acc=cfg.p_acc, dark_variance=dark_variance, ordinary=True,
                       frames=cfg.frames)
    f = _check(f_true, detector.n)
    b = build_detector_matrix(detector)
    mean = b @ f
    mass = np.asarray(b.sum(axis=1)).ravel()
    ocfg = AcquisitionConfig(cfg.photons_per_pixel, cfg.noise_photons_per_pixel, cfg.seed,
                             cfg.noise_mode, 1, cfg.p_acc, cfg.frames)
    if cfg.noiseless:
        return Measurement(mean, ocfg, model.fingerprint, detector.detector_shape)
    rng = np.random.default_rng(cfg.seed)
    budget = cfg.photons_per_pixel
    noise_mean = noise_photon_term(cfg.noise_photons_per_pixel, 1) * mass  # per frame
    if cfg.noise_mode == "gaussian":
        xi = mean + np.sqrt(model.sigma_prime) * rng.standard_normal(mean.size)
    else:
        total = budget * cfg.frames
        counts = rng.poisson(total * mean + noise_mean * cfg.frames)
        dark = rng.standard_normal(mean.size) * math.sqrt(dark_variance)
        xi = (counts - noise_mean * cfg.frames) / total + dark
    if not center:
        xi = xi + noise_mean / budget
    return Measurement(xi, ocfg, model.fingerprint, detector.detector_shape)
