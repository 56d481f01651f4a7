"""Geometry of the multiplexed ghost-imaging setup.

The object is lit at frequency 1 and watched by a bucket detector.  Arms
2 and 4 carry down-converted light, arm 3 carries the sum-frequency
(up-converted) light.  The two kinds of arm obey different lens equations:
arms 2/4 see the object at the distance ``l_j1 + (lambda_1/lambda_j) l_11``,
arm 3 at ``l_31 - (lambda_1/lambda_3) l_11``.

Wavenumbers are in cm^-1 and lengths in cm.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ImagingImpossibleError, InvalidInputError

__all__ = [
    "ArmKind",
    "ReferenceArm",
    "OpticalSetup",
    "arm_kind",
    "effective_object_distance",
    "required_focal_length",
    "imaging_condition_residual",
    "magnification",
    "g2_kernel",
    "g4_kernel",
]

ARMS = (2, 3, 4)


class ArmKind(Enum):
    DOWN_CONVERSION = "down_conversion"
    UP_CONVERSION = "up_conversion"


def arm_kind(arm):
    if arm not in ARMS:
        raise InvalidInputError(f"reference arm must be one of {ARMS}, got {arm}")
    return ArmKind.UP_CONVERSION if arm == 3 else ArmKind.DOWN_CONVERSION


@dataclass(frozen=True)
class ReferenceArm:
    """Beam splitter -> lens distance ``l1``, lens -> CCD ``l2``, focal length ``f``."""

    l1: float
    l2: float
    f: float = None

    def __post_init__(self):
        if not (self.l1 > 0 and self.l2 > 0):
            raise InvalidInputError("arm lengths must be positive")
        if self.f is not None and not self.f > 0:
            raise InvalidInputError("focal length must be positive")


@dataclass(frozen=True)
class OpticalSetup:
    k1: float
    k2: float
    k3: float
    k4: float
    l11: float
    l12: float
    arms: dict = field(default_factory=dict)
    beta: float = 10.0
    xi: float = 0.4
    s: float = 1.0

    def __post_init__(self):
        if min(self.k1, self.k2, self.k3, self.k4) <= 0:
            raise InvalidInputError("wavenumbers must be positive")
        if not (self.l11 > 0 and self.l12 > 0 and self.s > 0):
            raise InvalidInputError("l11, l12 and s must be positive")
        if not 0 < self.xi <= 1:
            raise InvalidInputError("xi must lie in (0, 1]")
        for j, arm in self.arms.items():
            arm_kind(j)
            if not isinstance(arm, ReferenceArm):
                raise InvalidInputError(f"arm {j} must be a ReferenceArm")

    @classmethod
    def from_frequency_relations(cls, k1, k3, l11, l12, arms=None, **kw):
        """Fill in ``k2, k4`` from the mixing relations.

        ``w_p = w_1 + w_2``, ``w_p + w_1 = w_3`` and ``w_p + w_2 = w_4`` give
        ``k2 = k3 - 2 k1`` and ``k4 = 2 k3 - 3 k1``.
        """
        k2 = k3 - 2.0 * k1
        k4 = 2.0 * k3 - 3.0 * k1
        return cls(k1, k2, k3, k4, l11, l12, dict(arms or {}), **kw)

    def wavenumber(self, j):
        return {1: self.k1, 2: self.k2, 3: self.k3, 4: self.k4}[j]

    def wavelength_ratio(self, arm):
        """``lambda_1 / lambda_j`` (= ``k_j / k_1``)."""
        arm_kind(arm)
        return self.wavenumber(arm) / self.k1

    def arm(self, j):
        try:
            return self.arms[j]
        except KeyError:
            raise InvalidInputError(f"setup has no reference arm {j}") from None


def effective_object_distance(setup, arm):
    """Distance at which the lens of ``arm`` sees the object."""
    a = setup.arm(arm)
    ratio = setup.wavelength_ratio(arm)
    if arm_kind(arm) is ArmKind.UP_CONVERSION:
        return a.l1 - ratio * setup.l11
    return a.l1 + ratio * setup.l11


def _checked_distance(setup, arm):
    d = effective_object_distance(setup, arm)
    a = setup.arm(arm)
    scale = max(a.l1, setup.wavelength_ratio(arm) * setup.l11)
    if d <= 1e-12 * scale:
        raise ImagingImpossibleError(
            f"arm {arm}: effective object distance {d:g} cm is not positive"
        )
    return d


def required_focal_length(setup, arm):
    """Focal length that makes ``arm`` image the object onto its CCD."""
    d = _checked_distance(setup, arm)
    l2 = setup.arm(arm).l2
    return 1.0 / (1.0 / l2 + 1.0 / d)


def imaging_condition_residual(setup, arm, f=None):
    """Relative residual of ``1/f = 1/l_j2 + 1/d_j`` (0 when in focus)."""
    d = _checked_distance(setup, arm)
    a = setup.arm(arm)
    f = a.f if f is None else f
    if f is None:
        raise InvalidInputError(f"arm {arm} has no focal length to check")
    rhs = 1.0 / a.l2 + 1.0 / d
    return abs(1.0 / f - rhs) / abs(rhs)


def magnification(setup, arm):
    """``alpha_j``: the ghost image of arm ``j`` is ``T(-alpha_j r)``."""
    return effective_object_distance(setup, arm) / setup.arm(arm).l2


def g2_kernel(f, arm_scale, s=1.0):
    """Second-order correlation profile ``arm_scale * s * f`` (unit magnification)."""
    return arm_scale * s * np.asarray(f, dtype=float)


def g4_kernel(f, scale_i, scale_j, s=1.0):
    """Pixel-integrated ghost-image correlation block, a rank-one matrix."""
    f = np.asarray(f, dtype=float).ravel()
    return np.outer(scale_i * s * f, scale_j * s * f)
