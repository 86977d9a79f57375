"""Forward model: constant-velocity hypothesis -> per-period Doppler and AoA.

Angles use ``atan2`` into ``(0, pi)`` for ``y > 0`` so both the AoD and the
AoA stay continuous as the blocker passes over the receiver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import LIGHT_SPEED_M_S, TWO_PI


@dataclass(frozen=True)
class MotionHypothesis:
    x1_m: float
    y1_m: float
    v_m_s: float
    theta_rad: float

    def __post_init__(self) -> None:
        if self.y1_m <= 0:
            raise ValueError("hypothesis must start with y1 > 0")
        if self.v_m_s < 0:
            raise ValueError("speed must be >= 0")
        object.__setattr__(self, "theta_rad", float(self.theta_rad) % TWO_PI)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1_m, self.y1_m, self.v_m_s, self.theta_rad)


@dataclass(frozen=True)
class PredictedFeatures:
    doppler_hz: np.ndarray
    aoa_rad: np.ndarray
    aod_rad: np.ndarray

    @property
    def num_periods(self) -> int:
        return len(self.doppler_hz)


def angles_at(position: tuple[float, float], d: float) -> tuple[float, float]:
    """Return ``(phi_T, phi_R)``: AoD at the transmitter, AoA at the receiver."""
    x, y = position
    if not y > 0:
        raise ValueError("position must satisfy y > 0")
    return math.atan2(y, x), math.atan2(y, x - d)


def doppler_at(position: tuple[float, float], v: float, theta: float,
               d: float, f_c: float) -> float:
    """Bistatic Doppler in Hz for a blocker at ``position`` moving at ``v``
    along ``theta``."""
    phi_t, phi_r = angles_at(position, d)
    return (-2.0 * f_c / LIGHT_SPEED_M_S * v
            * math.cos(theta - 0.5 * (phi_t + phi_r))
            * math.cos(0.5 * (phi_t - phi_r)))


def doppler_gradient(position: tuple[float, float], v: float, theta: float,
                     d: float, f_c: float) -> np.ndarray:
    """Analytic partials of the Doppler with respect to ``(x, y, v, theta)``.

    Uses the product-to-sum identity
    ``f = -(f_c/c) v [cos(theta - phi_T) + cos(theta - phi_R)]``, where each
    cosine is the projection of the heading on a unit line-of-sight vector.
    """
    x, y = position
    if not y > 0:
        raise ValueError("position must satisfy y > 0")
    k = f_c / LIGHT_SPEED_M_S
    ux, uy = math.cos(theta), math.sin(theta)
    grad = np.zeros(4)
    proj = 0.0
    dproj_dtheta = 0.0
    for px in (x, x - d):
        r = math.hypot(px, y)
        p = (ux * px + uy * y) / r
        proj += p
        grad[0] += ux / r - p * px / (r * r)
        grad[1] += uy / r - p * y / (r * r)
        dproj_dtheta += (-uy * px + ux * y) / r
    grad[0] *= -k * v
    grad[1] *= -k * v
    grad[2] = -k * proj
    grad[3] = -k * v * dproj_dtheta
    return grad


def hypothesis_positions(h: MotionHypothesis, K: int, T_d: float) -> np.ndarray:
    """Positions for periods ``1..K``; row ``k-1`` is ``(x_k, y_k)``."""
    steps = np.arange(K) * (h.v_m_s * T_d)
    return np.column_stack((h.x1_m + steps * math.cos(h.theta_rad),
                            h.y1_m + steps * math.sin(h.theta_rad)))


def predict_features(h: MotionHypothesis, K: int, T_d: float, d: float,
                     f_c: float) -> PredictedFeatures:
    """Predicted Doppler/AoA/AoD for ``K`` periods.

    A trajectory that leaves ``y > 0`` inside the window is truncated at its
    last valid period, so the outputs can be shorter than ``K``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    pos = hypothesis_positions(h, K, T_d)
    valid = pos[:, 1] > 0
    n = K if valid.all() else int(np.argmin(valid))
    pos = pos[:n]
    aod = np.arctan2(pos[:, 1], pos[:, 0])
    aoa = np.arctan2(pos[:, 1], pos[:, 0] - d)
    dop = (-2.0 * f_c / LIGHT_SPEED_M_S * h.v_m_s
           * np.cos(h.theta_rad - 0.5 * (aod + aoa)) * np.cos(0.5 * (aod - aoa)))
    return PredictedFeatures(doppler_hz=dop, aoa_rad=aoa, aod_rad=aod)
