"""
Scalar measurement models and per-agent information contributions.

The range sensor observes the Euclidean distance from its own position to
the target position. The target position occupies the leading components
of the state vector (``[x, y]`` or ``[x, y, vx, vy]`` for a sensor in the
plane); any further components, such as velocity, are unobserved.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from gmfusion.errors import ContractError, SingularityError
from gmfusion.gaussian import LOG_2PI, as_vector

log = logging.getLogger(__name__)

# Below this distance (meters) the range direction vector is meaningless.
MIN_RANGE = 1e-9

LINEARIZATION_MODES = ("ekf", "literal")


class ScalarSensor(Protocol):
    noise_var: float

    def predict(self, x: np.ndarray) -> float: ...

    def jacobian(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class RangeSensor:
    position: np.ndarray
    noise_var: float

    def __post_init__(self):
        pos = as_vector(self.position)
        pos.setflags(write=False)
        if pos.shape[0] not in (1, 2, 3):
            raise ContractError(f"sensor position must be 1-3 dimensional, got {pos.shape[0]}")
        if not (self.noise_var > 0.0 and math.isfinite(self.noise_var)):
            raise ContractError(f"noise_var must be positive, got {self.noise_var!r}")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "noise_var", float(self.noise_var))

    def _offset(self, x) -> tuple[np.ndarray, float]:
        x = as_vector(x)
        d = self.position.shape[0]
        if x.shape[0] < d:
            raise ContractError(f"state of dimension {x.shape[0]} has no {d}-D position")
        offset = x[:d] - self.position
        dist = float(np.linalg.norm(offset))
        if dist <= MIN_RANGE:
            raise SingularityError("target coincides with sensor position; range Jacobian undefined")
        return offset, dist

    def predict(self, x) -> float:
        return self._offset(x)[1]

    def jacobian(self, x) -> np.ndarray:
        offset, dist = self._offset(x)
        H = np.zeros((1, as_vector(x).shape[0]))
        H[0, : offset.shape[0]] = offset / dist
        return H


@dataclass(frozen=True, eq=False)
class LinearSensor:
    """Scalar linear measurement ``z = row @ x + v``."""

    row: np.ndarray
    noise_var: float

    def __post_init__(self):
        row = as_vector(self.row)
        row.setflags(write=False)
        if not (self.noise_var > 0.0 and math.isfinite(self.noise_var)):
            raise ContractError(f"noise_var must be positive, got {self.noise_var!r}")
        object.__setattr__(self, "row", row)
        object.__setattr__(self, "noise_var", float(self.noise_var))

    def predict(self, x) -> float:
        return float(self.row @ as_vector(x))

    def jacobian(self, x) -> np.ndarray:
        return self.row.reshape(1, -1).copy()


@dataclass(frozen=True, eq=False)
class InfoDelta:
    """One agent's additive contribution in information form, with its log-likelihood."""

    di: np.ndarray
    dI: np.ndarray
    log_lik: float = 0.0

    def __add__(self, other: "InfoDelta") -> "InfoDelta":
        return InfoDelta(self.di + other.di, self.dI + other.dI, self.log_lik + other.log_lik)

    def scaled(self, k: float) -> "InfoDelta":
        return InfoDelta(k * self.di, k * self.dI, k * self.log_lik)

    def with_log_lik(self, value: float) -> "InfoDelta":
        return InfoDelta(self.di, self.dI, float(value))


def measure_range(truth, sensor: RangeSensor, seed: int) -> float:
    noise = np.random.default_rng(seed).standard_normal() * math.sqrt(sensor.noise_var)
    return sensor.predict(truth) + float(noise)


def range_jacobian(mu_pred, sensor: RangeSensor) -> np.ndarray:
    return sensor.jacobian(mu_pred)


def info_contribution(z: float, mu_pred, sensor: ScalarSensor, mode: str = "ekf") -> InfoDelta:
    """Information vector/matrix for one scalar measurement linearized at ``mu_pred``.

    ``mode="ekf"`` feeds the effective measurement ``z - h(mu) + H mu`` so that
    the additive information update equals the covariance-form EKF update;
    ``mode="literal"`` feeds the raw ``z``, which is exact only for linear h.
    """
    mu = as_vector(mu_pred)
    H = sensor.jacobian(mu)
    r_inv = 1.0 / sensor.noise_var
    if mode == "ekf":
        z_eff = z - sensor.predict(mu) + float((H @ mu)[0])
    elif mode == "literal":
        z_eff = z
    else:
        raise ContractError(f"unknown linearization mode {mode!r}; expected one of {LINEARIZATION_MODES}")
    return InfoDelta(H[0] * (r_inv * z_eff), r_inv * (H.T @ H))


def measurement_loglik(z: float, x_eval, sensor: ScalarSensor) -> float:
    """ln N(z; h(x_eval), R)."""
    resid = z - sensor.predict(x_eval)
    return -0.5 * (LOG_2PI + math.log(sensor.noise_var) + resid * resid / sensor.noise_var)


def check_homogeneous(sensors) -> bool:
    """Warn (and return False) when sensors do not share one noise variance."""
    variances = {s.noise_var for s in sensors}
    if len(variances) > 1:
        log.warning("sensors have differing noise variances %s; fusion assumes homogeneous sensors",
                    sorted(variances))
        return False
    return True
