"""Human-driver models and the communication-fault takeover law."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class DriverParams:
    """Second-order-with-zero driver model plus transport delay.

    ``G_h(s) = K (1 + T_z s) / (1 + 2 gamma T_w s + T_w^2 s^2) * exp(-T_d s)``
    """

    K: float
    T_z: float
    T_w: float
    gamma: float
    T_d: float

    def __post_init__(self):
        for name in ("K", "T_z", "T_w", "gamma", "T_d"):
            if not getattr(self, name) > 0:
                raise ValueError(f"driver parameter {name} must be positive")
        if not self.gamma < 2:
            raise ValueError("driver damping gamma must lie in (0, 2)")

    @property
    def realization(self) -> np.ndarray:
        """(c0, c1, a0, a1) of the controllable-canonical form."""
        tw2 = self.T_w * self.T_w
        return np.array([self.K / tw2, self.K * self.T_z / tw2,
                         1.0 / tw2, 2.0 * self.gamma / self.T_w])

    def delay_samples(self, dt: float) -> int:
        return int(round(self.T_d / dt))

    def rational(self):
        """Numerator/denominator coefficients (ascending powers of s)."""
        return ((self.K, self.K * self.T_z),
                (1.0, 2.0 * self.gamma * self.T_w, self.T_w ** 2))


class DriverKind(enum.Enum):
    ATTENTIVE = "attentive"
    DISTRACTED = "distracted"

    @property
    def params(self) -> DriverParams:
        return _CANONICAL[self]

    @property
    def letter(self) -> str:
        return "A" if self is DriverKind.ATTENTIVE else "D"

    @classmethod
    def parse(cls, text: str) -> "DriverKind":
        key = text.strip().lower()
        for kind in cls:
            if key in (kind.value, kind.letter.lower()):
                return kind
        raise ValueError(f"unknown driver kind {text!r}")


_CANONICAL = {
    DriverKind.ATTENTIVE: DriverParams(K=1.0, T_z=5.41, T_w=4.15, gamma=0.54, T_d=0.324),
    DriverKind.DISTRACTED: DriverParams(K=1.0, T_z=6.96, T_w=4.76, gamma=0.65, T_d=0.512),
}


@dataclass(frozen=True)
class FaultScenario:
    """Communication loss between vehicle ``k-1`` and ``k`` at ``t_f``.

    ``k`` is one-based; ``k = 1`` means the link to the virtual leader failed.
    """

    k: int
    t_f: float
    driver: DriverKind
    a_saf: float = 2.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("fault index k must be >= 1")
        if self.t_f < 0:
            raise ValueError("fault time must be non-negative")
        if self.a_saf < 0:
            raise ValueError("safe deceleration must be non-negative")

    def validate_for(self, n: int) -> None:
        if self.k > n:
            raise ValueError(f"fault index k={self.k} exceeds platoon size {n}")


class DriverState:
    """Internal state of a realized driver model stepping at a fixed ``dt``.

    The delay line holds ``round(T_d / dt)`` past inputs, initially zero.
    """

    def __init__(self, params: DriverParams, dt: float):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.params = params
        self.dt = dt
        self.x = (0.0, 0.0)
        self.buffer = deque([0.0] * params.delay_samples(dt))

    def output(self) -> float:
        c0, c1, _, _ = self.params.realization
        return c0 * self.x[0] + c1 * self.x[1]


def driver_step(state: DriverState, params: DriverParams, rel_velocity: float,
                dt: float) -> float:
    """Advance the driver by one step and return the commanded acceleration.

    The returned value is the output at the start of the step; the state is
    then advanced with the input delayed by the buffer length.
    """
    if not math.isclose(dt, state.dt, rel_tol=1e-12) or params != state.params:
        raise ValueError("driver state was built for a different dt or parameter set")
    if state.buffer:
        delayed = state.buffer.popleft()
        state.buffer.append(rel_velocity)
    else:
        delayed = rel_velocity
    out = state.output()
    _, _, a0, a1 = params.realization
    state.x = _kernels.driver_advance(state.x[0], state.x[1], delayed, a0, a1, dt)
    return out


def takeover_control(u_drv, a_saf: float):
    """Control applied by the driver after the takeover: ``u_drv - a_saf``."""
    return u_drv - a_saf


class LinkStatus(enum.Enum):
    ACTIVE = 1
    FAILED = 0


def link_status(scenario: FaultScenario, i: int, j: int, t: float) -> LinkStatus:
    """State of the directed predecessor link ``i -> j`` at time ``t``.

    Vehicle 0 is the virtual leader. Only ``k-1 -> k`` fails, from ``t_f`` on.
    """
    if abs(i - j) != 1:
        raise ValueError(f"vehicles {i} and {j} are not adjacent")
    if i == scenario.k - 1 and j == scenario.k and t >= scenario.t_f:
        return LinkStatus.FAILED
    return LinkStatus.ACTIVE


def head_response(params: DriverParams, forcing: np.ndarray, dt: float) -> np.ndarray:
    """Position deviation of a vehicle taken over by a driver with ``params``.

    ``forcing`` is the extra acceleration the takeover imposes relative to the
    nominal control (typically ``-a_saf - a_ref(t)`` after the fault). The
    predecessor is assumed to stay on its nominal path.
    """
    forcing = np.ascontiguousarray(forcing, dtype=float)
    return _kernels.head_response(forcing, params.realization,
                                  params.delay_samples(dt), dt)
