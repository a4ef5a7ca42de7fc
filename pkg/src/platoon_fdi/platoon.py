"""Double-integrator platoon under predecessor-following or bidirectional control."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .driver import FaultScenario


@dataclass(frozen=True)
class ControllerGains:
    k0: float = 1.0
    b0: float = 2.0

    def __post_init__(self):
        if not (self.k0 > 0 and self.b0 > 0):
            raise ValueError("controller gains k0 and b0 must be positive")


class Architecture(enum.Enum):
    PF = "PF"
    SB = "SB"

    @classmethod
    def parse(cls, text: str) -> "Architecture":
        key = text.strip().upper()
        aliases = {"PF": cls.PF, "PREDECESSORFOLLOWING": cls.PF,
                   "PREDECESSOR-FOLLOWING": cls.PF, "SB": cls.SB,
                   "SYMMETRICBIDIRECTIONAL": cls.SB, "BIDIRECTIONAL": cls.SB}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown architecture {text!r}") from None


@dataclass(frozen=True)
class PlatoonConfig:
    """Platoon of ``n`` vehicles; ``gaps[i-1]`` is the desired gap to vehicle i's predecessor.

    Only adjacent gaps are stored, so gap consistency along any triple of
    vehicles holds by construction of :meth:`offset`.
    """

    n: int
    gaps: tuple
    gains: ControllerGains = field(default_factory=ControllerGains)
    architecture: Architecture = Architecture.PF
    # SB only: after a fault, also drop vehicle k-1's coupling to vehicle k
    sever_both: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("platoon needs at least two vehicles")
        gaps = tuple(float(g) for g in self.gaps)
        if len(gaps) != self.n:
            raise ValueError(f"expected {self.n} gaps, got {len(gaps)}")
        if any(g <= 0 for g in gaps):
            raise ValueError("all gaps must be positive")
        object.__setattr__(self, "gaps", gaps)

    @classmethod
    def uniform(cls, n: int, gap: float = 10.0, **kwargs) -> "PlatoonConfig":
        return cls(n=n, gaps=(gap,) * n, **kwargs)

    @property
    def offsets(self) -> np.ndarray:
        """Cumulative gap from the virtual leader to vehicles 1..n."""
        return np.cumsum(self.gaps)

    def offset(self, i: int, j: int = 0) -> float:
        """Desired distance from vehicle ``j`` back to vehicle ``i`` (j <= i)."""
        if not 0 <= j <= i <= self.n:
            raise IndexError(f"invalid vehicle pair ({j}, {i})")
        return float(sum(self.gaps[j:i]))


SEGMENT_MODES = ("accelerate", "cruise", "brake")


@dataclass(frozen=True)
class Segment:
    duration: float
    mode: str
    accel: float = 0.0

    def __post_init__(self):
        if self.mode not in SEGMENT_MODES:
            raise ValueError(f"unknown segment mode {self.mode!r}")
        if not self.duration > 0:
            raise ValueError("segment durations must be positive")
        if self.mode != "cruise" and not self.accel > 0:
            raise ValueError(f"{self.mode} segment needs a positive acceleration")

    @property
    def signed_accel(self) -> float:
        return {"accelerate": self.accel, "cruise": 0.0, "brake": -self.accel}[self.mode]


@dataclass(frozen=True)
class ReferenceProfile:
    """Piecewise-constant-acceleration trajectory of the virtual leader.

    The leader starts at position 0 and cruises at its final speed after the
    last segment.
    """

    segments: tuple = ()
    initial_speed: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @classmethod
    def cruise(cls, speed: float) -> "ReferenceProfile":
        return cls((), speed)

    def _knots(self):
        t = [0.0]
        p = [0.0]
        v = [self.initial_speed]
        a = []
        for seg in self.segments:
            acc = seg.signed_accel
            a.append(acc)
            d = seg.duration
            p.append(p[-1] + v[-1] * d + 0.5 * acc * d * d)
            v.append(v[-1] + acc * d)
            t.append(t[-1] + d)
        a.append(0.0)
        return np.array(t), np.array(p), np.array(v), np.array(a)

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("reference evaluated at negative time")
        knots, p, v, a = self._knots()
        seg = np.searchsorted(knots, t, side="right") - 1
        tau = t - knots[seg]
        return tau, p[seg], v[seg], a[seg]

    def position(self, t):
        tau, p, v, a = self._locate(t)
        return p + v * tau + 0.5 * a * tau * tau

    def velocity(self, t):
        tau, _, v, a = self._locate(t)
        return v + a * tau

    def acceleration(self, t):
        _, _, _, a = self._locate(t)
        return a

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))


@dataclass
class PlatoonState:
    t: float
    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.p.shape != self.v.shape:
            raise ValueError("position and velocity vectors differ in length")


@dataclass
class SimTrace:
    """Uniformly sampled run: row ``j`` of every array belongs to ``t[j]``."""

    dt: float
    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    u: np.ndarray
    w: np.ndarray
    errors: np.ndarray
    error_rates: np.ndarray

    def state(self, j: int) -> PlatoonState:
        return PlatoonState(float(self.t[j]), self.p[j].copy(), self.v[j].copy())

    def __len__(self):
        return len(self.t)


def desired_trajectory(config: PlatoonConfig, ref: ReferenceProfile, i: int, t):
    """Desired position of vehicle ``i`` (0 is the virtual leader) at ``t``."""
    if not 0 <= i <= config.n:
        raise IndexError(f"vehicle index {i} outside 0..{config.n}")
    return ref.position(t) - config.offset(i)


def tracking_error(state: PlatoonState, config: PlatoonConfig,
                   ref: ReferenceProfile) -> np.ndarray:
    if state.p.shape != (config.n,):
        raise ValueError(f"state has {state.p.size} vehicles, config has {config.n}")
    return state.p - (ref.position(state.t) - config.offsets)


def _errors(state, config, ref):
    e = tracking_error(state, config, ref)
    ed = state.v - ref.velocity(state.t)
    return e, ed


def pf_control(state: PlatoonState, config: PlatoonConfig,
               ref: ReferenceProfile) -> np.ndarray:
    """Predecessor-following PD law on tracking-error differences.

    Vehicle 1 treats the virtual leader (zero error) as its predecessor.
    """
    if config.architecture is not Architecture.PF:
        raise ValueError("pf_control needs a predecessor-following platoon")
    e, ed = _errors(state, config, ref)
    u = np.empty(config.n)
    _kernels._autonomous_controls(e, ed, config.gains.k0, config.gains.b0, _kernels.PF, u)
    return u


def sb_control(state: PlatoonState, config: PlatoonConfig,
               ref: ReferenceProfile) -> np.ndarray:
    """Symmetric bidirectional law; the last vehicle only looks ahead."""
    if config.architecture is not Architecture.SB:
        raise ValueError("sb_control needs a bidirectional platoon")
    e, ed = _errors(state, config, ref)
    u = np.empty(config.n)
    _kernels._autonomous_controls(e, ed, config.gains.k0, config.gains.b0, _kernels.SB, u)
    return u


def step(state: PlatoonState, u, w, dt: float) -> PlatoonState:
    """One classical RK4 step of ``p'' = u + w`` with ``u`` and ``w`` held."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    acc = np.asarray(u, dtype=float) + np.asarray(w, dtype=float)
    if not (np.all(np.isfinite(acc)) and np.all(np.isfinite(state.p))
            and np.all(np.isfinite(state.v))):
        raise ValueError("non-finite state or input")

    def f(p, v):
        return v, acc

    p, v = state.p, state.v
    k1p, k1v = f(p, v)
    k2p, k2v = f(p + 0.5 * dt * k1p, v + 0.5 * dt * k1v)
    k3p, k3v = f(p + 0.5 * dt * k2p, v + 0.5 * dt * k2v)
    k4p, k4v = f(p + dt * k3p, v + dt * k3v)
    return PlatoonState(
        state.t + dt,
        p + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p),
        v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v),
    )


def n_steps(horizon: float, dt: float) -> int:
    return int(round(horizon / dt))


def fault_step(t_f: float, dt: float) -> int:
    """First grid index with ``t >= t_f``."""
    return int(math.ceil(t_f / dt - 1e-9))


class Simulator:
    """Precomputed reference and disturbance arrays for repeated runs on one grid.

    The identifier restarts hypothesis runs from intermediate nominal states;
    this keeps those runs bit-compatible with a full run.
    """

    def __init__(self, config: PlatoonConfig, ref: ReferenceProfile, horizon: float,
                 dt: float = 1e-3, disturbances: Optional[np.ndarray] = None):
        if not horizon > 0:
            raise ValueError("horizon must be positive")
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.config = config
        self.ref = ref
        self.dt = dt
        self.steps = n_steps(horizon, dt)
        self.t = np.arange(self.steps + 1) * dt
        self.ref_p = np.ascontiguousarray(ref.position(self.t))
        self.ref_v = np.ascontiguousarray(ref.velocity(self.t))
        self.offsets = np.ascontiguousarray(config.offsets, dtype=float)
        if disturbances is None:
            self.w = np.zeros((self.steps + 1, config.n))
        else:
            w = np.asarray(disturbances, dtype=float)
            if w.shape != (self.steps + 1, config.n):
                raise ValueError(f"disturbances must have shape {(self.steps + 1, config.n)}")
            self.w = np.ascontiguousarray(w)

    @property
    def horizon(self) -> float:
        return self.steps * self.dt

    def formation(self, error: Optional[Sequence[float]] = None,
                  error_rate: Optional[Sequence[float]] = None):
        """Initial positions/velocities with optional tracking errors."""
        p = self.ref_p[0] - self.offsets
        v = np.full(self.config.n, self.ref_v[0])
        if error is not None:
            p = p + np.asarray(error, dtype=float)
        if error_rate is not None:
            v = v + np.asarray(error_rate, dtype=float)
        return p, v

    def run(self, p0, v0, start: int = 0, stop: Optional[int] = None,
            fault: Optional[FaultScenario] = None):
        stop = self.steps if stop is None else stop
        cfg = self.config
        arch = _kernels.SB if cfg.architecture is Architecture.SB else _kernels.PF
        if fault is None:
            k, fstep, a_saf, drv, delay = -1, 0, 0.0, np.zeros(4), 0
        else:
            fault.validate_for(cfg.n)
            params = fault.driver.params
            k, fstep = fault.k - 1, fault_step(fault.t_f, self.dt)
            a_saf, drv, delay = fault.a_saf, params.realization, params.delay_samples(self.dt)
        return _kernels.simulate_platoon(
            np.ascontiguousarray(p0, dtype=float), np.ascontiguousarray(v0, dtype=float),
            self.ref_p, self.ref_v, self.offsets, cfg.gains.k0, cfg.gains.b0, arch,
            self.w, k, fstep, a_saf, drv, delay, cfg.sever_both, start, stop, self.dt)

    def trace(self, fault: Optional[FaultScenario] = None, error=None,
              error_rate=None) -> SimTrace:
        if fault is not None and not fault.t_f < self.horizon:
            raise ValueError("fault time must precede the horizon")
        p0, v0 = self.formation(error, error_rate)
        P, V, U = self.run(p0, v0, fault=fault)
        E = P - (self.ref_p[:, None] - self.offsets)
        Ed = V - self.ref_v[:, None]
        return SimTrace(self.dt, self.t.copy(), P, V, U, self.w, E, Ed)


def simulate(config: PlatoonConfig, ref: ReferenceProfile, horizon: float,
             dt: float = 1e-3, disturbances: Optional[np.ndarray] = None,
             fault: Optional[FaultScenario] = None, initial_error=None,
             initial_error_rate=None) -> SimTrace:
    """Run the platoon from formation over ``[0, horizon]``.

    ``disturbances`` has one row per grid point (``round(horizon/dt) + 1``)
    and one column per vehicle. With a fault, vehicle ``k`` switches to the
    driver takeover law from ``t_f`` on.
    """
    sim = Simulator(config, ref, horizon, dt, disturbances)
    return sim.trace(fault, initial_error, initial_error_rate)
