"""Two-step identification with two boundary chain models.

Step one explains the tail deviation as a convex combination of the responses
of the shortest and the longest possible post-fault chains, fitted over short
sliding windows. The weights map to a continuous effective chain length, which
is integerized to a fault location. Step two runs the full cost only over the
two driver kinds at that location.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import medfilt

from .driver import DriverKind, head_response
from .identifier import (Hypothesis, IdentificationResult, IdentifierConfig,
                         MultiModelIdentifier, _as_2d, detect_fault_time)
from .lti import chain_tf, simulate_tf
from .platoon import Architecture, ControllerGains, PlatoonConfig, ReferenceProfile, fault_step

EPS = 1e-9


class DegenerateWindowError(ValueError):
    """Both boundary responses coincide on the window, so the weights are indeterminate."""


class Integerization(enum.Enum):
    DIRECT_ROUNDING = "DirectRounding"
    ERROR_MINIMIZATION = "ErrorMinimization"

    @classmethod
    def parse(cls, text: str) -> "Integerization":
        key = text.strip().replace("-", "").replace("_", "").lower()
        for mode in cls:
            if key == mode.value.lower():
                return mode
        raise ValueError(f"unknown integerization mode {text!r}")


@dataclass(frozen=True)
class BlendConfig:
    """Boundary lengths (in vehicles, head included), window and integerization."""

    min_length: int = 2
    max_length: int = 10
    window: float = 0.1
    driver: DriverKind = DriverKind.DISTRACTED
    mode: Integerization = Integerization.ERROR_MINIMIZATION
    overlap: float = 0.5

    def __post_init__(self):
        if self.min_length < 2:
            raise ValueError("min_length must be >= 2")
        if self.max_length <= self.min_length:
            raise ValueError("max_length must exceed min_length")
        if not self.window > 0:
            raise ValueError("window must be positive")
        if not 0 <= self.overlap < 1:
            raise ValueError("overlap must lie in [0, 1)")


@dataclass(frozen=True)
class BlendWeights:
    w1: float
    w2: float
    t: float = 0.0

    def __post_init__(self):
        if not (self.w1 >= 0 and self.w2 >= 0 and abs(self.w1 + self.w2 - 1) <= 1e-12):
            raise ValueError(f"weights ({self.w1}, {self.w2}) are not on the unit simplex")


@dataclass
class BlendResult:
    t: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    n_eff_windows: np.ndarray
    n_eff_smoothed: np.ndarray
    n_eff: float
    n_fin: int
    driver: DriverKind
    k_hat: int
    t_f_hat: float
    t_detect: Optional[float]
    second_step: Optional[IdentificationResult] = None
    counters: dict = field(default_factory=dict)

    @property
    def hypothesis(self) -> Hypothesis:
        return Hypothesis(self.k_hat, self.driver)

    def rows(self):
        """``(t, W1, W2, N_eff)`` per window."""
        return list(zip(self.t, self.w1, self.w2, self.n_eff_windows))


def boundary_outputs(config: BlendConfig, gains: ControllerGains, forcing, dt: float,
                     architecture: Architecture = Architecture.PF) -> tuple:
    """Responses of the shortest and longest chain models to the takeover forcing.

    ``forcing`` is the extra acceleration imposed on the faulted vehicle from the
    fault onward; the head's deviation follows from the driver model and is
    then propagated through ``length - 1`` links.
    """
    forcing = np.asarray(forcing, dtype=float)
    head = head_response(config.driver.params, forcing, dt)
    return tuple(chain_output(head, n, gains, dt, architecture)
                 for n in (config.min_length, config.max_length))


def chain_output(head, length: int, gains: ControllerGains, dt: float,
                 architecture: Architecture = Architecture.PF) -> np.ndarray:
    """Tail deviation of a chain of ``length`` vehicles whose head moves by ``head``."""
    if length < 1:
        raise ValueError("chain length must be >= 1")
    if length == 1:
        return np.array(head, dtype=float)
    return simulate_tf(chain_tf(gains, length - 1, architecture), head, dt)


def fit_weights(y, y1, y2, t: float = 0.0) -> BlendWeights:
    """Least-squares convex combination ``W1 y1 + W2 y2`` of ``y`` on one window."""
    y, y1, y2 = (np.asarray(a, dtype=float).ravel() for a in (y, y1, y2))
    if y.size == 0 or not y.size == y1.size == y2.size:
        raise ValueError("window signals must be nonempty and of equal length")
    diff = y1 - y2
    den = float(diff @ diff)
    scale = float(y1 @ y1 + y2 @ y2)
    if den == 0.0 or den <= 1e-24 * scale:
        raise DegenerateWindowError("boundary responses coincide on this window")
    w1 = min(max(float((y - y2) @ diff) / den, 0.0), 1.0)
    return BlendWeights(w1, 1.0 - w1, t)


def n_eff(w1: float, min_length: int, max_length: int, w2: Optional[float] = None) -> float:
    """Effective chain length implied by the boundary weights.

    Solves ``W1 x^(n1-1) + W2 x^(n2-1) = x^(n-1)`` at ``x = (W1/W2)^(1/(n2-n1))``.
    Near-pure weights return the nearest boundary and equal weights the midpoint.
    """
    if w2 is None:
        w2 = 1.0 - w1
    if not (0 <= w1 <= 1 and 0 <= w2 <= 1 and abs(w1 + w2 - 1) <= 1e-9):
        raise ValueError("weights must lie on the unit simplex")
    if max_length <= min_length:
        raise ValueError("max_length must exceed min_length")
    if w2 < EPS:
        return float(min_length)
    if w1 < EPS:
        return float(max_length)
    span = max_length - min_length
    r = math.log(w1 / w2)
    if abs(r) < EPS:
        return 0.5 * (min_length + max_length)
    lhs = np.logaddexp(math.log(w1) + (min_length - 1) / span * r,
                       math.log(w2) + (max_length - 1) / span * r)
    return float(1.0 + span * lhs / r)


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def integerize(value: float, mode: Integerization, min_length: int, max_length: int,
               window_error=None) -> int:
    """Integer chain length from a continuous estimate.

    ``window_error(n)`` must return the output error of length ``n`` against the
    measurements; it is only consulted in error-minimization mode, and ties go
    to the shorter length.
    """
    if not min_length - 1e-9 <= value <= max_length + 1e-9:
        raise ValueError(f"effective length {value} outside [{min_length}, {max_length}]")
    if mode is Integerization.DIRECT_ROUNDING:
        return round_half_away(value)
    if window_error is None:
        raise ValueError("error minimization needs a window error function")
    lo, hi = math.floor(value), math.ceil(value)
    lo, hi = max(lo, min_length), min(hi, max_length)
    if lo == hi:
        return lo
    return lo if window_error(lo) <= window_error(hi) else hi


def window_slices(n: int, length: int, overlap: float):
    hop = max(1, int(round(length * (1 - overlap))))
    return [slice(a, a + length) for a in range(0, n - length + 1, hop)]


def blend_windows(y, y1, y2, dt: float, config: BlendConfig, t0: float = 0.0):
    """Per-window weights; degenerate windows are skipped.

    Returns window start times, ``W1``, ``W2`` and the number of skipped windows.
    """
    length = max(1, int(round(config.window / dt)))
    ts, w1s, skipped = [], [], 0
    for sl in window_slices(len(y), length, config.overlap):
        try:
            w = fit_weights(y[sl], y1[sl], y2[sl], t0 + sl.start * dt)
        except DegenerateWindowError:
            skipped += 1
            continue
        ts.append(w.t)
        w1s.append(w.w1)
    w1 = np.array(w1s)
    return np.array(ts), w1, 1.0 - w1, skipped


def summarize_length(w1, w2, config: BlendConfig):
    """Per-window effective lengths, their median-of-3 smoothing and the overall median."""
    raw = np.array([n_eff(a, config.min_length, config.max_length, b) for a, b in zip(w1, w2)])
    if raw.size == 0:
        raise ValueError("no informative window to fit")
    smooth = medfilt(raw, 3) if raw.size >= 3 else raw.copy()
    return raw, smooth, float(np.median(smooth))


@dataclass
class LengthEstimate:
    t: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    raw: np.ndarray
    smooth: np.ndarray
    n_eff: float
    n_fin: Optional[int]
    skipped: int
    boundary: tuple


def estimate_length(deviation, forcing, blend: BlendConfig, gains: ControllerGains, dt: float,
                    architecture: Architecture = Architecture.PF, t0: float = 0.0,
                    integer: bool = True, counters: Optional[dict] = None) -> LengthEstimate:
    """Step one on a tail deviation that starts at the fault onset.

    ``forcing`` is the takeover forcing over the same samples. With
    ``integer=False`` only the continuous estimate is produced.
    """
    counters = {} if counters is None else counters
    deviation = np.asarray(deviation, dtype=float)
    head = head_response(blend.driver.params, np.asarray(forcing, dtype=float), dt)
    y1, y2 = (chain_output(head, n, gains, dt, architecture)
              for n in (blend.min_length, blend.max_length))
    counters["boundary_runs"] = counters.get("boundary_runs", 0) + 2
    ts, w1, w2, skipped = blend_windows(deviation, y1, y2, dt, blend, t0)
    raw, smooth, med = summarize_length(w1, w2, blend)
    n_fin = None
    if integer:
        def window_error(n):
            counters["candidate_runs"] = counters.get("candidate_runs", 0) + 1
            pred = chain_output(head, n, gains, dt, architecture)
            return float(np.sum((deviation - pred) ** 2))

        n_fin = integerize(med, blend.mode, blend.min_length, blend.max_length, window_error)
    return LengthEstimate(ts, w1, w2, raw, smooth, med, n_fin, skipped, (y1, y2))


def second_step_driver(n_fin: int, measured, config: PlatoonConfig, ref: ReferenceProfile,
                       horizon: float, dt: float = 1e-3, a_saf: float = 2.0,
                       id_config: IdentifierConfig = IdentifierConfig(),
                       t_f: Optional[float] = None) -> IdentificationResult:
    """Cost comparison of the two driver kinds at the location implied by ``n_fin``."""
    k = config.n - n_fin + 1
    if not 1 <= k <= config.n:
        raise ValueError(f"length {n_fin} does not fit a platoon of {config.n}")
    bank = [Hypothesis(k, d) for d in DriverKind]
    ident = MultiModelIdentifier(config, ref, horizon, dt, a_saf, id_config, bank)
    return ident.identify(measured, t_f)


class BlendingIdentifier:
    """Boundary-model length estimate followed by a two-hypothesis driver test.

    ``counters`` records how many distinct identification models were
    simulated: two boundary chains in the first step and two driver hypotheses
    in the second.
    """

    def __init__(self, config: PlatoonConfig, ref: ReferenceProfile, horizon: float,
                 dt: float = 1e-3, a_saf: float = 2.0,
                 id_config: IdentifierConfig = IdentifierConfig(),
                 blend: BlendConfig = BlendConfig()):
        if blend.max_length > config.n:
            raise ValueError("longest boundary chain exceeds the platoon size")
        self.config = config
        self.ref = ref
        self.horizon = horizon
        self.dt = dt
        self.a_saf = a_saf
        self.id_config = id_config
        self.blend = blend
        self._nominal = MultiModelIdentifier(config, ref, horizon, dt, a_saf, id_config, [])
        self.counters = {"boundary_models": 0, "driver_models": 0,
                         "boundary_runs": 0, "candidate_runs": 0}

    @property
    def t(self) -> np.ndarray:
        return self._nominal.t

    def forcing(self, onset: int) -> np.ndarray:
        """Extra acceleration on the faulted vehicle from grid index ``onset`` on."""
        return -self.a_saf - self.ref.acceleration(self.t[onset:])

    def _step_one(self, deviation: np.ndarray, onset: int, integer: bool = True) -> LengthEstimate:
        return estimate_length(deviation[onset:], self.forcing(onset), self.blend,
                               self.config.gains, self.dt, self.config.architecture,
                               self.t[onset], integer, self.counters)

    def _align(self, deviation: np.ndarray, detect: int, max_iter: int = 12) -> int:
        """Onset consistent with the detection time.

        Each pass estimates the length from the boundary fit, then moves the
        onset so that a chain of the rounded length would have crossed the
        detection threshold exactly at ``detect``.
        """
        eps = self.id_config.eps_det
        onset, seen = detect, {}
        for _ in range(max_iter):
            n = round_half_away(self._step_one(deviation, onset, integer=False).n_eff)
            head = head_response(self.blend.driver.params, self.forcing(onset), self.dt)
            pred = chain_output(head, n, self.config.gains, self.dt, self.config.architecture)
            self.counters["candidate_runs"] += 1
            hit = np.flatnonzero(np.abs(pred) > eps)
            miss = (onset + int(hit[0]) - detect) if hit.size else detect - onset + 1
            seen[onset] = abs(miss)
            if miss == 0:
                break
            nxt = min(max(onset - miss, 0), detect)
            if nxt in seen:
                break
            onset = nxt
        return min(seen, key=lambda o: (seen[o], -o))

    def identify(self, measured, t_f: Optional[float] = None) -> BlendResult:
        """Locate the fault from the boundary fit, then classify the driver there."""
        y = _as_2d(measured)
        nominal = self._nominal.nominal
        if y.shape != nominal.shape:
            raise ValueError(f"measured signal must have shape {nominal.shape}")
        deviation = y[:, 0] - nominal[:, 0]
        t_detect = None
        if t_f is not None:
            onset = fault_step(t_f, self.dt)
        else:
            t_detect = detect_fault_time(y, nominal, self.id_config.eps_det, self.t)
            if t_detect is None:
                raise ValueError("no fault detected in the measured signal")
            onset = self._align(deviation, int(round(t_detect / self.dt)))
        est = self._step_one(deviation, onset)
        self.counters["boundary_models"] = 2
        second = second_step_driver(est.n_fin, measured, self.config, self.ref, self.horizon,
                                    self.dt, self.a_saf, self.id_config, t_f)
        self.counters["driver_models"] = len(second.hypotheses)
        driver = second.final.d if second.final is not None else self.blend.driver
        t_f_hat = second.t_f_hat if second.t_f_hat is not None else onset * self.dt
        return BlendResult(est.t, est.w1, est.w2, est.raw, est.smooth, est.n_eff, est.n_fin,
                           driver, self.config.n - est.n_fin + 1, t_f_hat, t_detect, second,
                           dict(self.counters))


def identify_blended(measured, config: PlatoonConfig, ref: ReferenceProfile, horizon: float,
                     dt: float = 1e-3, a_saf: float = 2.0,
                     id_config: IdentifierConfig = IdentifierConfig(),
                     blend: BlendConfig = BlendConfig(), t_f: Optional[float] = None) -> BlendResult:
    return BlendingIdentifier(config, ref, horizon, dt, a_saf, id_config, blend).identify(measured, t_f)
