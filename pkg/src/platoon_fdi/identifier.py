"""Multi-model fault localisation and driver classification from tail measurements.

A bank of hypotheses ``(k, d)`` (faulted vehicle, driver kind) is simulated
alongside the nominal platoon; each hypothesis accumulates a cost made of the
instantaneous squared residual plus an exponentially forgotten integral of
past squared residuals. The minimiser is the identified configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .driver import DriverKind, FaultScenario
from .platoon import PlatoonConfig, ReferenceProfile, Simulator, SimTrace, fault_step

CHANNELS = ("position", "velocity")


@dataclass(frozen=True)
class Hypothesis:
    k: int
    d: DriverKind

    @property
    def sort_key(self):
        return (self.k, 0 if self.d is DriverKind.ATTENTIVE else 1)

    @property
    def label(self) -> str:
        return f"{self.k}{self.d.letter}"

    def __lt__(self, other):
        return self.sort_key < other.sort_key

    def fault(self, t_f: float, a_saf: float) -> FaultScenario:
        return FaultScenario(self.k, t_f, self.d, a_saf)


def hypothesis_bank(n: int, ks: Optional[Sequence[int]] = None) -> list:
    """Every ``(k, d)`` pair once, ordered by ``k`` then attentive before distracted."""
    ks = range(1, n + 1) if ks is None else ks
    bank = [Hypothesis(k, d) for k in ks for d in DriverKind]
    if any(not 1 <= h.k <= n for h in bank):
        raise ValueError("hypothesis index outside the platoon")
    return sorted(bank)


@dataclass(frozen=True)
class IdentifierConfig:
    alpha: float = 0.6
    beta: float = 0.4
    lam: float = 0.1
    eps_det: float = 0.05
    channels: tuple = ("position",)
    # search window for back-aligning a hypothesis onset to the detection time
    max_lag: float = 10.0
    # post-detection window used to refine each onset by least squares (0 disables)
    onset_fit: float = 2.0
    # half-width of the coarse onset scan around the aligned onset; the
    # crossing time is not monotone in the onset, so alignment can land on
    # the wrong root
    onset_span: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.lam > 0):
            raise ValueError("alpha, beta and lambda must be positive")
        if self.onset_fit < 0 or self.onset_span < 0:
            raise ValueError("onset windows must be non-negative")
        if self.eps_det < 0:
            raise ValueError("detection threshold must be non-negative")
        chans = tuple(self.channels)
        if not chans or any(c not in CHANNELS for c in chans):
            raise ValueError(f"channels must be drawn from {CHANNELS}")
        object.__setattr__(self, "channels", chans)


def tail_output(trace: SimTrace, channels=("position",)) -> np.ndarray:
    """Tail-vehicle measurement, shape ``(len(trace), len(channels))``."""
    cols = []
    for c in channels:
        if c == "position":
            cols.append(trace.errors[:, -1])
        elif c == "velocity":
            cols.append(trace.error_rates[:, -1])
        else:
            raise ValueError(f"unknown output channel {c!r}")
    return np.column_stack(cols)


def _as_2d(y):
    y = np.asarray(y, dtype=float)
    return y[:, None] if y.ndim == 1 else y


@dataclass
class CostLedger:
    hypotheses: list
    residual: np.ndarray
    integral: np.ndarray
    cost: np.ndarray

    @classmethod
    def empty(cls, hypotheses) -> "CostLedger":
        z = np.zeros(len(hypotheses))
        return cls(list(hypotheses), z.copy(), z.copy(), z.copy())


def update_cost(ledger: CostLedger, residuals, dt: float,
                config: IdentifierConfig) -> CostLedger:
    """Fold one step of residuals into the ledger.

    ``I <- exp(-lam dt) I + dt |e|^2`` and ``J = alpha |e|^2 + beta I``.
    ``residuals`` has one row per hypothesis (scalar or channel vector).
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    e = np.asarray(residuals, dtype=float)
    sq = e ** 2 if e.ndim == 1 else np.sum(e ** 2, axis=1)
    integral = math.exp(-config.lam * dt) * ledger.integral + dt * sq
    cost = config.alpha * sq + config.beta * integral
    return CostLedger(ledger.hypotheses, e, integral, cost)


def cost_trajectories(sq_residuals: np.ndarray, dt: float, config: IdentifierConfig):
    """Vectorised :func:`update_cost` over a ``(steps, hypotheses)`` array."""
    sq = np.asarray(sq_residuals, dtype=float)
    decay = math.exp(-config.lam * dt)
    integral = lfilter([dt], [1.0, -decay], sq, axis=0)
    return integral, config.alpha * sq + config.beta * integral


def select(ledger) -> Hypothesis:
    """Hypothesis with the smallest cost; ties go to smaller ``k``, then attentive."""
    hyps = ledger.hypotheses
    if not hyps:
        raise ValueError("empty ledger")
    order = sorted(range(len(hyps)), key=lambda i: hyps[i].sort_key)
    costs = np.asarray(ledger.cost)
    best = min(order, key=lambda i: costs[i])
    return hyps[best]


def cost_profile(ledger: CostLedger, d: DriverKind) -> list:
    """``(k, J)`` pairs for a fixed driver kind, ordered by ``k``."""
    pairs = [(h.k, float(c)) for h, c in zip(ledger.hypotheses, ledger.cost) if h.d is d]
    return sorted(pairs)


def detect_fault_time(measured, nominal, eps_det: float, t) -> Optional[float]:
    """Earliest time the tail residual against the no-fault prediction exceeds ``eps_det``."""
    y, y0 = _as_2d(measured), _as_2d(nominal)
    t = np.asarray(t, dtype=float)
    if y.shape != y0.shape or y.shape[0] != t.size:
        raise ValueError("measured and nominal signals must share the time grid")
    r = np.sqrt(np.sum((y - y0) ** 2, axis=1))
    hit = np.flatnonzero(r > eps_det)
    return float(t[hit[0]]) if hit.size else None


def predict_hypothesis(hypothesis: Hypothesis, config: PlatoonConfig, ref: ReferenceProfile,
                       t_f_hat: float, horizon: float, dt: float = 1e-3,
                       a_saf: float = 2.0, channels=("position",)) -> np.ndarray:
    """Tail output predicted by a full simulation under ``hypothesis`` faulting at ``t_f_hat``."""
    if not t_f_hat < horizon:
        raise ValueError("hypothesised fault time must precede the horizon")
    sim = Simulator(config, ref, horizon, dt)
    return tail_output(sim.trace(hypothesis.fault(t_f_hat, a_saf)), channels)


@dataclass
class IdentificationResult:
    hypotheses: list
    t: np.ndarray                 # grid from the cost start to the horizon
    costs: np.ndarray             # (len(t), len(hypotheses))
    selected: np.ndarray          # index into hypotheses, per row of t
    final: Optional[Hypothesis]
    t_detect: Optional[float]
    t_f_hat: Optional[float]
    onsets: dict = field(default_factory=dict)
    predictions: Optional[np.ndarray] = None

    @property
    def ledger(self) -> CostLedger:
        return CostLedger(self.hypotheses, np.zeros(len(self.hypotheses)),
                          np.zeros(len(self.hypotheses)), self.costs[-1])

    def selection_labels(self) -> list:
        return [self.hypotheses[i].label for i in self.selected]

    def convergence_time(self, truth: Hypothesis) -> Optional[float]:
        """First time after which the selection is ``truth`` until the horizon."""
        return convergence_time(self.t, [self.hypotheses[i] for i in self.selected], truth)


def convergence_time(t, selections, truth) -> Optional[float]:
    last_wrong = None
    for j, h in enumerate(selections):
        if (h.k, h.d) != (truth.k, truth.d):
            last_wrong = j
    if last_wrong is None:
        return float(t[0]) if len(t) else None
    if last_wrong == len(t) - 1:
        return None
    return float(t[last_wrong + 1])


class MultiModelIdentifier:
    """Hypothesis bank over one platoon/reference/time grid.

    The detector knows the platoon, the reference, ``a_saf`` and both driver
    models; it does not know ``k``, ``d`` or the fault time.
    """

    def __init__(self, config: PlatoonConfig, ref: ReferenceProfile, horizon: float,
                 dt: float = 1e-3, a_saf: float = 2.0,
                 id_config: IdentifierConfig = IdentifierConfig(),
                 hypotheses: Optional[Sequence[Hypothesis]] = None):
        self.config = config
        self.ref = ref
        self.a_saf = a_saf
        self.cfg = id_config
        self.sim = Simulator(config, ref, horizon, dt)
        self.dt = dt
        self.hypotheses = sorted(hypotheses) if hypotheses is not None else hypothesis_bank(config.n)
        p0, v0 = self.sim.formation()
        self._P, self._V, _ = self.sim.run(p0, v0)
        self.nominal = self._output(self._P, self._V, 0)
        self.simulations = 0

    @property
    def t(self) -> np.ndarray:
        return self.sim.t

    def _output(self, P, V, start):
        idx = slice(start, start + P.shape[0])
        cols = []
        for c in self.cfg.channels:
            if c == "position":
                cols.append(P[:, -1] - (self.sim.ref_p[idx] - self.sim.offsets[-1]))
            else:
                cols.append(V[:, -1] - self.sim.ref_v[idx])
        return np.column_stack(cols)

    def _run(self, h: Hypothesis, onset: int, stop: Optional[int] = None) -> np.ndarray:
        stop = self.sim.steps if stop is None else stop
        self.simulations += 1
        fault = h.fault(onset * self.dt, self.a_saf)
        P, V, _ = self.sim.run(self._P[onset], self._V[onset], onset, stop, fault)
        return self._output(P, V, onset)

    def predict(self, h: Hypothesis, onset: int) -> np.ndarray:
        """Full-horizon tail output with the fault switched on at grid index ``onset``."""
        out = self.nominal.copy()
        out[onset:] = self._run(h, onset)
        return out

    def crossing(self, h: Hypothesis, onset: int) -> Optional[int]:
        """Grid index where the hypothesis' own tail deviation first exceeds the threshold."""
        stop = min(self.sim.steps, onset + int(round(self.cfg.max_lag / self.dt)))
        y = self._run(h, onset, stop)
        r = np.sqrt(np.sum((y - self.nominal[onset:stop + 1]) ** 2, axis=1))
        hit = np.flatnonzero(r > self.cfg.eps_det)
        return onset + int(hit[0]) if hit.size else None

    def align_onset(self, h: Hypothesis, detect: int, max_iter: int = 8) -> int:
        """Onset index for which ``h`` would have been detected exactly at ``detect``."""
        max_lag = int(round(self.cfg.max_lag / self.dt))
        onset = detect
        seen = {}
        for _ in range(max_iter):
            c = self.crossing(h, onset)
            miss = max_lag if c is None else c - detect
            seen[onset] = abs(miss)
            if miss == 0:
                return onset
            nxt = min(max(onset - miss, 0), detect)
            if nxt in seen:
                break
            onset = nxt
        return min(seen, key=lambda o: (seen[o], -o))

    def refine_onset(self, h: Hypothesis, onset: int, y: np.ndarray, start: int,
                     coarse: int = 64) -> int:
        """Least-squares onset over ``[start, start + onset_fit]``, searched coarse to fine."""
        stop = min(self.sim.steps, start + int(round(self.cfg.onset_fit / self.dt)))
        cache = {}

        def sse(o):
            if o not in cache:
                pred = self._run(h, o, stop)
                r = y[start:stop + 1] - pred[start - o:]
                cache[o] = float(np.sum(r ** 2))
            return cache[o]

        reach = int(round(self.cfg.onset_span / self.dt))
        scan = [c for c in range(onset - reach, onset + reach + 1, coarse) if 0 <= c <= start]
        best = min(scan + [onset], key=lambda c: (sse(c), abs(c - onset)))
        stride = coarse // 4
        while stride >= 1:
            cands = [best + j * stride for j in (-2, -1, 0, 1, 2)]
            cands = [c for c in cands if 0 <= c <= start]
            best = min(cands, key=lambda c: (sse(c), abs(c - onset)))
            stride //= 4
        return best

    def identify(self, measured, t_f: Optional[float] = None,
                 keep_predictions: bool = False) -> IdentificationResult:
        """Run the bank against a measured tail signal on the simulator grid.

        With ``t_f`` given the fault time is taken as known; otherwise it is
        detected from the residual against the nominal prediction and each
        hypothesis gets its own onset consistent with that detection.
        """
        y = _as_2d(measured)
        if y.shape != self.nominal.shape:
            raise ValueError(f"measured signal must have shape {self.nominal.shape}")
        if t_f is not None:
            start = fault_step(t_f, self.dt)
            t_detect = None
            onsets = {h: start for h in self.hypotheses}
        else:
            t_detect = detect_fault_time(y, self.nominal, self.cfg.eps_det, self.t)
            if t_detect is None:
                return IdentificationResult(self.hypotheses, self.t[:0], np.zeros((0, len(self.hypotheses))),
                                            np.zeros(0, dtype=int), None, None, None)
            start = int(round(t_detect / self.dt))
            onsets = {h: self.align_onset(h, start) for h in self.hypotheses}
            if self.cfg.onset_fit > 0:
                onsets = {h: self.refine_onset(h, o, y, start) for h, o in onsets.items()}
        preds = np.stack([self.predict(h, onsets[h])[start:] for h in self.hypotheses], axis=1)
        resid = y[start:, None, :] - preds
        sq = np.sum(resid ** 2, axis=2)
        _, J = cost_trajectories(sq, self.dt, self.cfg)
        # bank is sorted, so the first minimum honours the tie rule
        selected = np.argmin(J, axis=1)
        final = self.hypotheses[selected[-1]]
        return IdentificationResult(
            self.hypotheses, self.t[start:], J, selected, final,
            t_detect, onsets[final] * self.dt, {h: o * self.dt for h, o in onsets.items()},
            preds if keep_predictions else None)


def identify(measured, config: PlatoonConfig, ref: ReferenceProfile, horizon: float,
             dt: float = 1e-3, a_saf: float = 2.0,
             id_config: IdentifierConfig = IdentifierConfig(),
             t_f: Optional[float] = None) -> IdentificationResult:
    """One-shot convenience wrapper around :class:`MultiModelIdentifier`."""
    ident = MultiModelIdentifier(config, ref, horizon, dt, a_saf, id_config)
    return ident.identify(measured, t_f)
