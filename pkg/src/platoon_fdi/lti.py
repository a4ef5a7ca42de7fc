"""Polynomials and rational transfer functions for the platoon chains.

Coefficients are stored in ascending powers of ``s`` throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.polynomial import polynomial as P

from . import _kernels
from .driver import DriverKind, DriverParams
from .platoon import Architecture, ControllerGains

MAX_PLATOON = 16


class Poly:
    """Real polynomial with ascending coefficients and no zero leading term."""

    __slots__ = ("coef",)

    def __init__(self, coef: Iterable[float]):
        c = np.atleast_1d(np.asarray(coef, dtype=float)).copy()
        if c.size == 0:
            c = np.zeros(1)
        nz = np.flatnonzero(c)
        c = c[: nz[-1] + 1] if nz.size else c[:1]
        self.coef = c

    @property
    def degree(self) -> int:
        return self.coef.size - 1

    def is_zero(self) -> bool:
        return self.coef.size == 1 and self.coef[0] == 0.0

    def __call__(self, s):
        return P.polyval(s, self.coef)

    def __add__(self, other):
        return Poly(P.polyadd(self.coef, _coef(other)))

    __radd__ = __add__

    def __sub__(self, other):
        return Poly(P.polysub(self.coef, _coef(other)))

    def __rsub__(self, other):
        return Poly(P.polysub(_coef(other), self.coef))

    def __mul__(self, other):
        return Poly(P.polymul(self.coef, _coef(other)))

    __rmul__ = __mul__

    def __neg__(self):
        return Poly(-self.coef)

    def __pow__(self, m: int):
        if m < 0:
            raise ValueError("negative polynomial power")
        out = Poly([1.0])
        for _ in range(m):
            out = out * self
        return out

    def __eq__(self, other):
        return isinstance(other, Poly) and np.array_equal(self.coef, other.coef)

    def allclose(self, other, rtol=1e-12, atol=0.0) -> bool:
        a, b = self.coef, _coef(other)
        n = max(a.size, b.size)
        a = np.pad(a, (0, n - a.size))
        b = np.pad(b, (0, n - b.size))
        return bool(np.allclose(a, b, rtol=rtol, atol=atol))

    def __repr__(self):
        return f"Poly({self.coef.tolist()})"


def _coef(x):
    if isinstance(x, Poly):
        return x.coef
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class RationalTF:
    """``num(s) / den(s) * exp(-delay s)``."""

    num: Poly
    den: Poly
    delay: float = 0.0

    def __post_init__(self):
        num = self.num if isinstance(self.num, Poly) else Poly(self.num)
        den = self.den if isinstance(self.den, Poly) else Poly(self.den)
        if den.is_zero():
            raise ValueError("denominator is identically zero")
        if self.delay < 0:
            raise ValueError("transport delay must be non-negative")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @property
    def relative_degree(self) -> int:
        return self.den.degree - self.num.degree

    @property
    def is_proper(self) -> bool:
        return self.relative_degree >= 0

    @property
    def is_strictly_proper(self) -> bool:
        return self.relative_degree > 0 or self.num.is_zero()

    def __mul__(self, other: "RationalTF") -> "RationalTF":
        return RationalTF(self.num * other.num, self.den * other.den,
                          self.delay + other.delay)

    def __pow__(self, m: int) -> "RationalTF":
        return RationalTF(self.num ** m, self.den ** m, self.delay * m)

    def scaled(self, gain: float) -> "RationalTF":
        return RationalTF(self.num * gain, self.den, self.delay)

    def dc_gain(self) -> float:
        return float(self.num(0.0) / self.den(0.0))

    def __call__(self, s):
        return freq_eval(self, s)


def freq_eval(tf: RationalTF, s):
    s = np.asarray(s, dtype=complex)
    return tf.num(s) / tf.den(s) * np.exp(-tf.delay * s)


def alpha_poly(g: ControllerGains) -> Poly:
    """Interior diagonal entry ``s^2 + 2 b0 s + 2 k0``."""
    return Poly([2 * g.k0, 2 * g.b0, 1.0])


def beta_poly(g: ControllerGains) -> Poly:
    """Neighbour coupling ``-(b0 s + k0)``."""
    return Poly([-g.k0, -g.b0])


def gamma_poly(g: ControllerGains) -> Poly:
    """Last-vehicle diagonal entry ``s^2 + b0 s + k0``."""
    return Poly([g.k0, g.b0, 1.0])


def t_link(gains: ControllerGains) -> RationalTF:
    """Single predecessor-following link ``(b0 s + k0) / (s^2 + b0 s + k0)``."""
    return RationalTF(Poly([gains.k0, gains.b0]), gamma_poly(gains))


def _check_size(n: int, what: str, lo: int):
    if n < lo:
        raise ValueError(f"{what} must be >= {lo}, got {n}")
    if n > MAX_PLATOON:
        raise ValueError(f"{what}={n} exceeds the supported platoon size {MAX_PLATOON}")


def g_pf(gains: ControllerGains, m: int) -> RationalTF:
    """First-to-last transfer function of a PF chain with ``m`` links."""
    _check_size(m, "number of links", 1)
    return t_link(gains) ** m


def delta_recursion(gains: ControllerGains, n: int) -> Poly:
    """Determinant of the n x n tridiagonal matrix with all-interior diagonal."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a, b2 = alpha_poly(gains), beta_poly(gains) ** 2
    prev, cur = Poly([1.0]), a
    for _ in range(n - 1):
        prev, cur = cur, a * cur - b2 * prev
    return cur


def sb_denominator(gains: ControllerGains, n_vehicles: int) -> Poly:
    """Determinant of the follower subsystem of an SB platoon of ``n_vehicles``.

    Rows 2..N of the coupled error equations with vehicle 1 as forcing; the last
    row carries the front-only diagonal.
    """
    _check_size(n_vehicles, "platoon size", 2)
    g = gamma_poly(gains)
    if n_vehicles == 2:
        return g
    b2 = beta_poly(gains) ** 2
    d2 = delta_recursion(gains, n_vehicles - 2)
    d3 = delta_recursion(gains, n_vehicles - 3) if n_vehicles > 3 else Poly([1.0])
    return g * d2 - b2 * d3


def sb_denominator_naive(gains: ControllerGains, n_vehicles: int) -> Poly:
    """``gamma alpha^(N-1) - beta^2 alpha^(N-2)``, the closed form that treats
    every interior minor as a pure power of alpha.

    Kept for comparison only; it disagrees with the actual determinant for
    ``N >= 3``.
    """
    _check_size(n_vehicles, "platoon size", 2)
    a, b2, g = alpha_poly(gains), beta_poly(gains) ** 2, gamma_poly(gains)
    return g * a ** (n_vehicles - 1) - b2 * a ** (n_vehicles - 2)


def g_sb(gains: ControllerGains, n_vehicles: int) -> RationalTF:
    """Transfer function from vehicle 1's to vehicle N's tracking error (SB)."""
    num = (-beta_poly(gains)) ** (n_vehicles - 1)
    return RationalTF(num, sb_denominator(gains, n_vehicles))


def sb_follower_matrix(gains: ControllerGains, n_vehicles: int, s: complex) -> np.ndarray:
    """Numeric follower-subsystem matrix at a single complex frequency."""
    m = n_vehicles - 1
    a = alpha_poly(gains)(s)
    b = beta_poly(gains)(s)
    A = np.zeros((m, m), dtype=complex)
    for i in range(m):
        A[i, i] = a
        if i + 1 < m:
            A[i, i + 1] = A[i + 1, i] = b
    A[-1, -1] = gamma_poly(gains)(s)
    return A


def driver_tf(driver) -> RationalTF:
    params = driver.params if isinstance(driver, DriverKind) else driver
    num, den = params.rational()
    return RationalTF(Poly(num), Poly(den), params.T_d)


def chain_tf(gains: ControllerGains, links: int, architecture: Architecture) -> RationalTF:
    """Platoon chain behind a head vehicle with ``links`` followers."""
    if architecture is Architecture.PF:
        return g_pf(gains, links)
    return g_sb(gains, links + 1)


def compose_fault_tf(gains: ControllerGains, remaining: int, driver,
                     architecture: Architecture) -> RationalTF:
    """Chain of ``remaining`` links behind the faulted vehicle times the driver model."""
    _check_size(remaining, "remaining length", 1)
    return chain_tf(gains, remaining, architecture) * driver_tf(driver)


def freq_response(tf: RationalTF, omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    s = 1j * omega
    den = tf.den(s)
    scale = np.max(np.abs(tf.den.coef)) * np.maximum(1.0, np.abs(s)) ** tf.den.degree
    if np.any(np.abs(den) <= 1e-14 * scale):
        raise ZeroDivisionError("frequency grid hits a pole")
    return tf.num(s) / den * np.exp(-1j * omega * tf.delay)


@dataclass(frozen=True)
class PoleSet:
    values: np.ndarray
    multiplicities: np.ndarray

    def all(self) -> np.ndarray:
        return np.repeat(self.values, self.multiplicities)

    def __len__(self):
        return int(self.multiplicities.sum())


def _group(roots: np.ndarray, tol: float):
    vals, mult = [], []
    for r in roots:
        for i, v in enumerate(vals):
            if abs(r - v) <= tol * max(1.0, abs(v)):
                mult[i] += 1
                break
        else:
            vals.append(r)
            mult.append(1)
    return np.array(vals, dtype=complex), np.array(mult, dtype=int)


def companion(den: Poly) -> np.ndarray:
    c = den.coef / den.coef[-1]
    n = den.degree
    C = np.zeros((n, n))
    C[1:, :-1] = np.eye(n - 1)
    C[:, -1] = -c[:-1]
    return C


def poles(tf_or_den, group_tol: float = 1e-6) -> PoleSet:
    """Poles from the eigenvalues of the denominator's companion matrix.

    Each reported pole must satisfy ``|den(p)| / ||den|| < 1e-6``.
    """
    den = tf_or_den.den if isinstance(tf_or_den, RationalTF) else tf_or_den
    if den.degree < 1:
        raise ValueError("denominator has no roots")
    roots = np.linalg.eigvals(companion(den))
    scale = np.linalg.norm(den.coef) * np.maximum(1.0, np.abs(roots)) ** den.degree
    resid = np.abs(den(roots)) / scale
    if np.any(resid > 1e-6):
        raise ArithmeticError(f"pole residual check failed (max {resid.max():.2e})")
    roots = roots[np.lexsort((roots.imag, roots.real))]
    vals, mult = _group(roots, group_tol)
    return PoleSet(vals, mult)


def pole_separation(a: PoleSet, b: PoleSet) -> float:
    """Smallest distance between any pole of ``a`` and any pole of ``b``."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("pole sets must be non-empty")
    return float(np.min(np.abs(a.values[:, None] - b.values[None, :])))


def sb_pole_formula(gains: ControllerGains, n_vehicles: int, k: int) -> np.ndarray:
    """Closed-form pole pattern claimed for a fault at ``k`` (diagnostic only)."""
    m = n_vehicles - k + 1
    i = np.arange(1, m + 1)
    rad = np.sqrt(complex(2 * gains.k0 - gains.b0 ** 2 / 2))
    im = rad * np.sin(i * np.pi / (2 * m))
    return np.concatenate([-gains.b0 + 1j * im, -gains.b0 - 1j * im])


def default_h2_grid(points: int = 4096) -> np.ndarray:
    return np.logspace(-3, 3, points)


def h2_distance(a: RationalTF, b: RationalTF, omega=None) -> float:
    """``(1/pi) * integral |A(jw) - B(jw)|^2 dw`` by the trapezoid rule on ``omega``."""
    if not (a.is_strictly_proper and b.is_strictly_proper):
        raise ValueError("H2 distance needs strictly proper transfer functions")
    omega = default_h2_grid() if omega is None else np.asarray(omega, dtype=float)
    diff = freq_response(a, omega) - freq_response(b, omega)
    return float(np.trapezoid(np.abs(diff) ** 2, omega) / np.pi)


def state_space(tf: RationalTF):
    """Controllable-canonical (A, B, C, D) of the delay-free part."""
    if not tf.is_proper:
        raise ValueError("improper transfer function cannot be simulated")
    den = tf.den.coef / tf.den.coef[-1]
    num = np.pad(tf.num.coef / tf.den.coef[-1], (0, tf.den.degree + 1 - tf.num.coef.size))
    n = tf.den.degree
    D = num[n]
    if n == 0:
        return np.zeros((0, 0)), np.zeros(0), np.zeros(0), float(D)
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -den[:n]
    B = np.zeros(n)
    B[-1] = 1.0
    C = num[:n] - D * den[:n]
    return A, B, C, float(D)


def rk4_matrices(A: np.ndarray, B: np.ndarray, dt: float):
    """Exact one-step maps of classical RK4 on ``x' = Ax + Bu`` with ``u`` held."""
    n = A.shape[0]
    h = dt * A
    I = np.eye(n)
    h2 = h @ h
    h3 = h2 @ h
    phi = I + h + h2 / 2 + h3 / 6 + h3 @ h / 24
    gam = dt * (I + h / 2 + h2 / 6 + h3 / 24) @ B
    return phi, gam


def simulate_tf(tf: RationalTF, u, dt: float) -> np.ndarray:
    """Response of ``tf`` to samples ``u`` held over each step (zero state)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise ValueError("input must be a one-dimensional sample sequence")
    A, B, C, D = state_space(tf)
    if A.shape[0] == 0:
        y = D * u
    else:
        phi, gam = rk4_matrices(A, B, dt)
        y = _kernels.linear_response(phi, gam, np.ascontiguousarray(C), D,
                                     np.ascontiguousarray(u))
    shift = int(round(tf.delay / dt))
    if shift:
        y = np.concatenate([np.zeros(min(shift, y.size)), y[: max(y.size - shift, 0)]])
    return y
