"""
Chain transfer functions and driver distinctness
================================================

The blending step rests on transfer functions from the faulted vehicle to the
tail. This script checks them against time-domain simulation and looks at
what separates the two driver models.
"""

import numpy as np

from platoon_fdi import Architecture, ControllerGains, DriverKind, PlatoonConfig, ReferenceProfile, simulate
from platoon_fdi import lti

gains = ControllerGains()

# every first-to-last chain passes constant offsets unchanged
for n in (2, 5, 10):
    pf, sb = lti.g_pf(gains, n - 1), lti.g_sb(gains, n)
    print(f"N = {n:2d}: DC gain PF {pf.dc_gain():.6f}, SB {sb.dc_gain():.6f}, "
          f"slowest SB pole {max(lti.poles(sb).values.real):.4f}")

# peak gain over frequency: the PD link amplifies low frequencies
omega = np.logspace(-2, 1, 400)
for m in (1, 3, 6):
    mag = np.abs(lti.freq_response(lti.g_pf(gains, m), omega))
    print(f"PF {m} links: peak |G| = {mag.max():.3f} at {omega[mag.argmax()]:.3f} rad/s")

# time domain against the transfer function, 6 vehicles
dt, horizon = 1e-3, 30.0
t = np.arange(int(round(horizon / dt)) + 1) * dt
for arch in Architecture:
    w = np.zeros((t.size, 6))
    w[:, 0] = 0.5 * np.sin(0.4 * t)
    tr = simulate(PlatoonConfig.uniform(6, architecture=arch), ReferenceProfile.cruise(15.0),
                  horizon, dt, w)
    pred = lti.simulate_tf(lti.chain_tf(gains, 5, arch), tr.errors[:, 0], dt)
    rel = np.sqrt(np.mean((tr.errors[:, -1] - pred) ** 2) / np.mean(tr.errors[:, -1] ** 2))
    print(f"{arch.value}: simulation vs transfer function, RMS relative error {rel:.1e}")

# the two driver models
att, dist = lti.driver_tf(DriverKind.ATTENTIVE), lti.driver_tf(DriverKind.DISTRACTED)
print(f"H2 distance attentive/distracted: {lti.h2_distance(att, dist):.4f}")
for w0 in (0.1, 0.5, 1.0):
    a, d = lti.freq_response(att, w0), lti.freq_response(dist, w0)
    print(f"  w = {w0:3.1f}: |A| = {abs(a):.3f}, |D| = {abs(d):.3f}, "
          f"phase gap {np.degrees(np.angle(a / d)):6.1f} deg")
