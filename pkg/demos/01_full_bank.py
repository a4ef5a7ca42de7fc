"""
Locating a broken link with the full hypothesis bank
=====================================================

Ten vehicles accelerate from rest. Five seconds in, the link between vehicles
3 and 4 drops and a distracted driver takes over vehicle 4. Only the tail
vehicle's position error is observed.
"""

import numpy as np

from platoon_fdi import (DriverKind, FaultScenario, MultiModelIdentifier, PlatoonConfig,
                         ReferenceProfile, Segment, simulate)
from platoon_fdi.identifier import tail_output

# 0 -> 20 m/s in 10 s, then cruise and brake
ref = ReferenceProfile((Segment(10, "accelerate", 2.0), Segment(20, "cruise"),
                        Segment(5, "brake", 2.0)))
config = PlatoonConfig.uniform(10, gap=10.0)
horizon = 20.0

# the measurement: a faulted run, of which we keep only the tail
truth = FaultScenario(k=4, t_f=5.0, driver=DriverKind.DISTRACTED)
y = tail_output(simulate(config, ref, horizon, fault=truth))

# the bank knows the platoon, the reference and both driver models,
# but neither the location, the driver nor the fault time
bank = MultiModelIdentifier(config, ref, horizon)
result = bank.identify(y)
print(f"fault detected at {result.t_detect:.3f} s, onset estimate {result.t_f_hat:.3f} s")
print(f"final selection   {result.final.label}")

# cost ranking at the horizon
J = result.costs[-1]
for i in np.argsort(J)[:5]:
    print(f"  {result.hypotheses[i].label:>4s}  J = {J[i]:.4g}")

# selection history, sampled once per second
labels = result.selection_labels()
for j in range(0, len(result.t), 1000):
    print(f"  t = {result.t[j]:6.2f} s  -> {labels[j]}")
print("bank simulations:", bank.simulations)
