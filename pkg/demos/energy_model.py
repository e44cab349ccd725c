"""
How much charge does a leg cost?
================================

The UAV draws power according to a cubic fit in airspeed plus a payload
term.  Wind and payload are random, so the charge left after a leg is a
distribution over SOC bins rather than a single number.
"""
import numpy as np

from rendezvous_cmdp.energy import BatterySpec, PowerCoefficients, StochasticParams, leg_soc_distribution, power

c = PowerCoefficients()

# Power at the two cruise speeds with a 2.3 kg payload.  Best-range speed
# draws more power but covers more ground per joule.
for v in (9.8, 14.0):
    p = float(power(v, 2.3, c))
    print(f"v = {v:5.1f} m/s: {p:8.3f} W, {p / v:6.2f} J/m")

# A coarse sweep of the curve
speeds = np.linspace(6, 18, 7)
print(np.round(power(speeds, 2.3, c), 1))

###############################################################################
# End-of-leg SOC
# --------------
# Sample the disturbances, convert to consumed bins and read off where a
# 10.5 km leg started at 60 % ends up.  Anything below bin 0 is failure.

battery = BatterySpec(240_000.0, 101)
params = StochasticParams()
for v in (9.8, 14.0):
    dist = leg_soc_distribution(10_500.0, v, 60, battery, params, c, n_samples=20_000, seed=1)
    bins = np.array(sorted(dist.masses))
    probs = np.array([dist.masses[b] for b in bins])
    mean = float(bins @ probs / probs.sum()) if probs.size else float("nan")
    print(f"v = {v:4.1f}: mean end bin {mean:5.1f}, P(out of charge) = {dist.failure:.4f}")
