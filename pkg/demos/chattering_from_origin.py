"""Chattering near the origin.

Builds the truncated solution that leaves the origin, checks the switch
magnitudes grow by sqrt(3) per arc, and compares it with the plain feedback
simulation started from its first point.
"""

import math

from fuller_inclusion import chattering_from_origin, simulate_feedback
from fuller_inclusion.dynamics import SQRT3, tail_time

scale = 0.1
traj = chattering_from_origin(scale, 20)

mags = [abs(p.y) for p in traj.switch_points]
print("last five switch ordinates:")
for p in traj.switch_points[-5:]:
    print(f"  t={p.t:.6f}  y={p.y:+.6f}")

ratios = [b / a for a, b in zip(mags, mags[1:])]
print(f"ratio range: {min(ratios):.15f} .. {max(ratios):.15f}  (sqrt 3 = {SQRT3:.15f})")

# the omitted arcs are a geometric tail, so the time from the origin is exact
elapsed = traj.duration + traj.time_offset
print(f"time from origin to the exit switch: {elapsed:.12f}")
print(f"closed form scale*(2+sqrt3):          {tail_time(scale):.12f}")
print(f"truncation radius of the first arc:   {traj.truncation_radius:.3e}")

# the same arcs come out of the feedback law
start = traj.start
fb = simulate_feedback((start.x, start.y), traj.duration, r=1.0)
gap = max(
    math.hypot(p.x - q.x, p.y - q.y) for p, q in zip(traj.switch_points, fb.switch_points)
)
print(f"max switch-point gap against feedback simulation: {gap:.2e}")
