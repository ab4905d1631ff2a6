"""The growth certificate on a small ball.

Calibrates the radius for a_bar = 0.1, prints the worst margins of every
sampled inequality, then follows a feedback trajectory and shows the
certificate grows at least as fast as time.
"""

import numpy as np

from fuller_inclusion import QuasiLyapunov, calibrate, simulate_feedback, verify_qlf

params, report = calibrate(0.1)
print(f"calibrated radius r = {params.r}")
for c in report.checks:
    print(f"  {c.name:15s} worst {c.worst:+.6g}  needs {c.sense} {c.threshold:g}")

extra = verify_qlf(params)
print("verification on a fresh grid:")
for c in extra.checks:
    print(f"  {c.name:17s} worst {c.worst:+.6g}  needs {c.sense} {c.threshold:g}")

qlf = QuasiLyapunov(params)
traj = simulate_feedback((0.0005, -0.001), 1.0, r=params.r)
times = np.linspace(traj.t0, traj.t1, 9)[:-1]
pts = traj.states(times)
w = qlf.values(pts[:, 0], pts[:, 1])
print("growth along a feedback trajectory (wbar - wbar(0) should exceed t):")
for t, v in zip(times, w):
    print(f"  t={t:.5f}  wbar-wbar0={v - w[0]:.5f}")
print(f"the trajectory leaves the ball after {traj.duration:.5f} with {len(traj.switch_points)} switches")
