"""Patchy solutions leaving the origin.

The origin has no unique feedback arc, so solutions are built from starts
(0, d) for shrinking d.  Consecutive members get closer, and the limit
sequence with eps = 1/k consists of exact solutions.  Takes about a minute.
"""

import math

from fuller_inclusion import QlfParams, build_ms_cover, solve_via_limits
from fuller_inclusion.lyapunov import QuasiLyapunov
from fuller_inclusion.solver import default_builders, offset_family

params = QlfParams(a_bar=0.1, r=0.005)
pa = build_ms_cover(math.ceil(4 / params.r), params.r, 1.0)
qlf = QuasiLyapunov(params)
print("cover:", pa.summary())

fam = offset_family((0.0, 0.0, 0.0), pa, qlf)
for d, run in zip(fam.offsets, fam.runs):
    tr = run.trajectory
    print(f"offset {d:.0e}: {len(tr.switch_points):3d} switches, duration {tr.duration:.6f}, stop {run.stop_reason}")
print("sup gaps between neighbours:", [f"{g:.3e}" for g in fam.gaps])
C, p = fam.fit()
print(f"fitted gap ~ {C:.3f} * offset^{p:.2f}")

traj, report = solve_via_limits((0.0, 0.0, 0.0), 6, *default_builders(params))
for k, res, d in zip(report.k_list, report.residuals, report.offsets):
    print(f"k={k}  offset {d:.2e}  residual {res:.1e}")
print("sup gaps:", [f"{g:.4f}" for g in report.sup_gaps])
print(f"final member has {len(traj.switch_points)} switches and ends at radius {math.hypot(traj.end.x, traj.end.y):.6f}")
