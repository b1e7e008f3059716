"""Prototype: PDHG vs Dykstra agreement, speed, and stopping behavior."""
import time

import numpy as np

from barchan.grid import HeightField, make_grid, admissible
from barchan.projection import project_dykstra, project_pdhg

rng = np.random.default_rng(0)

print("=== 1D agreement sweep ===")
worst = 0.0
t_pdhg = t_dyk = 0.0
iters_p = []
iters_d = []
for trial in range(50):
    n = int(rng.integers(8, 65))
    lam = float(rng.choice([0.5, 1.0, 2.0]))
    grid = make_grid(1, 1.0, n)
    amp = float(rng.uniform(0.2, 2.0))
    v = HeightField(grid, amp * rng.normal(size=n))
    t0 = time.perf_counter()
    rp = project_pdhg(v, lam, tol=1e-8)
    t1 = time.perf_counter()
    rd = project_dykstra(v, lam, tol=1e-8)
    t2 = time.perf_counter()
    t_pdhg += t1 - t0
    t_dyk += t2 - t1
    diff = np.max(np.abs(rp.u.values - rd.u.values))
    worst = max(worst, diff)
    iters_p.append(rp.iterations)
    iters_d.append(rd.iterations)
    if not (rp.converged and rd.converged):
        print(f"  trial {trial}: NONCONV pdhg={rp.converged} dyk={rd.converged}")
    if trial < 5:
        print(
            f"  n={n:3d} lam={lam} diff={diff:.3e} "
            f"it_p={rp.iterations} it_d={rd.iterations} "
            f"gap_p={rp.primal_dual_gap:.2e} gap_d={rd.primal_dual_gap:.2e}"
        )

print(f"worst diff = {worst:.3e}")
print(f"pdhg total {t_pdhg:.2f}s (iters mean {np.mean(iters_p):.0f} max {max(iters_p)})")
print(f"dyk  total {t_dyk:.2f}s (sweeps mean {np.mean(iters_d):.0f} max {max(iters_d)})")

print("=== admissibility of outputs ===")
grid = make_grid(1, 1.0, 31)
v = HeightField(grid, np.zeros(31))
v.values[15] = 2.0
rp = project_pdhg(v, 1.0)
rd = project_dykstra(v, 1.0)
print("spike diff:", np.max(np.abs(rp.u.values - rd.u.values)))
print("admissible:", admissible(rp.u, 1.0), admissible(rd.u, 1.0))
print("m >= 0:", np.all(rp.m.values >= 0), "m max:", rp.m.values.max())

print("=== 2D timing ===")
g2 = make_grid(2, (1.0, 1.0), (32, 32))
v2 = HeightField(g2, 0.8 * rng.normal(size=(32, 32)))
t0 = time.perf_counter()
r2 = project_pdhg(v2, 1.0, tol=1e-8)
t1 = time.perf_counter()
print(f"2D 32x32: {t1-t0:.2f}s iters={r2.iterations} conv={r2.converged} "
      f"gap={r2.primal_dual_gap:.2e} viol={r2.constraint_violation:.2e}")
t0 = time.perf_counter()
r2t = project_pdhg(v2, 1.0, tol=1e-10)
t1 = time.perf_counter()
print(f"2D tight: {t1-t0:.2f}s iters={r2t.iterations} conv={r2t.converged} "
      f"gap={r2t.primal_dual_gap:.2e}")
print("tight vs normal:", np.max(np.abs(r2.u.values - r2t.u.values)))
