"""Re-check agreement at alpha=2 and measure warm-start payoff."""
import time

import numpy as np

from barchan.grid import HeightField, make_grid
from barchan.projection import project_dykstra, project_pdhg, resolvent_step

rng = np.random.default_rng(0)

worst = 0.0
t_p = t_d = 0.0
it_p = []
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
    t_p += t1 - t0
    t_d += t2 - t1
    it_p.append(rp.iterations)
    worst = max(worst, np.max(np.abs(rp.u.values - rd.u.values)))
    assert rp.converged and rd.converged
print(f"alpha=2: worst diff {worst:.3e}, pdhg {t_p:.2f}s (mean it {np.mean(it_p):.0f}), dyk {t_d:.2f}s")

print("=== warm start chain ===")
grid = make_grid(1, 1.0, 63)
for warm_on in (False, True):
    u = HeightField(grid, np.zeros(63))
    g = np.zeros(63)
    g[31] = 5.0
    warm = None
    tot = 0
    t0 = time.perf_counter()
    for k in range(50):
        r = resolvent_step(u, g, 0.05, 1.0, warm_dual=warm)
        u = r.u
        if warm_on:
            warm = r.dual
        tot += r.iterations
    print(f"warm={warm_on}: {tot} iters {time.perf_counter()-t0:.2f}s")

print("=== 2D warm chain 32x32 ===")
g2 = make_grid(2, (1.0, 1.0), (32, 32))
u = HeightField(g2, np.zeros((32, 32)))
src = np.zeros((32, 32))
src[16, 16] = 5.0
warm = None
tot = 0
t0 = time.perf_counter()
for k in range(50):
    r = resolvent_step(u, src, 0.05, 1.0, warm_dual=warm)
    u = r.u
    warm = r.dual
    tot += r.iterations
print(f"2D warm: {tot} iters {time.perf_counter()-t0:.2f}s")
