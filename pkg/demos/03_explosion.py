"""Explosion in finite time: Z = 1 + C^2 with C' = Z.

With X(c) = c^2, z = 1 and no immigration, Z_t = 1 + C_t^2 and C' = Z, so
C_t = tan t explodes at pi/2.  Both solvers stop when C reaches the cap; the
time at which that happens is the explosion-time estimate.  The exact solver
is limited by the state mesh of the driver path, the Euler scheme by its span.
"""
import math

from affine_tc.config import build_model, load_config
from affine_tc.solver import euler_solve, exact_piecewise_solve, path_key, sample_drivers

base = load_config("preset: explosive")
print(f"cap {base.data['model']['cap']}; pi/2 = {math.pi / 2:.7f}\n")
print(f"{'resolution':>10}{'exact tau':>14}{'error':>10}{'Euler tau':>14}{'error':>10}")
for h in (1e-2, 1e-3, 1e-4):
    cfg = base.with_overrides(**{"solver.mesh": h, "solver.span": h})
    model = build_model(cfg)
    dr = sample_drivers(model, path_key(cfg.seed, 0), h, 2.0)
    ex = exact_piecewise_solve(model, dr, 2.0)
    eu = euler_solve(model, dr, h, 2.0)
    print(f"{h:>10.0e}{ex.tau_estimate:>14.7f}{ex.tau_estimate - math.pi / 2:>10.1e}"
          f"{eu.tau_estimate:>14.7f}{eu.tau_estimate - math.pi / 2:>10.1e}")

# Once C hits the cap, the true path still needs pi/2 - atan(cap), about
# 1/cap, to reach the pole.  At mesh 1e-4 that is most of the exact error.
for cap in (1e1, 1e2, 1e3):
    cfg = base.with_overrides(**{"model.cap": cap, "solver.mesh": 1e-4})
    model = build_model(cfg)
    tr = exact_piecewise_solve(model, sample_drivers(model, path_key(cfg.seed, 0), 1e-4, 2.0), 2.0)
    print(f"cap {cap:>7.0e}: tau {tr.tau_estimate:.7f}, pi/2 - atan(cap) = {math.pi / 2 - math.atan(cap):.1e}")
