"""Monte Carlo Laplace transforms against the Riccati oracle.

For each shipped model preset the script simulates Z_t with the vectorised
Euler scheme and compares the sample mean of exp(u . Z_t) with
exp(z . psi(t, u) + phi(t, u)) from the Riccati solver.  Pass a path count
on the command line to trade speed for precision (default 20000).
"""
import sys

from affine_tc.config import build_model, load_config, parse_u
from affine_tc.montecarlo import estimate_laplace, timed
from affine_tc.riccati import build_exponents, solve_riccati

n_paths = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000

print(f"{'preset':<18}{'estimate':>12}{'oracle':>12}{'SE':>10}{'z':>7}{'secs':>7}")
for name in ("pure-immigration", "feller", "cir-immigration", "ou"):
    cfg = load_config(f"preset: {name}")
    model = build_model(cfg)
    u = parse_u(cfg.experiment["u"], model.dim)
    est, secs = timed(estimate_laplace, model, u, 1.0, n_paths, cfg.seed)
    print(f"{name:<18}{est.mean.real:>12.6f}{est.oracle.real:>12.6f}{est.std_error:>10.2e}"
          f"{est.z_score:>7.2f}{secs:>7.1f}")

# The oracle is only as good as the ODE solve.  For the Feller diffusion the
# Riccati flow psi' = psi^2 / 2 has the closed form psi = u / (1 - u t / 2).
sol = solve_riccati(build_exponents(build_model(load_config("preset: feller"))), [-1.0], 1.0)
print(f"\nFeller psi(1, -1): solver {sol.psi[-1, 0].real:.15f}, closed form {-2 / 3:.15f}, "
      f"{sol.grid.size - 1} RK4 steps, {sol.rejected} rejected")
