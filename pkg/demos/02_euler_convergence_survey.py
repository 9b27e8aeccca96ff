"""How often does the Euler sup-error fall monotonically, and how fast?

The euler-study preset pins three driver seeds.  This survey repeats the
study on 24 consecutive seeds to show what the pinned seeds are typical of:
the error falls on every rung, the fitted log-log slope sits near 1, and on
a minority of seeds (2 of 24) a flat stretch in the error ladder pulls the
slope just under 0.9.
"""
import numpy as np

from affine_tc.config import build_model, load_config
from affine_tc.solver import euler_convergence, path_key, sample_drivers

cfg = load_config("preset: euler-study")
model = build_model(cfg)
spans = cfg.experiment["spans"]
mesh = float(cfg.solver["mesh"])

slopes, mono = [], []
for seed in range(24):
    dr = sample_drivers(model, path_key(seed, 0), mesh, 1.0)
    st = euler_convergence(model, dr, spans, 1.0, seed)
    slopes.append(st.slope)
    mono.append(st.monotone)
    print(f"seed {seed:>2}: slope {st.slope:6.3f}  monotone {st.monotone}  "
          f"errors {' '.join(f'{e:.1e}' for e in st.errors)}")

slopes = np.array(slopes)
print(f"\nslope >= 0.9 on {np.sum(slopes >= 0.9)}/24 seeds, monotone on {sum(mono)}/24; "
      f"median slope {np.median(slopes):.3f}")
