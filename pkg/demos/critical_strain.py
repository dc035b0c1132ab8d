"""Loss of stability under uniform stretch.

Compares the critical strain of the Cauchy-Born, atomistic, BQNL and BQCE
models, then follows a loaded equilibrium path until it turns unstable.

    python3 demos/critical_strain.py
"""

import numpy as np

from bqclab import LatticeConfig, LennardJones
from bqclab import energy as E
from bqclab.blend import build_blend, get_shape
from bqclab.experiments import canonical_load
from bqclab.solve import continuation
from bqclab.stability import cauchy_born_critical_strain, critical_strain

N = 256
pot = LennardJones()
config = LatticeConfig(N)
blend = build_blend(config, get_shape("cubic"), N // 2, 16, 8)

f_cb = cauchy_born_critical_strain(pot)
print(f"Cauchy-Born  F* = {f_cb:.10f}")
for tag in ("atomistic", "bqnl", "bqce"):
    f_star = critical_strain(E.build_model(tag, pot, N, blend), config, (1.0, 1.5))
    print(f"{tag:<12} F* = {f_star:.10f}  (F* - F*_cb = {f_star - f_cb:+.2e})")

m = E.bqnl(pot, blend)
path = np.arange(1.0, 1.2, 0.01)
out = continuation(m, canonical_load(config, 0.5, a=0.0, b=0.01), path)
print(f"continuation: {len(out.strains)} stable states up to F = {out.strains[-1]:.2f}")
print(f"stopped at F = {path[out.failed_at]:.2f}: {out.error}")
