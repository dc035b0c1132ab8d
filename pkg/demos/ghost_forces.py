"""Ghost forces of blended energies at a uniform state.

Prints the patch-test residual of every model, then how the BQCE ghost force
shrinks as the blending width k grows for the linear and cubic shapes.

    python3 demos/ghost_forces.py
"""

from bqclab import LatticeConfig, LennardJones
from bqclab.blend import build_blend, get_shape
from bqclab.experiments import fit_rate, ghost_force_table, patch_test

N = 1024
pot = LennardJones()
config = LatticeConfig(N)

print("patch test at F = 1.05, cubic blend, k = 16")
for row in patch_test(pot, config, build_blend(config, get_shape("cubic"), N // 2, 64, 16), 1.05):
    print(f"  {row['model']:<12} {row['ghost_dual_norm']:.3e}")

ks = (4, 8, 16, 32, 64, 128)
for shape in ("linear", "cubic", "quintic"):
    rows = [ghost_force_table(pot, build_blend(config, get_shape(shape), N // 2, 64, k), 1.0) for k in ks]
    fit = fit_rate([(r["k"], r["ghost_dual_norm"]) for r in rows])
    norms = "  ".join(f"{r['ghost_dual_norm']:.2e}" for r in rows)
    print(f"{shape:<8} k = {ks}: {norms}  slope {fit.slope:.3f}")
