"""Strain error of BQCE and BQNL equilibria against the atomistic solution.

Both models are solved under the same smooth dead load with a localized
bump over the atomistic region; the error is measured in U^{1,2}.

    python3 demos/convergence.py
"""

from bqclab.experiments import SweepSpec, convergence_study

for model in ("bqce", "bqnl"):
    res = convergence_study(SweepSpec(model=model, n_list=(1024,), k_list=(4, 8, 16, 32), atomistic_width=64))
    print(model)
    for r in res.rows:
        print(f"  k = {r['k']:>3}  error = {r['error_u12']:.3e}  delta1 = {r['delta1_lhs']:.2e}  "
              f"delta2 = {r['delta2_lhs']:.2e}  newton its = {r['iterations']}")
    print(f"  fitted slope {res.fit.slope:.3f} (r^2 = {res.fit.r_squared:.4f})")
