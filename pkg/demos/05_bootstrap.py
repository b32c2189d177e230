# ---
# jupyter:
#   jupytext:
#     formats: py:light
#     text_representation:
#       extension: .py
#       format_name: light
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# # .632+ bootstrap on the real data
#
# The estimate blends apparent and out-of-bag performance with a weight
# that grows with the observed overfitting. The interval is built from the
# spread of bootstrap-on-bootstrap scores around the apparent score. Small
# B here; the command line tool defaults to 1000.

# +
from survbench.bootstrap import dot632plus
from survbench.runner import run_real_data_bootstrap

R, w, theta = dot632plus(apparent=0.8, oob_mean=0.7, noinfo=0.5)
print(f"R = {R:.4f}, w = {w:.4f}, theta = {theta:.4f}")
# -

rows = run_real_data_bootstrap("pbc", B=20, methods=("cox", "rsf:logrank"), n_trees=100, seed=1)
for r in rows:
    flag = " (bounds reversed)" if r["inverted"] else ""
    print(f"{r['method']:<12} {r['metric']:<8} {r['theta']:.3f}  "
          f"[{r['ci_low']:.3f}, {r['ci_high']:.3f}]  R {r['R']:.2f}{flag}")
