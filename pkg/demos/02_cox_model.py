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

# # Cox regression on PBC
#
# Newton-Raphson on the partial likelihood (Efron ties), stepwise AIC with
# the treatment forced into the model, then the Grambsch-Therneau check of
# proportional hazards on the selected model.

# +
from survbench import coxph
from survbench.runner import prepare_reference
from survbench.dataio import load_reference

ds = prepare_reference(load_reference("pbc"), "pbc")
full = coxph.fit(ds)
print(f"full model: {len(full.beta)} terms, AIC {full.aic():.1f}")
# -

candidates = [c for c in ds.names if c != "trt"]
sel = coxph.stepwise_aic(ds, candidates, "AIC", forced=("trt",))
for name, b, se in zip(sel.names, sel.beta, sel.se):
    print(f"{name:<9} {b:+.4f}  ({se:.4f})")
print(f"selected AIC {sel.aic():.1f}")

# The global test has one degree of freedom per selected term.

ph = coxph.ph_test(sel, ds.select(sel.names))
print(f"global chi2 {ph.global_chisq:.2f} on {ph.global_df} df, p = {ph.global_p:.4f}")
for name, p in zip(ph.names, ph.p):
    if p < 0.05:
        print("  non-proportional:", name, round(float(p), 4))

# Survival curves for the first three patients at one, five and ten years.

print(sel.predict_survival(ds.select(sel.names).X[:3], [365.25, 5 * 365.25, 10 * 365.25]).round(3))
