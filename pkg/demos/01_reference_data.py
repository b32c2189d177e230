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

# # The two reference trials
#
# Both trials ship with the package together with a column schema. PBC
# keeps its missing cells on load; the prostate data are reduced to
# complete cases.

# +
import numpy as np

from survbench.dataio import load_reference, summarize, impute_column_means

pbc = load_reference("pbc")
prostate = load_reference("prostate")
print(pbc.n, "PBC rows,", int(pbc.status.sum()), "deaths")
print(prostate.n, "prostate rows,", int(prostate.status.sum()), "deaths")
# -

# Per-column summaries: median, mean, sd, range and missing count for
# continuous columns, level frequencies for categorical ones.

tab = summarize(pbc)
for name in ("bili", "chol", "copper", "trig", "platelet"):
    r = tab[name]
    print(f"{name:<9} median {r.median:8.2f}  mean {r.mean:8.2f}  missing {r.missing}")
print("edema levels", tab["edema"].frequencies)

# Missing cells are filled with column means before any model sees them.

filled = impute_column_means(pbc)
print("missing after imputation:", int(np.isnan(filled.X).sum()))
