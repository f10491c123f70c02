# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Channel estimation error versus SNR
#
# A single user with Wiener phase noise, decoded with EM channel
# estimation.  The normalized channel MSE falls with SNR and then
# levels off: the sliding window cannot follow the phase drift any
# better once noise stops dominating.

# %%
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

from partial_sic.experiments import load_config, run_experiment

root = Path.cwd() if (Path.cwd() / "configs").exists() else Path.cwd().parent
cfg = load_config(root / "configs" / "single_user_ebar.ini")
cfg.trials = 30

# %%
out = run_experiment(cfg)
aggs = out.aggregates()
snr = np.array([a.snr_db for a in aggs])
e_bar = np.array([a.e_bar for a in aggs])
for a in aggs:
    print(f"{a.snr_db:5.1f} dB  E_bar {a.e_bar:.4f}  BER {a.ber:.2e}")

# %%
fig, ax = plt.subplots()
ax.semilogy(snr, e_bar, "o-")
ax.set(xlabel="SNR [dB]", ylabel="normalized channel MSE")
ax.grid(True, which="both", alpha=0.3)
