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
# # Choosing the cancellation weight
#
# Subtracting a reconstructed user with a weight below one helps when
# the reconstruction is noisy.  This notebook sweeps the weight and
# compares the measured optimum with the closed-form weight computed
# by `partial_sic.sic.compute_alpha`.

# %%
import matplotlib.pyplot as plt
import numpy as np

from partial_sic.channel import make_channel, noise_variance_for_snr, synthesize_received
from partial_sic.em import em_decode_user
from partial_sic.framing import PilotConfig, SoftSymbolEstimate, make_layout, modulate_and_frame
from partial_sic.sic import cancellation_diagnostics, compute_alpha
from partial_sic.turbo import CodeConfig, encode

alphas = np.round(np.arange(0.0, 1.2001, 0.01), 2)
rng = np.random.default_rng(0)

# %% [markdown]
# ## Known symbols, noisy channel
#
# The channel estimate carries complex Gaussian error with normalized
# power `E`.  The peak of the efficiency curve should sit at `1 / (1 + E)`.

# %%
fig, ax = plt.subplots()
for e_bar in (0.031, 0.1, 0.3, 1.0):
    n = 50_000
    h = np.exp(1j * rng.uniform(0, 2 * np.pi, n))
    x = rng.choice([-1.0, 1.0], n)
    h_hat = h + np.sqrt(e_bar / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    beta = [cancellation_diagnostics(h, x, h_hat, x, a).beta for a in alphas]
    line, = ax.plot(alphas, beta, label=f"E = {e_bar}")
    ax.axvline(1 / (1 + e_bar), color=line.get_color(), ls=":")
    print(f"E = {e_bar:5}: argmax {alphas[np.argmax(beta)]:.2f}, closed form {1 / (1 + e_bar):.3f}")
ax.set(xlabel="alpha", ylabel="beta", ylim=(-0.5, 1))
ax.legend()

# %% [markdown]
# The pilot weight at `E = 0.031`:

# %%
pilots = SoftSymbolEstimate(np.ones(1, dtype=complex), np.ones(1), np.ones(1, dtype=bool))
compute_alpha(pilots, 0.031, mode="pilot")

# %% [markdown]
# ## Decoded frames
#
# Now the symbols come from the turbo decoder.  With perfect channel
# knowledge the best weight is close to one.  With EM channel estimates
# both the measured optimum and the closed-form weight drop below one.
# The closed form lands a few hundredths under the peak here; the peak
# is flat, so the loss in efficiency is small.

# %%
code = CodeConfig.for_rate(0.53, 1000, 1)
layout = make_layout(1000, PilotConfig(51), rng.permutation(1000), rng)
data = ~layout.pilot_mask


def sweep(snr_db, csi_mode, frames=40):
    sigma_n2 = noise_variance_for_snr(snr_db)
    beta = np.zeros(alphas.size)
    predicted = []
    for _ in range(frames):
        bits = rng.integers(0, 2, code.info_length)
        x = modulate_and_frame(encode(bits, code), layout).symbols
        h = make_channel(layout.length, [1.0], 0.01, sigma_n2, [rng]).h
        y = synthesize_received([x], h, sigma_n2, rng)
        res = em_decode_user(y, code, layout, em_iterations=5, csi_mode=csi_mode, true_h=h[0])
        h_hat = h[0] if csi_mode == "perfect" else res.estimate.h_hat
        e_bar = np.mean(np.abs(h[0] - h_hat) ** 2 / np.abs(h[0]) ** 2)
        predicted.append(compute_alpha(res.soft, e_bar, correlation="genie", reference=x))
        args = (h[0][data], x[data], h_hat[data], res.soft.x_hat[data])
        beta += [cancellation_diagnostics(*args, a).beta for a in alphas]
    return beta / frames, float(np.mean(predicted))


fig, ax = plt.subplots()
for snr_db, mode in ((-1.2, "perfect"), (-1.2, "em"), (1.0, "em")):
    beta, predicted = sweep(snr_db, mode)
    ax.plot(alphas, beta, label=f"{mode}, {snr_db} dB")
    print(f"{mode:7} {snr_db:5} dB: argmax {alphas[np.argmax(beta)]:.2f}, "
          f"mean predicted {predicted:.3f}")
ax.set(xlabel="alpha", ylabel="beta", xlim=(0.5, 1.2))
ax.legend()
