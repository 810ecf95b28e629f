# ---
# jupyter:
#   jupytext:
#     formats: ipynb,py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
#       format_version: '1.3'
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # How varied is a generated dataset?
#
# Each base room gets several material variants (wall reflectivity and
# scattering drawn per face and per octave band) and several random
# source/listener pairs. We render a small set and look at the spread of
# decay times and of normalized band-energy spectra.

# %%
import tempfile

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from auralkit.dataset import analyze_diversity, desk_scenes, generate_dataset

scenes = desk_scenes(4, seed=0)
for name, room in scenes.items():
    print(name, np.round(room.vertices.reshape(-1, 3).max(axis=0), 2))

# %%
out = tempfile.mkdtemp()
manifest = generate_dataset(scenes, 3, 3, 12, out, seed=0)
print(f"{len(manifest.entries)} entries")

# %% [markdown]
# ## Decay times and spectra
#
# The T60 spread comes mostly from the material draws. The spectra are
# projected on their first two principal components.

# %%
report = analyze_diversity(manifest)
print(f"T60 from {report.t60.min():.3f} to {report.t60.max():.3f} s (ratio {report.t60_ratio:.1f})")
print(f"PCA variances {np.round(report.eigenvalues, 6)}")

# %%
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
ax1.hist(report.t60, bins=report.hist_edges)
ax1.set_xlabel("T60 (s)")
ax2.scatter(report.coords[:, 0], report.coords[:, 1], c=report.t60, s=12)
ax2.set_xlabel("PC 1")
ax2.set_ylabel("PC 2")
fig.tight_layout()
fig.savefig(f"{out}/diversity.png", dpi=100)
print(f"figure saved to {out}/diversity.png")
