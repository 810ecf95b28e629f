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
# # Inference in a furnished room
#
# A 10 x 8 x 3 m room cluttered with 83 boxes has about a thousand
# triangles. The boxes hang at random heights and block many image paths,
# so visibility matters here. Both positions sit near the ceiling.
# We run the full pipeline (geometry, model, synthesis) and time each stage.

# %%
import numpy as np
import torch

from auralkit import PositionPair, compute_lor, make_furnished_room
from auralkit.bench import bench
from auralkit.neural import ModelConfig, SRIRModel

room = make_furnished_room()
pair = PositionPair([5.0, 4.0, 2.7], [2.0, 6.0, 2.6])
print(f"{len(room.faces)} faces")

# %%
h_lor, arrivals = compute_lor(room, pair, return_arrivals=True)
print(f"{len(arrivals)} visible arrivals up to order 2, orders {np.bincount(arrivals.orders, minlength=3)}")

# %% [markdown]
# With this much clutter the straight line between the two positions
# crosses a box, so there is no order-0 arrival. The few reflections that
# get through carry all the low-order energy.

# %% [markdown]
# ## Stage timings
#
# The model is untrained; only its cost matters here. The reference
# column lists published timings from other hardware and a full-size
# network, so read it as orientation only.

# %%
torch.manual_seed(0)
model = SRIRModel(ModelConfig())
report = bench(room, pair, model, runs=10, warmup=1)
print(report.format())
