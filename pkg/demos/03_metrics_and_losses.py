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
# # Comparing impulse responses
#
# Evaluation metrics run on numpy arrays; training losses are their
# differentiable torch counterparts. We compare two positions in the same
# room and look at what each number picks up.

# %%
import torch

from auralkit import PositionPair, make_shoebox, simulate_reference
from auralkit.losses import loss_ic, loss_total
from auralkit.metrics import SPECTRAL, TEMPORAL, drr_db, energy_db, metric_report, t60_schroeder

room = make_shoebox((6.0, 4.5, 3.0), reflectivity=0.9)
near = simulate_reference(room, PositionPair([2.0, 2.0, 1.5], [2.8, 2.4, 1.5]), 18)
far = simulate_reference(room, PositionPair([2.0, 2.0, 1.5], [5.2, 3.8, 1.2]), 18)

# %% [markdown]
# The decay time is a property of the room, so it barely moves. The
# direct-to-reverberant ratio drops a lot when the listener walks away.

# %%
for name, ir in (("near", near), ("far", far)):
    print(f"{name}: T60 {t60_schroeder(ir):.3f} s  energy {energy_db(ir):6.2f} dB  DRR {drr_db(ir):6.2f} dB")

# %%
print({k: None if v is None else round(v, 3) for k, v in metric_report(far, near).items()})

# %% [markdown]
# ## Losses
#
# The inter-channel loss compares differences between neighbouring
# capsules, so a constant offset added to all four channels costs nothing
# (up to rounding).

# %%
n = max(len(near), len(far))
a = torch.as_tensor(near.padded(n).channels)
b = torch.as_tensor(far.padded(n).channels)
print(f"loss_ic(near, far)       = {loss_ic(a, b).item():.4e}")
print(f"loss_ic(near + 0.25, near) = {loss_ic(a + 0.25, a).item():.1e}")
total, terms = loss_total(a.requires_grad_(), b, cfg1=SPECTRAL, cfg2=TEMPORAL)
total.backward()
print({k: round(v.item(), 5) for k, v in terms.items()})
print(f"loss_total {total.item():.3f}, gradient norm {a.grad.norm().item():.3f}")
