# %% [markdown]
# # The similarity-weighted lattice on toy inputs
#
# Small enough to check by hand: renormalized transition rows, the forward
# likelihood against brute force, anchor pruning, and how far the two
# backward decompositions and the two gradients drift apart once frame
# similarities exceed theta.

# %%
import math

import numpy as np

from ectc import lattice, oracle
from ectc.lattice import INFINITE, SimilarityTrack

np.set_printoptions(precision=4, suppress=True)

# %% [markdown]
# ## One transition row
# The previous label is boosted by max(theta, s); everything else by theta.

# %%
z = np.array([0.5, 0.5])
for s in (0.3, 0.8, INFINITE):
    print(f"s={s}: q = {lattice.step_weights(z, 0, s, theta=0.5)}")

# %% [markdown]
# ## Forward pass vs enumeration
# Three frames, ordering [a, b], uniform posteriors: two paths of 0.125 each.

# %%
z = np.full((3, 2), 0.5)
lat = lattice.forward(z, [0, 1])
print("forward  P =", math.exp(lat.log_likelihood))
print("oracle   P =", math.exp(oracle.brute_likelihood(z, [0, 1])))
print("alpha (log) =\n", lat.alpha)

# %% [markdown]
# ## Anchors prune the lattice
# Labelling frame 2 as a and frame 4 as b (1-based) leaves two of the five
# ways to place the single a -> b boundary in six frames.

# %%
ann = [(1, 0), (3, 1)]
print("free paths    :", len(oracle.enumerate_paths([0, 1], 6)))
print("anchored paths:\n", oracle.enumerate_paths([0, 1], 6, ann).paths)

# %% [markdown]
# ## Where the reverse decomposition breaks
# With similarities above theta, sum_s alpha*beta/z only reproduces P at
# every frame if beta comes from the forward-normalized chain.

# %%
rng = np.random.default_rng(0)
z = lattice.softmax(rng.normal(size=(7, 3)))
sim = SimilarityTrack(rng.uniform(0.5, 1.0, size=6), theta=0.5)
ell = [2, 0, 1]
for decomposition in ("reverse", "chain"):
    lat = lattice.lattice(z, ell, sim, decomposition=decomposition)
    ratio = np.exp(lattice.frame_log_likelihoods(lat, z, ell) - lat.log_likelihood)
    print(f"{decomposition:>7}: per-frame P / forward P = {ratio}")

# %% [markdown]
# ## Gradient of the renormalized loss
# z - gamma is the gradient only when no similarity exceeds theta.  The
# exact derivative replaces z_t with its expectation under the posterior
# of the previous label.

# %%
y = rng.normal(size=(7, 3))
fd = oracle.fd_gradient(lambda v: lattice.ectc_loss(lattice.softmax(v), ell, sim), y)
for kind in ("target", "exact"):
    _, g = lattice.ectc_loss_grad(lattice.softmax(y), ell, sim, gradient=kind, decomposition="chain")
    print(f"{kind:>5}: max |grad - finite differences| = {np.abs(g - fd).max():.2e}")
