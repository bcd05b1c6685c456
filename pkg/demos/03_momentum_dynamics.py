"""Walkthrough: how the momentum branch trails the query branch.

The momentum parameters follow an exponential moving average of the query
parameters.  With the query branch frozen, the parameter gap contracts by
exactly the momentum coefficient per update; during training the branch
provides slowly-moving, consistent keys.
"""

import torch

from patchmoco.config import ModelConfig
from patchmoco.model import build_bundle, init_momentum, momentum_update

torch.manual_seed(0)
bundle = build_bundle(ModelConfig(width=8))

# Right after initialization the two branches coincide exactly.
momentum = init_momentum(bundle, alpha=0.99)
gap = max(float((pm - pq).abs().max())
          for pm, pq in zip(momentum.parameters(), bundle.parameters()))
print(f"gap right after init: {gap}")

# Perturb the momentum branch, freeze the query branch, and watch the gap
# contract geometrically (alpha = 0.75 here to make it visible).
momentum = init_momentum(bundle, alpha=0.75)
with torch.no_grad():
    for p in momentum.parameters():
        p.add_(torch.randn_like(p))

print("\nupdate   max |theta_m - theta_q|   ratio")
previous = None
for step in range(8):
    gap = max(float((pm - pq).abs().max())
              for pm, pq in zip(momentum.parameters(), bundle.parameters()))
    ratio = "" if previous is None else f"{gap / previous:.4f}"
    print(f"{step:6d}   {gap:22.6f}   {ratio}")
    previous = gap
    momentum_update(momentum, bundle)

# The branch never receives gradients: a backward pass through a joint loss
# leaves every momentum parameter untouched.
v = torch.randn(2, 3, 64, 64)
before = [p.clone() for p in momentum.parameters()]
q = bundle.embed_infomin(v)
k = momentum.embed_infomin(v)
(q * k).sum().backward()
unchanged = all(torch.equal(p, b)
                for p, b in zip(momentum.parameters(), before))
print(f"\nmomentum parameters bit-identical across backward: {unchanged}")
print("momentum gradients:", [p.grad for p in momentum.parameters()][:1])
