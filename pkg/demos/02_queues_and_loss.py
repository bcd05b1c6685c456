"""Walkthrough: the negative queues and the four-term contrastive loss.

Shows the FIFO wraparound of the feature queue, the closed-form value the
loss takes at the uniform point, and how the four terms combine.
"""

import math

import torch
import torch.nn.functional as F

from patchmoco.loss import combined_loss, info_nce
from patchmoco.memory import new_queue

# A queue of capacity 8 over 4-d features, initialized with random unit rows.
queue = new_queue(capacity=8, seed=0, dim=4)
print("initial write_ptr:", queue.write_ptr)

batch = F.normalize(torch.arange(12.0).reshape(3, 4) + 1.0, dim=1)
queue.enqueue(batch)
print("after enqueue of 3 rows, write_ptr:", queue.write_ptr)
print("newest 3 rows equal the batch:", torch.equal(queue.newest(3), batch))

# Wraparound: capacity 8, pointer at 3, pushing 7 rows wraps past the end
# and evicts the oldest rows first.
wrap = F.normalize(torch.randn(7, 4, generator=torch.Generator().manual_seed(1)),
                   dim=1)
queue.enqueue(wrap)
print("after wraparound enqueue, write_ptr:", queue.write_ptr)

# The loss at the uniform point: if the positive and every negative have
# similarity zero with the query, all K+1 softmax entries tie and the term
# is exactly log(K + 1) regardless of temperature.
dim, K = 8, 16
q = torch.zeros(4, dim); q[:, 0] = 1.0
k_pos = torch.zeros(4, dim); k_pos[:, 1] = 1.0
negatives = torch.zeros(K, dim); negatives[:, 2] = 1.0
value = float(info_nce(q, k_pos, negatives, temperature=0.07))
print(f"\nuniform-point loss: {value:.6f}  vs log(K+1) = {math.log(K+1):.6f}")

# A perfectly matched positive against orthogonal negatives gives the
# closed form log(1 + K * exp(-1/t)); at t = 0.07 the positive dominates.
q = torch.zeros(1, dim, dtype=torch.float64); q[:, 0] = 1.0
negatives = torch.zeros(K, dim, dtype=torch.float64); negatives[:, 1] = 1.0
value = float(info_nce(q, q.clone(), negatives, temperature=0.07))
closed = math.log(1 + K * math.exp(-1 / 0.07))
print(f"matched-positive loss: {value:.10f}  vs closed form {closed:.10f}")

# The full objective crosses two queries with two queues (four terms).
queue1 = new_queue(capacity=K, seed=2, dim=dim)
queue2 = new_queue(capacity=K, seed=3, dim=dim)
g = torch.Generator().manual_seed(4)
q1 = F.normalize(torch.randn(4, dim, generator=g), dim=1)
q2 = F.normalize(torch.randn(4, dim, generator=g), dim=1)
k1 = F.normalize(torch.randn(4, dim, generator=g), dim=1)
k2 = F.normalize(torch.randn(4, dim, generator=g), dim=1)
terms = combined_loss(q1, q2, k1, k2, queue1, queue2, temperature=0.07)
print("\nfour-term objective:")
for name, value in terms.to_floats().items():
    print(f"  {name:5s} = {value:.4f}")
