"""
Top-k memory pools
==================

Memory items are unit vectors. Writing folds the most similar queries into
each item; reading rebuilds every query as a softmax mix of items.
"""

import torch

from stmae.memory import MemoryPool, cosine_similarity, read_weights, separation_loss, write, write_weights

torch.set_printoptions(precision=3, sci_mode=False)

# Write weights keep the k most similar queries and weight them by exp(s) - 1.
sim = torch.tensor([[0.9, 0.5, 0.1, -0.2]])
print("top-2 write weights:", write_weights(sim, k_top=2))

items = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
queries = torch.tensor([[1.0, 0.2], [0.9, -0.1], [0.1, 1.0]])
print("cosine similarity\n", cosine_similarity(items, queries))
print("updated items (unit norm)\n", write(items, queries, k_top=1))
print("read weights for a query equal to item 0:", read_weights(items, torch.tensor([[1.0, 0.0]])))

# The separation loss pulls each query to its nearest item and pushes it away
# from the second nearest. It is negative whenever queries sit on items.
print("separation loss:", separation_loss(items, queries).item())

# MemoryPool wraps this for feature maps (B, C, H, W). Every spatial position
# is a query; writes are only allowed in training mode.
pool = MemoryPool(num_items=8, dim=16, k_top=4, seed=0)
feats = torch.randn(2, 16, 8, 8)
read_back = pool.read(feats)
print("read shape", tuple(read_back.shape))
pool.train()
before = pool.items.clone()
pool.write(feats)
print("items moved by", (pool.items - before).norm().item())
pool.eval()
try:
    pool.write(feats)
except RuntimeError as err:
    print("eval-mode write refused:", err)
