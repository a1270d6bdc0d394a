"""Spatial / temporal memory pools.

A pool is an ``(N, C)`` matrix of unit-norm items. Queries are the ``N_hat``
spatial positions of an encoder feature map, each a C-vector.

* write: each item absorbs a convex combination of its ``k_top`` most similar
  queries, then is re-normalised. All items update from the same snapshot.
* read: each query is rebuilt as a softmax(cosine)-weighted sum of items.
* separation loss: pulls each query to its nearest item and away from the
  second nearest.
"""

from __future__ import annotations

import logging
import warnings

import torch
import torch.nn as nn
import torch.nn.functional as F

logger = logging.getLogger(__name__)

EPS = 1e-8


def cosine_similarity(items: torch.Tensor, queries: torch.Tensor) -> torch.Tensor:
    """``(N, C) x (M, C) -> (N, M)``; rows with norm <= 1e-8 give similarity 0."""
    ni = items.norm(dim=1, keepdim=True)
    nq = queries.norm(dim=1, keepdim=True)
    a = torch.where(ni > EPS, items / ni.clamp_min(EPS), torch.zeros_like(items))
    b = torch.where(nq > EPS, queries / nq.clamp_min(EPS), torch.zeros_like(queries))
    return (a @ b.T).clamp(-1.0, 1.0)


def effective_k(k_top: int | None, num_queries: int) -> int:
    if k_top is None:
        return num_queries
    if k_top < 1:
        raise ValueError("k_top must be >= 1")
    if k_top > num_queries:
        warnings.warn(f"k_top={k_top} exceeds {num_queries} queries; clamped", stacklevel=3)
        return num_queries
    return k_top


def write_weights(sim: torch.Tensor, k_top: int | None) -> torch.Tensor:
    """Top-k write weights, ``(N, M)``.

    Only the k largest similarities per item survive. Each survivor gets
    ``exp(s) - 1``, negatives are clamped to zero, and the row is normalised
    to sum to one. A row with no positive survivor is all zeros.
    """
    k = effective_k(k_top, sim.shape[1])
    vals, idx = torch.topk(sim, k, dim=1)
    num = torch.expm1(vals).clamp_min(0.0)
    den = num.sum(dim=1, keepdim=True)
    num = torch.where(den > 0, num / den.clamp_min(torch.finfo(num.dtype).tiny), torch.zeros_like(num))
    return torch.zeros_like(sim).scatter(1, idx, num)


def write(items: torch.Tensor, queries: torch.Tensor, k_top: int | None) -> torch.Tensor:
    """Return the updated ``(N, C)`` item matrix."""
    w = write_weights(cosine_similarity(items, queries), k_top)
    return F.normalize(items + w @ queries, dim=1, eps=EPS)


def read_weights(items: torch.Tensor, queries: torch.Tensor) -> torch.Tensor:
    """``(M, N)`` softmax over items of each query's cosine similarity."""
    return torch.softmax(cosine_similarity(items, queries).T, dim=1)


def read(items: torch.Tensor, queries: torch.Tensor) -> torch.Tensor:
    return read_weights(items, queries) @ items


def nearest_two(items: torch.Tensor, queries: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Indices of the nearest and second-nearest item per query (ties -> lower index)."""
    with torch.no_grad():
        d = ((queries[:, None, :] - items[None, :, :]) ** 2).sum(-1)
        order = torch.sort(d, dim=1, stable=True).indices
    return order[:, 0], order[:, 1]


def separation_loss(items: torch.Tensor, queries: torch.Tensor) -> torch.Tensor:
    """Sum over queries of ``|q - m1|^2 - |q - m2|^2``; may be negative."""
    if items.shape[0] < 2:
        raise ValueError("separation loss needs at least two memory items")
    i1, i2 = nearest_two(items, queries)
    d1 = ((queries - items[i1]) ** 2).sum(-1)
    d2 = ((queries - items[i2]) ** 2).sum(-1)
    return (d1 - d2).sum()


def flatten_queries(features: torch.Tensor) -> torch.Tensor:
    """``(B, C, H, W) -> (B*H*W, C)``."""
    return features.movedim(1, -1).reshape(-1, features.shape[1])


def unflatten_queries(q: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    B, C, H, W = like.shape
    return q.reshape(B, H, W, C).movedim(-1, 1)


class MemoryPool(nn.Module):
    """N unit-norm items of dimension C, updated only by :meth:`write`."""

    def __init__(self, num_items: int = 32, dim: int = 128, k_top: int | None = 8, role: str = "spatial", seed: int = 0):
        super().__init__()
        if num_items < 2:
            raise ValueError("a memory pool needs at least two items")
        self.k_top = k_top
        self.role = role
        g = torch.Generator().manual_seed(seed)
        init = torch.randn(num_items, dim, generator=g)
        self.register_buffer("items", F.normalize(init, dim=1))

    @property
    def num_items(self) -> int:
        return self.items.shape[0]

    def read(self, features: torch.Tensor) -> torch.Tensor:
        """Reconstruct a ``(B, C, H, W)`` feature map from memory."""
        return unflatten_queries(read(self.items, flatten_queries(features)), features)

    def separation_loss(self, features: torch.Tensor) -> torch.Tensor:
        """Separation loss summed over the queries of each clip, averaged over the batch."""
        return separation_loss(self.items, flatten_queries(features)) / features.shape[0]

    @torch.no_grad()
    def write(self, features: torch.Tensor) -> None:
        if not self.training:
            raise RuntimeError("memory writes are only allowed in training mode")
        self.items.copy_(write(self.items, flatten_queries(features.detach()), self.k_top))

    def extra_repr(self) -> str:
        return f"role={self.role}, N={self.items.shape[0]}, C={self.items.shape[1]}, k_top={self.k_top}"
