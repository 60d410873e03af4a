from __future__ import annotations

import random

import torch


class ImagePool:
    """History of generated samples fed to the discriminators.

    Each stored entry is a tuple of per-image tensors (e.g. ``(image, mask)``)
    so that paired quantities are swapped together. Until the pool is full,
    inputs are stored and passed through. Afterwards each input is, with
    probability ``swap_prob``, exchanged for a uniformly chosen stored entry.
    A capacity of 0 or less disables the pool.
    """

    def __init__(self, capacity: int = 50, swap_prob: float = 0.5, seed: int = 0):
        self.capacity = capacity
        self.swap_prob = swap_prob
        self.stored: list[tuple[torch.Tensor, ...]] = []
        self.rng = random.Random(seed)
        self.swaps = 0
        self.queries = 0

    def __len__(self) -> int:
        return len(self.stored)

    def query(self, *batches: torch.Tensor) -> tuple[torch.Tensor, ...]:
        if not batches or batches[0].shape[0] == 0:
            raise ValueError("pool query needs a non-empty batch")
        n = batches[0].shape[0]
        if any(b.shape[0] != n for b in batches):
            raise ValueError("all tensors in a pool query must share the batch size")
        if self.capacity <= 0:
            return batches
        out: list[list[torch.Tensor]] = [[] for _ in batches]
        for i in range(n):
            item = tuple(b[i:i + 1].detach().clone() for b in batches)
            self.queries += 1
            if len(self.stored) < self.capacity:
                self.stored.append(item)
                chosen = item
            elif self.rng.random() < self.swap_prob:
                j = self.rng.randrange(self.capacity)
                chosen, self.stored[j] = self.stored[j], item
                self.swaps += 1
            else:
                chosen = item
            for slot, t in zip(out, chosen):
                slot.append(t)
        return tuple(torch.cat(slot, 0) for slot in out)

    def state_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "swap_prob": self.swap_prob,
            "stored": [tuple(t.clone() for t in item) for item in self.stored],
            "rng": self.rng.getstate(),
            "swaps": self.swaps,
            "queries": self.queries,
        }

    def load_state_dict(self, state: dict) -> None:
        self.capacity = state["capacity"]
        self.swap_prob = state["swap_prob"]
        self.stored = [tuple(item) for item in state["stored"]]
        self.rng.setstate(state["rng"])
        self.swaps = state["swaps"]
        self.queries = state["queries"]


def pool_query(pool: ImagePool, batch: torch.Tensor) -> torch.Tensor:
    return pool.query(batch)[0]
