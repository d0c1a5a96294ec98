"""Seeding and hashing helpers shared by every pipeline stage."""

import hashlib
import random
from typing import Iterable, Mapping
import numpy as np
import torch


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def derive_seed(*parts: object) -> int:
    """Stable 63-bit seed from any sequence of parts (e.g. seed, image_id, epoch)."""
    digest = hashlib.sha256("\x1f".join(str(part) for part in parts).encode("utf-8"))
    return int.from_bytes(digest.digest()[:8], "big") >> 1


def state_hash(tensors: Mapping[str, torch.Tensor] | Iterable[tuple[str, torch.Tensor]]) -> str:
    """SHA-256 over names, dtypes, shapes and raw bytes of an ordered tensor mapping."""
    items = tensors.items() if isinstance(tensors, Mapping) else tensors
    digest = hashlib.sha256()
    for name, tensor in items:
        data = tensor.detach().cpu().contiguous()
        digest.update(name.encode("utf-8"))
        digest.update(str(data.dtype).encode("utf-8"))
        digest.update(str(tuple(data.shape)).encode("utf-8"))
        flat = data.reshape(-1).view(torch.uint8) if data.numel() else None
        digest.update(flat.numpy().tobytes() if flat is not None else b"")
    return digest.hexdigest()

