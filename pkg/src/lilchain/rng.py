"""Counter-based random streams keyed by ``(seed, purpose, index)``.

Each stream is a Philox generator whose key is derived from the triple, so
any replica block can be regenerated without touching the others. This is
what makes ensemble results independent of the worker count.
"""
import zlib

import numpy as np

#: replicas per independently keyed stream; results depend on this constant
BLOCK = 4096


def purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    key = np.random.SeedSequence([int(seed), purpose_code(purpose), int(index)])
    return np.random.Generator(np.random.Philox(key=key.generate_state(2, dtype=np.uint64)))


def blocks(replicas: int, block: int = BLOCK):
    """Yield ``(index, start, stop)`` for fixed-size replica blocks."""
    for b, start in enumerate(range(0, replicas, block)):
        yield b, start, min(start + block, replicas)
