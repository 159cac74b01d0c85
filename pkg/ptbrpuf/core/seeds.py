"""
Seed derivation

All randomness in the workbench descends from one master seed. Child seeds are
derived from a label path so that adding a new consumer never shifts the seeds
of existing ones.
"""

import hashlib

U64_MASK = (1 << 64) - 1


def derive_seed(master: int, *labels) -> int:
    """
    Derives a 64-bit unsigned seed from the master seed and a label path.

    derive_seed(7, "chip", 0) and derive_seed(7, "chip", 1) are independent,
    and the same arguments always give the same seed.
    """
    text = ":".join([str(int(master) & U64_MASK), *(str(label) for label in labels)])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")
