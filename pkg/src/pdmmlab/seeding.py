"""Named, splittable random streams derived from one master seed.

A stream is identified by a role label plus integer indices, so adding
runs or roles never shifts the numbers drawn by existing ones.
"""

import zlib

import numpy as np


def role_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def derive_rng(master: int, label: str, *index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(master), spawn_key=(role_key(label),) + tuple(int(i) for i in index))
    return np.random.default_rng(seq)


def derive_seed(master: int, label: str, *index: int) -> int:
    return int(derive_rng(master, label, *index).integers(0, 2**63 - 1))
