"""Bloom filter with double hashing over a single blake2b digest."""
import hashlib
import math

import numpy as np

from ..errors import ConfigError


def _key_bytes(key):
    if isinstance(key, bytes):
        return key
    if isinstance(key, (int, np.integer)):
        return int(key).to_bytes(16, "little", signed=True)
    return str(key).encode()


class BloomFilter:
    """``m`` bits, ``k`` probes at (h1 + i*h2) mod m."""

    def __init__(self, m=1024, k=7):
        if m < 1 or k < 1:
            raise ConfigError(f"bloom: need m >= 1 and k >= 1, got m={m}, k={k}")
        self.m = m
        self.k = k
        self.bits = np.zeros(m, dtype=bool)
        self.count = 0

    def indexes(self, key):
        digest = hashlib.blake2b(_key_bytes(key), digest_size=16).digest()
        h1 = int.from_bytes(digest[:8], "little")
        h2 = int.from_bytes(digest[8:], "little") | 1
        return [(h1 + i * h2) % self.m for i in range(self.k)]

    def add(self, key):
        self.bits[self.indexes(key)] = True
        self.count += 1

    def __contains__(self, key):
        return bool(self.bits[self.indexes(key)].all())

    def clear(self):
        self.bits[:] = False
        self.count = 0

    def expected_fp_rate(self, n=None):
        n = self.count if n is None else n
        return (1 - math.exp(-self.k * n / self.m)) ** self.k


def _filter_of(target):
    return target.bloom if hasattr(target, "bloom") else target


def bloom_insert(ap, address):
    _filter_of(ap).add(address)


def bloom_query(ap, address):
    return address in _filter_of(ap)
