#!/usr/bin/env python3
"""Generate the golden subset for seeded corpus sampling.

Independent oracle for the pinned sampling procedure, built on the raw
ChaCha20 keystream from the `cryptography` package rather than any Rust
code. The documented procedure:

  1. key      = seed as little-endian u64 in bytes 0..8, bytes 8..32 zero
  2. stream   = ChaCha20(key, counter=0, nonce=0); u32 words read LE in
                keystream order; next_u64 = w[2k] | w[2k+1] << 32
  3. ids sorted ascending (bytewise), Fisher-Yates from the top:
       for i in (len-1 .. 1): j = bounded(i + 1); swap(ids[i], ids[j])
     bounded(range) draws next_u64 with rejection:
       zone = 2^64 - 1 - ((2^64 - 1) % range + 1) % range
       accept v <= zone, return v % range
  4. take the first n shuffled ids, then sort the selection ascending

Output frozen into crates/cli/tests/data/sample_seed1.json.
"""

import json
import struct
import sys

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms

MASK = (1 << 64) - 1


class ChaChaStream:
    def __init__(self, seed):
        key = struct.pack("<Q", seed) + b"\x00" * 24
        nonce = b"\x00" * 16  # 64-bit block counter || 64-bit stream id
        cipher = Cipher(algorithms.ChaCha20(key, nonce), mode=None)
        self.enc = cipher.encryptor()
        self.buf = []

    def next_u64(self):
        if len(self.buf) < 2:
            block = self.enc.update(b"\x00" * 256)
            self.buf.extend(struct.unpack("<64I", block))
        lo = self.buf.pop(0)
        hi = self.buf.pop(0)
        return lo | (hi << 32)

    def bounded(self, range_):
        zone = MASK - ((MASK % range_) + 1) % range_
        while True:
            v = self.next_u64()
            if v <= zone:
                return v % range_


def sample_ids(ids, n, seed):
    ids = sorted(ids)
    rng = ChaChaStream(seed)
    for i in range(len(ids) - 1, 0, -1):
        j = rng.bounded(i + 1)
        ids[i], ids[j] = ids[j], ids[i]
    return sorted(ids[:n])


def main():
    pool = [f"aime-p{i:02d}" for i in range(1, 31)]
    selected = sample_ids(pool, 20, 1)
    json.dump({"pool_size": 30, "n": 20, "seed": 1, "ids": selected}, sys.stdout, indent=1)
    sys.stdout.write("\n")
    print(f"selected {len(selected)} of {len(pool)}", file=sys.stderr)


if __name__ == "__main__":
    main()
