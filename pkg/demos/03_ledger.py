"""
Blocks, tampering and validator election
========================================

Parent blocks carry contract transactions. Each header commits to the
previous block, so editing any byte shows up at that block or the next.
"""

# %%
import random
from collections import Counter

from tunechain import contract as ct
from tunechain.chain import Chain, Validator, append_block, select_validator, validate_log

# %%
chain = Chain()
validator = bytes(20 * [7])
for height in range(5):
    txs = [ct.make_tx(ct.PAY_AND_DOWNLOAD, bytes(20 * [1]), bytes(32 * [2]), height, cents=137)]
    append_block(chain, txs, validator, 1582156800 + height)
lines = [block.to_line() for block in chain]
print("valid:", bool(validate_log(lines)), "tip", chain.tip_hash.hex()[:16])

# %% [markdown]
# Flip one byte in block 2 and see where validation fails.

# %%
line = bytearray(lines[2])
line[len(line) // 2] ^= 0x01
lines[2] = bytes(line)
result = validate_log(lines)
print("invalid at height", result.height, "-", result.reason)

# %% [markdown]
# Validators win blocks in proportion to stake.

# %%
pool = [Validator(b"a" * 20, 1), Validator(b"b" * 20, 1), Validator(b"c" * 20, 2)]
rng = random.Random(1)
wins = Counter(select_validator(pool, rng) for _ in range(20000))
for v in pool:
    print(v.node_id[:1], v.stake, round(wins[v.node_id] / 20000, 3))
