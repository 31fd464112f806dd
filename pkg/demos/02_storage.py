"""
Chunked storage
===============

Files are cut into 256 KiB chunks, each stored under its own SHA-256.
A manifest lists the chunks and names the file by their Merkle root.
"""

# %%
import os

from tunechain.chunkstore import CHUNK_SIZE, ChunkStore, merkle_root, reassemble, store_file
from tunechain.errors import IntegrityError

# %%
data = os.urandom(3 * CHUNK_SIZE + 1000)
store = ChunkStore()
manifest = store_file(store, data, author="Demo", title="Noise")
print("chunks:", len(manifest.chunk_hashes), "root:", manifest.root.hex())
assert merkle_root(manifest.chunk_hashes) == manifest.root

# %% [markdown]
# Reassembly fetches chunks by hash and checks every one.

# %%
assert reassemble(manifest, store.get_chunk) == data

# %% [markdown]
# Corrupt a chunk and reassembly stops at that index.

# %%
store._overwrite(manifest.chunk_hashes[2], b"not the original bytes")
try:
    reassemble(manifest, store.get_chunk)
except IntegrityError as exc:
    print("caught:", exc, "at chunk", exc.index)
