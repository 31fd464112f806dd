"""
A small network
===============

Four nodes share one ledger. Users register, an artist uploads a tone,
a fan pays for it, and a second upload of the same audio is refused.
"""

# %%
from tunechain import Credential, SimNetwork
from tunechain import contract as ct
from tunechain.errors import CopyrightViolation
from tunechain.fingerprint import synth_tone, write_wav

# %%
net = SimNetwork(n_nodes=4, seed=42)
artist = net.register(Credential("artist@example.org", "hunter2"))
fan = net.register(Credential("fan@example.org", "correct horse"))
net.consensus_round()
print("artist", artist.hex())
print("login ok:", net.authenticate(Credential("artist@example.org", "hunter2")).granted)
print("wrong password:", net.authenticate(Credential("artist@example.org", "nope")).granted)

# %%
tone = synth_tone(523.25, 2.0)
wav = write_wav(tone.samples, tone.sample_rate)
root = net.store_music(artist, wav, ct.Meta("Artist", "High C", net.clock))
net.consensus_round()
print("stored", root.hex()[:16], "on", [n.hex()[:8] for n in net.locate_chunk(net.manifest(root).chunk_hashes[0])[:3]])

# %% [markdown]
# Paying grants access and bumps the download counter on every replica.

# %%
assert net.download_file(fan, root) == wav
net.consensus_round()
for row in net.revenue_report():
    print(row.author, row.title, row.downloads, ct.format_cents(row.revenue_cents))
print("replicas agree:", len(set(net.replica_digests())) == 1)

# %% [markdown]
# The fan tries to upload the same audio as their own.

# %%
try:
    net.store_music(fan, wav, ct.Meta("Fan", "Totally Mine", net.clock))
except CopyrightViolation as exc:
    print("refused; side block", exc.side_block.id)
print("violation types", [v.vt for v in net.side_chain.violations()])
