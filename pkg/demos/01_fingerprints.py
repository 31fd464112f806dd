"""
Audio fingerprints
==================

A fingerprint is a hash of where the energy sits in each frame of audio,
so a louder copy of the same tone still collides with the original.
"""

# %%
import numpy as np

from tunechain.fingerprint import (BAND_EDGES, dft_magnitudes, extract_subscripts,
                                   fingerprint_wav, music_fingerprint, spectral_frames,
                                   synth_tone, write_wav)

# %% [markdown]
# Start with one second of A440 and look at the first frame's spectrum.
# The window is 4096 samples, so each bin is 44100 / 4096 Hz wide.

# %%
tone = synth_tone(440, 1.0)
frame = tone.samples[:4096].astype(float)
mags = dft_magnitudes(frame)
peak = int(np.argmax(mags))
print("peak bin", peak, "~", round(peak * 44100 / 4096, 1), "Hz")

# %% [markdown]
# Each of the 16 bands contributes the index of its loudest bin.
# The bands grow geometrically, so the low bands are a single bin wide.

# %%
print("band edges", BAND_EDGES)
print("subscripts", extract_subscripts(mags))
print("frames in one second:", len(spectral_frames(tone)))

# %% [markdown]
# Same tone at half the volume gives the same fingerprint. A different pitch does not.

# %%
loud = music_fingerprint(synth_tone(440, 1.0, amplitude=0.8))
quiet = music_fingerprint(synth_tone(440, 1.0, amplitude=0.4))
octave = music_fingerprint(synth_tone(880, 1.0))
print("440 loud  ", loud)
print("440 quiet ", quiet)
print("880       ", octave)
assert loud == quiet != octave

# %% [markdown]
# The same path works on WAV bytes, which is what the network sees.

# %%
wav = write_wav(tone.samples, tone.sample_rate)
print(len(wav), "bytes ->", fingerprint_wav(wav))
