"""
Audio fingerprinting for exact-duplicate detection.

Audio is cut into 4096-sample frames with a hop of 2048, each frame is
Hann-windowed and Fourier-transformed, and the strongest bin of each of 16
log-spaced bands is kept as that frame's code. The fingerprint is the
SHA-256 of all frame codes, so two uploads match only when every band peak
of every frame agrees.

Only 16-bit PCM WAV (mono or stereo) is accepted.
"""
import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, MalformedFile, UnsupportedFormat

FRAME_SIZE = 4096
HOP_SIZE = 2048
N_BINS = FRAME_SIZE // 2 + 1
N_BANDS = 16
# bins quieter than this far below the frame peak count as silence; keeps
# band codes from being decided by 16-bit quantization noise
SPECTRAL_FLOOR_DB = 40.0

_WINDOW = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(FRAME_SIZE) / FRAME_SIZE)


def _band_edges():
    # geometric spacing over bins 1..2048; DC is excluded
    top = N_BINS
    edges = [1]
    for k in range(1, N_BANDS):
        edge = int(round(top ** (k / N_BANDS)))
        edges.append(max(edge, edges[-1] + 1))
    edges.append(top)
    return tuple(edges)


BAND_EDGES = _band_edges()
"""Band ``b`` covers bins ``BAND_EDGES[b] .. BAND_EDGES[b + 1] - 1``."""


@dataclass(frozen=True)
class PcmAudio:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1 or samples.size == 0:
            raise InvalidInput("audio must be a nonempty mono sample sequence")
        if np.issubdtype(samples.dtype, np.integer):
            if samples.min() < -32768 or samples.max() > 32767:
                raise InvalidInput("samples exceed the signed 16-bit range")
        else:
            raise InvalidInput("samples must be integers")
        if int(self.sample_rate) <= 0:
            raise InvalidInput("sample_rate must be positive")
        object.__setattr__(self, "samples", samples.astype(np.int16))
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class SpectralFrame:
    subscripts: tuple

    def __post_init__(self):
        subs = tuple(int(s) for s in self.subscripts)
        if len(subs) != N_BANDS:
            raise InvalidInput(f"expected {N_BANDS} subscripts, got {len(subs)}")
        for band, s in enumerate(subs):
            if not BAND_EDGES[band] <= s < BAND_EDGES[band + 1]:
                raise InvalidInput(f"subscript {s} lies outside band {band}")
        object.__setattr__(self, "subscripts", subs)

    def encode(self) -> bytes:
        """16 big-endian unsigned 16-bit integers."""
        return struct.pack(">16H", *self.subscripts)


def _magnitudes(frames: np.ndarray) -> np.ndarray:
    return np.abs(np.fft.rfft(frames * _WINDOW, axis=-1))


def dft_magnitudes(frame) -> np.ndarray:
    """Magnitudes at bins 0..2048 of the Hann-windowed 4096-sample frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (FRAME_SIZE,):
        raise InvalidInput(f"frame must hold exactly {FRAME_SIZE} samples, got shape {frame.shape}")
    return _magnitudes(frame[np.newaxis, :])[0]


def extract_subscripts(magnitudes) -> SpectralFrame:
    """Index of the largest magnitude in each band (ties go to the lowest bin)."""
    mags = np.asarray(magnitudes, dtype=np.float64)
    if mags.shape != (N_BINS,):
        raise InvalidInput(f"expected {N_BINS} magnitudes, got shape {mags.shape}")
    subs = []
    for band in range(N_BANDS):
        lo, hi = BAND_EDGES[band], BAND_EDGES[band + 1]
        # np.argmax returns the first maximum
        subs.append(lo + int(np.argmax(mags[lo:hi])))
    return SpectralFrame(tuple(subs))


def apply_spectral_floor(magnitudes, floor_db: float = SPECTRAL_FLOOR_DB) -> np.ndarray:
    """Zero every bin more than ``floor_db`` below the frame's peak (DC ignored)."""
    mags = np.array(magnitudes, dtype=np.float64)
    peak = mags[1:].max()
    mags[mags < peak * 10.0 ** (-floor_db / 20.0)] = 0.0
    return mags


def frame_signal(samples) -> np.ndarray:
    """Split samples into overlapping frames, zero-padding the last one."""
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    if n == 0:
        raise InvalidInput("cannot frame an empty signal")
    if n <= FRAME_SIZE:
        n_frames = 1
    else:
        n_frames = 1 + -(-(n - FRAME_SIZE) // HOP_SIZE)
    padded = np.zeros((n_frames - 1) * HOP_SIZE + FRAME_SIZE)
    padded[:n] = x
    idx = np.arange(FRAME_SIZE)[np.newaxis, :] + HOP_SIZE * np.arange(n_frames)[:, np.newaxis]
    return padded[idx]


def spectral_frames(audio: PcmAudio) -> list:
    mags = _magnitudes(frame_signal(audio.samples))
    return [extract_subscripts(apply_spectral_floor(row)) for row in mags]


def music_fingerprint(audio: PcmAudio) -> str:
    """Return the 64-char lowercase hex fingerprint of ``audio``."""
    if not isinstance(audio, PcmAudio):
        raise InvalidInput("music_fingerprint expects PcmAudio")
    digest = hashlib.sha256()
    for frame in spectral_frames(audio):
        digest.update(frame.encode())
    return digest.hexdigest()


def is_fingerprint(value) -> bool:
    return (isinstance(value, str) and len(value) == 64
            and all(c in "0123456789abcdef" for c in value))


# -- WAV container -----------------------------------------------------------

def read_wav(data: bytes) -> PcmAudio:
    """Parse a 16-bit PCM RIFF/WAVE file into mono audio.

    Stereo is downmixed by the per-sample channel mean, rounded toward zero.
    """
    data = bytes(data)
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnsupportedFormat("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    pcm = None
    while pos < len(data):
        if pos + 8 > len(data):
            raise MalformedFile("truncated chunk header")
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise MalformedFile(f"chunk {chunk_id!r} declares {size} bytes, {len(body)} present")
        if chunk_id == b"fmt ":
            if size < 16:
                raise MalformedFile("fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            pcm = body
            break
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise MalformedFile("missing fmt chunk")
    audio_format, channels, sample_rate, _, block_align, bits = fmt
    if audio_format != 1:
        raise UnsupportedFormat(f"compressed or non-PCM codec (format code {audio_format})")
    if bits != 16:
        raise UnsupportedFormat(f"only 16-bit samples are supported, got {bits}-bit")
    if channels not in (1, 2):
        raise UnsupportedFormat(f"only mono or stereo is supported, got {channels} channels")
    if block_align != 2 * channels:
        raise MalformedFile("block_align inconsistent with channel count")
    if pcm is None:
        raise MalformedFile("missing data chunk")
    if len(pcm) % block_align:
        raise MalformedFile("data chunk is not a whole number of sample frames")
    samples = np.frombuffer(pcm, dtype="<i2").astype(np.int32)
    if channels == 2:
        pairs = samples.reshape(-1, 2)
        samples = np.trunc(pairs.sum(axis=1) / 2.0).astype(np.int32)
    if samples.size == 0:
        raise InvalidInput("WAV file holds no samples")
    return PcmAudio(samples.astype(np.int16), sample_rate)


def write_wav(samples, sample_rate: int, channels: int = 1) -> bytes:
    """Encode int16 samples (interleaved if stereo) as a canonical PCM WAV."""
    pcm = np.asarray(samples, dtype="<i2").tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(pcm), b"WAVE",
        b"fmt ", 16, 1, channels, sample_rate, sample_rate * 2 * channels, 2 * channels, 16,
        b"data", len(pcm),
    )
    return header + pcm


def synth_tone(freq_hz: float, seconds: float, sample_rate: int = 44100,
               amplitude: float = 0.8) -> PcmAudio:
    """Quantized pure sine; handy for tests and demos."""
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    x = np.round(amplitude * 32767.0 * np.sin(2.0 * np.pi * freq_hz * t))
    return PcmAudio(x.astype(np.int16), sample_rate)


def fingerprint_wav(data: bytes) -> str:
    return music_fingerprint(read_wav(data))
