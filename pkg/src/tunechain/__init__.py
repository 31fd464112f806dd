"""Simulated blockchain-backed music sharing with copyright enforcement."""
from .chain import (BlockHeader, Chain, ParentBlock, SideBlock, SideChain, Validator, ViolationTx,
                    append_block, block_hash, canonical_header_bytes, record_violation,
                    select_validator, validate_chain, validate_log)
from .chunkstore import (ChunkStore, FileManifest, build_manifest, chunk_file, chunk_hash,
                         get_chunk, merkle_root, put_chunk, reassemble)
from .contract import (ContractState, FileData, Meta, TxContext, add_block, chk_access,
                       grant_access, music_owner, pay_and_download, remove_access, revenue,
                       revenue_report)
from .errors import *  # noqa: F401,F403
from .fingerprint import (PcmAudio, SpectralFrame, dft_magnitudes, extract_subscripts,
                          music_fingerprint, read_wav, synth_tone, write_wav)
from .identity import Credential, authenticate, register
from .netsim import SimNetwork, SimNode, locate_chunk, xor_distance

__version__ = "0.1.0"
