"""Weight-steganography attack lab.

Three embedders hide a byte payload inside a model archive so the
disruption passes have something concrete to break:

* ``lsb``  — packs payload bits into the low mantissa bits of selected
  parameters (exponent untouched, so values barely move),
* ``sign`` — stores one bit per selected parameter in its sign,
* ``ss``   — additive spread spectrum: each coded bit rides a pseudorandom
  +/-1 chip sequence across the whole host at small amplitude gamma.

Payloads are arbitrary caller-supplied bytes; this module only moves bits
around. Extraction is the exact mirror of embedding: same seed, same
position/chip derivation, so any parameter displacement between the two
shows up as bit errors.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .archive import ModelArchive
from .errors import CapacityError
from .rng import SeededRng, derive_seed, words_at
from .tensor import Tensor

# ---------------------------------------------------------------- bits

def bytes_to_bits(data: bytes) -> np.ndarray:
    """Byte string -> uint8 bit array, most significant bit first."""
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def bits_to_bytes(bits: np.ndarray) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 8:
        raise ValueError("bit count must be a multiple of 8")
    return np.packbits(bits).tobytes()


# ---------------------------------------------------------------- ecc

@dataclass(frozen=True)
class EccScheme:
    """Error-correcting code wrapper: none, repetition:r, or hamming74.

    ``delta`` is the per-block fraction of coded-bit errors the decoder is
    guaranteed to correct — the quantity the analysis bounds consume.
    """

    name: str
    r: int = 1

    def __post_init__(self):
        if self.name not in ("none", "repetition", "hamming74"):
            raise ValueError(f"unknown ecc scheme {self.name!r}")
        if self.name == "repetition":
            if self.r < 1 or self.r % 2 == 0:
                raise ValueError("repetition factor must be odd and >= 1")
        elif self.r != 1:
            raise ValueError(f"{self.name} takes no repetition factor")

    @property
    def spec(self) -> str:
        return f"repetition:{self.r}" if self.name == "repetition" else self.name

    @property
    def delta(self) -> float:
        if self.name == "repetition":
            return (self.r // 2) / self.r
        if self.name == "hamming74":
            return 1.0 / 7.0
        return 0.0

    def coded_len(self, n_bits: int) -> int:
        if self.name == "repetition":
            return n_bits * self.r
        if self.name == "hamming74":
            return -(-n_bits // 4) * 7
        return n_bits

    def encode(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.uint8)
        if self.name == "none":
            return bits.copy()
        if self.name == "repetition":
            return np.repeat(bits, self.r)
        pad = (-bits.size) % 4
        if pad:
            bits = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
        d = bits.reshape(-1, 4)
        p0 = d[:, 0] ^ d[:, 1] ^ d[:, 2]
        p1 = d[:, 1] ^ d[:, 2] ^ d[:, 3]
        p2 = d[:, 0] ^ d[:, 1] ^ d[:, 3]
        return np.column_stack([d, p0, p1, p2]).reshape(-1).astype(np.uint8)

    def decode(self, coded: np.ndarray) -> np.ndarray:
        coded = np.asarray(coded, dtype=np.uint8)
        if self.name == "none":
            return coded.copy()
        if self.name == "repetition":
            if coded.size % self.r:
                raise ValueError("coded length not a repetition multiple")
            votes = coded.reshape(-1, self.r).sum(axis=1)
            return (votes > self.r // 2).astype(np.uint8)
        if coded.size % 7:
            raise ValueError("coded length not a multiple of 7")
        blocks = coded.reshape(-1, 7).copy()
        d = blocks[:, :4]
        s0 = blocks[:, 4] ^ d[:, 0] ^ d[:, 1] ^ d[:, 2]
        s1 = blocks[:, 5] ^ d[:, 1] ^ d[:, 2] ^ d[:, 3]
        s2 = blocks[:, 6] ^ d[:, 0] ^ d[:, 1] ^ d[:, 3]
        syndrome = (s0 << 2) | (s1 << 1) | s2
        # syndrome value -> flipped position (data bits only matter)
        flip_pos = {0b101: 0, 0b111: 1, 0b110: 2, 0b011: 3}
        for syn, pos in flip_pos.items():
            hit = syndrome == syn
            d[hit, pos] ^= 1
        return d.reshape(-1).astype(np.uint8)


def parse_ecc(spec: str) -> EccScheme:
    spec = spec.strip().lower()
    if spec == "none":
        return EccScheme("none")
    if spec == "hamming74":
        return EccScheme("hamming74")
    if spec.startswith("repetition:"):
        try:
            r = int(spec.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad repetition factor in {spec!r}") from None
        return EccScheme("repetition", r)
    raise ValueError(f"unknown ecc spec {spec!r}")


# ------------------------------------------------------- host indexing

def eligible_names(archive: ModelArchive, min_ndim: int = 1) -> tuple[str, ...]:
    """Names of tensors an embedder may write to, in sorted order."""
    return tuple(
        sorted(n for n, t in archive.tensors.items() if t.data.ndim >= min_ndim)
    )


def host_size(archive: ModelArchive, names) -> int:
    return sum(archive.tensors[n].size for n in names)


def host_vector(archive: ModelArchive, names) -> np.ndarray:
    """Flattened float32 view of the eligible tensors, concatenated in order."""
    return np.concatenate([archive.tensors[n].f32().ravel() for n in names])


def scatter_host(archive: ModelArchive, names, vec: np.ndarray) -> ModelArchive:
    """Inverse of host_vector: write the flat values back, keeping dtypes."""
    updates = {}
    at = 0
    for n in names:
        t = archive.tensors[n]
        chunk = vec[at : at + t.size].reshape(t.shape)
        updates[n] = Tensor(np.ascontiguousarray(chunk.astype(t.dtype)))
        at += t.size
    if at != vec.size:
        raise ValueError("host vector length mismatch")
    return archive.replace(updates)


def sample_positions(total: int, count: int, seed: int) -> np.ndarray:
    """`count` distinct positions in [0, total), uniform, in draw order.

    Partial Fisher-Yates over a virtual identity array; only displaced
    entries are materialised, so sampling stays O(count) in memory.
    """
    if count > total:
        raise CapacityError(f"need {count} positions but host has only {total}")
    rng = SeededRng(seed)
    swaps: dict[int, int] = {}
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        j = i + rng.bounded(total - i)
        out[i] = swaps.get(j, j)
        swaps[j] = swaps.get(i, i)
    return out


def _locate(archive: ModelArchive, names, positions: np.ndarray):
    """Split global host positions into per-tensor (name, local_offsets, slot_idx)."""
    sizes = np.array([archive.tensors[n].size for n in names], dtype=np.int64)
    bounds = np.cumsum(sizes)
    owner = np.searchsorted(bounds, positions, side="right")
    local = positions - (bounds[owner] - sizes[owner])
    groups = []
    for ti, name in enumerate(names):
        mask = owner == ti
        if mask.any():
            groups.append((name, local[mask], np.flatnonzero(mask)))
    return groups


_UINT_FOR = {np.dtype(np.float32): np.uint32, np.dtype(np.float16): np.uint16}


# ---------------------------------------------------------------- lsb

def lsb_embed(
    archive: ModelArchive,
    payload: bytes,
    *,
    bits_per_param: int,
    seed: int,
    ecc: EccScheme = EccScheme("none"),
) -> ModelArchive:
    """Hide payload bits in the low mantissa bits of sampled parameters."""
    if not 1 <= bits_per_param <= 8:
        raise ValueError("bits_per_param must be in 1..8")
    names = eligible_names(archive)
    total = host_size(archive, names)
    coded = ecc.encode(bytes_to_bits(payload))
    slots = -(-coded.size // bits_per_param)
    positions = sample_positions(total, slots, derive_seed(seed, "lsb/positions"))
    padded = np.zeros(slots * bits_per_param, dtype=np.uint8)
    padded[: coded.size] = coded
    chunks = padded.reshape(slots, bits_per_param)
    weights = 1 << np.arange(bits_per_param - 1, -1, -1, dtype=np.uint32)
    values = (chunks.astype(np.uint32) * weights).sum(axis=1)

    updates = {}
    for name, local, slot_idx in _locate(archive, names, positions):
        t = archive.tensors[name]
        raw = t.data.copy().view(_UINT_FOR[t.data.dtype]).ravel()
        mask = raw.dtype.type((1 << bits_per_param) - 1)
        raw[local] = (raw[local] & ~mask) | values[slot_idx].astype(raw.dtype)
        updates[name] = Tensor(raw.view(t.data.dtype).reshape(t.shape))
    return archive.replace(updates)


def lsb_extract(
    archive: ModelArchive,
    payload_len: int,
    *,
    bits_per_param: int,
    seed: int,
    ecc: EccScheme = EccScheme("none"),
) -> bytes:
    """Mirror of lsb_embed; payload_len is the expected byte count."""
    names = eligible_names(archive)
    total = host_size(archive, names)
    coded_len = ecc.coded_len(payload_len * 8)
    slots = -(-coded_len // bits_per_param)
    positions = sample_positions(total, slots, derive_seed(seed, "lsb/positions"))
    values = np.zeros(slots, dtype=np.uint32)
    for name, local, slot_idx in _locate(archive, names, positions):
        t = archive.tensors[name]
        raw = t.data.view(_UINT_FOR[t.data.dtype]).ravel()
        mask = raw.dtype.type((1 << bits_per_param) - 1)
        values[slot_idx] = (raw[local] & mask).astype(np.uint32)
    shifts = np.arange(bits_per_param - 1, -1, -1, dtype=np.uint32)
    bits = ((values[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)
    decoded = ecc.decode(bits[:coded_len])
    return bits_to_bytes(decoded[: payload_len * 8])


# --------------------------------------------------------------- sign

def sign_embed(
    archive: ModelArchive,
    payload: bytes,
    *,
    seed: int,
    ecc: EccScheme = EccScheme("none"),
) -> ModelArchive:
    """Store one coded bit per sampled parameter: bit 1 -> negative sign."""
    names = eligible_names(archive)
    total = host_size(archive, names)
    coded = ecc.encode(bytes_to_bits(payload))
    positions = sample_positions(total, coded.size, derive_seed(seed, "sign/positions"))
    updates = {}
    for name, local, slot_idx in _locate(archive, names, positions):
        t = archive.tensors[name]
        flat = t.data.copy().ravel()
        signs = np.where(coded[slot_idx] == 1, -1.0, 1.0).astype(flat.dtype)
        flat[local] = np.copysign(np.abs(flat[local]), signs)
        updates[name] = Tensor(flat.reshape(t.shape))
    return archive.replace(updates)


def sign_extract(
    archive: ModelArchive,
    payload_len: int,
    *,
    seed: int,
    ecc: EccScheme = EccScheme("none"),
) -> bytes:
    names = eligible_names(archive)
    total = host_size(archive, names)
    coded_len = ecc.coded_len(payload_len * 8)
    positions = sample_positions(total, coded_len, derive_seed(seed, "sign/positions"))
    bits = np.zeros(coded_len, dtype=np.uint8)
    for name, local, slot_idx in _locate(archive, names, positions):
        flat = archive.tensors[name].data.ravel()
        bits[slot_idx] = np.signbit(flat[local]).astype(np.uint8)
    decoded = ecc.decode(bits)
    return bits_to_bytes(decoded[: payload_len * 8])


# ------------------------------------------------------ spread spectrum

#: min host params per coded bit; below this the chips no longer average out
SS_MIN_RATIO = 64

#: host params handled per matmul chunk when (de)spreading
_SS_CHUNK = 16384


@dataclass(frozen=True)
class ChipPlan:
    """Everything an extractor needs to despread a carrier archive."""

    seed: int
    gamma: float
    payload_bits: int
    ecc_spec: str
    eligible: tuple[str, ...]
    host_n: int
    payload_sha256: str

    @property
    def ecc(self) -> EccScheme:
        return parse_ecc(self.ecc_spec)

    @property
    def coded_bits(self) -> int:
        return self.ecc.coded_len(self.payload_bits)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "gamma": self.gamma,
            "payload_bits": self.payload_bits,
            "ecc": self.ecc_spec,
            "eligible": list(self.eligible),
            "host_n": self.host_n,
            "payload_sha256": self.payload_sha256,
        }

    @staticmethod
    def from_dict(doc: dict) -> "ChipPlan":
        return ChipPlan(
            seed=int(doc["seed"]),
            gamma=float(doc["gamma"]),
            payload_bits=int(doc["payload_bits"]),
            ecc_spec=str(doc["ecc"]),
            eligible=tuple(doc["eligible"]),
            host_n=int(doc["host_n"]),
            payload_sha256=str(doc["payload_sha256"]),
        )


@dataclass(frozen=True)
class SnrReading:
    """Despread quality: signal mean/noise var over re-aligned correlations."""

    snr_db: float
    signal_mean: float
    noise_var: float
    coded_bits: int


def make_chip_plan(
    archive: ModelArchive,
    payload: bytes,
    *,
    gamma: float,
    seed: int,
    ecc: EccScheme = EccScheme("none"),
) -> ChipPlan:
    names = eligible_names(archive, min_ndim=2)
    n = host_size(archive, names)
    plan = ChipPlan(
        seed=seed,
        gamma=float(gamma),
        payload_bits=len(payload) * 8,
        ecc_spec=ecc.spec,
        eligible=names,
        host_n=n,
        payload_sha256=hashlib.sha256(payload).hexdigest(),
    )
    if n < SS_MIN_RATIO * plan.coded_bits:
        raise CapacityError(
            f"host has {n} params; {plan.coded_bits} coded bits need at least "
            f"{SS_MIN_RATIO * plan.coded_bits}"
        )
    return plan


def _chip_block(plan: ChipPlan, start: int, stop: int, n_bits: int) -> np.ndarray:
    """Chips for host positions [start, stop) and all coded bits: (n_bits, width).

    Chip k occupies the k-th run of ceil(host_n/64) words in one counter
    stream, 64 chips per word, little-endian bit order within each word.
    All rows are pulled in a single random-access call.
    """
    words_per_bit = -(-plan.host_n // 64)
    chip_seed = derive_seed(plan.seed, "ss/chips")
    w0, w1 = start // 64, -(-stop // 64)
    rows = np.arange(n_bits, dtype=np.uint64)[:, None] * np.uint64(words_per_bit)
    cols = np.arange(w0, w1, dtype=np.uint64)[None, :]
    words = words_at(chip_seed, rows + cols)
    bits = np.unpackbits(words.view(np.uint8).reshape(n_bits, -1), axis=1, bitorder="little")
    block = bits[:, start - w0 * 64 : stop - w0 * 64]
    return block.astype(np.float32) * 2.0 - 1.0


def ss_embed(archive: ModelArchive, payload: bytes, plan: ChipPlan) -> ModelArchive:
    """w' = w + gamma * sum_k b_k c_k with b_k = +/-1 from the coded bits."""
    if hashlib.sha256(payload).hexdigest() != plan.payload_sha256:
        raise ValueError("payload does not match plan digest")
    coded = plan.ecc.encode(bytes_to_bits(payload))
    b = (coded.astype(np.float32) * 2.0 - 1.0)
    vec = host_vector(archive, plan.eligible)
    if vec.size != plan.host_n:
        raise ValueError("archive host size does not match plan")
    out = vec.copy()
    for s in range(0, plan.host_n, _SS_CHUNK):
        e = min(s + _SS_CHUNK, plan.host_n)
        chips = _chip_block(plan, s, e, coded.size)
        out[s:e] += plan.gamma * (b @ chips)
    return scatter_host(archive, plan.eligible, out)


def ss_despread_many(hosts: np.ndarray, plan: ChipPlan) -> np.ndarray:
    """Correlations y[v, k] = <host_v, c_k> / N for a stack of host vectors.

    The chip matrix is regenerated chunk by chunk and shared across all
    rows, so evaluating many disrupted variants costs one sweep.
    """
    hosts = np.atleast_2d(np.asarray(hosts, dtype=np.float32))
    if hosts.shape[1] != plan.host_n:
        raise ValueError("host vector length does not match plan")
    k = plan.coded_bits
    y = np.zeros((hosts.shape[0], k), dtype=np.float64)
    for s in range(0, plan.host_n, _SS_CHUNK):
        e = min(s + _SS_CHUNK, plan.host_n)
        chips = _chip_block(plan, s, e, k)
        y += hosts[:, s:e] @ chips.T
    return y / plan.host_n


def decode_correlations(y: np.ndarray, plan: ChipPlan) -> tuple[bytes, SnrReading]:
    coded_hat = (y > 0).astype(np.uint8)
    decoded = plan.ecc.decode(coded_hat)[: plan.payload_bits]
    payload = bits_to_bytes(decoded)
    # re-encode the decoded bits: aligned correlations should all be positive
    realigned = plan.ecc.encode(decoded).astype(np.float64) * 2.0 - 1.0
    s = realigned * y
    mean = float(s.mean())
    var = float(s.var())
    if var <= 0.0:
        snr = float("inf") if mean != 0.0 else float("-inf")
    else:
        snr = 10.0 * float(np.log10(mean * mean / var)) if mean != 0.0 else float("-inf")
    return payload, SnrReading(snr, mean, var, int(y.size))


def ss_extract(archive: ModelArchive, plan: ChipPlan) -> tuple[bytes, SnrReading]:
    vec = host_vector(archive, plan.eligible)
    y = ss_despread_many(vec[None, :], plan)[0]
    return decode_correlations(y, plan)


def payload_matches(plan: ChipPlan, payload: bytes) -> bool:
    return hashlib.sha256(payload).hexdigest() == plan.payload_sha256
