"""Binary additive stream cipher over the order-4 quasigroup pipeline.

80-bit key, 64-bit IV padded to 80 bits with a fixed constant. The key
selects one of four quasigroups for each of 80 stages; IV setup mixes key
and padded IV through 80 e-transformation rounds to seed the stage leaders;
keystream mode then streams a mod-4 counter through the pipeline and keeps
every second last-stage output, two bits per symbol.

Implemented for protocol fidelity. It is a frozen legacy design with
published distinguishers; new systems should not adopt it.
"""

from __future__ import annotations

import functools
import math
import os
import secrets
from dataclasses import dataclass

from .qg4 import EDON80_QUAD, Quad, e_transform

KEY_BYTES = 10
IV_BYTES = 8
STAGES = 80

# 16-bit padding constant 1110010000011011, appended to the IV.
PAD = bytes((0xE4, 0x1B))

_FAST = None


def _fastcore():
    # lazy so pure-Python environments never touch numba
    global _FAST
    if _FAST is None:
        if os.environ.get("UNITOR_PURE_PYTHON"):
            _FAST = False
        else:
            try:
                from . import _fastcore as mod

                _FAST = mod
            except ImportError:
                _FAST = False
    return _FAST


def _bytes_to_symbols(data: bytes) -> tuple[int, ...]:
    """Split bytes into 2-bit symbols, most significant pair first."""
    out = []
    for b in data:
        out.extend(((b >> 6) & 3, (b >> 4) & 3, (b >> 2) & 3, b & 3))
    return tuple(out)


def _symbols_to_bytes(symbols) -> bytes:
    if len(symbols) % 4:
        raise ValueError("symbol count must be a multiple of 4")
    it = iter(symbols)
    return bytes(
        (a << 6) | (b << 4) | (c << 2) | d for a, b, c, d in zip(it, it, it, it)
    )


@dataclass(frozen=True)
class Key80:
    """80-bit key; symbol i of nibbles() is K_{i+1} of the schedule."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != KEY_BYTES:
            raise ValueError(f"key must be {KEY_BYTES} bytes, got {len(self.data)}")

    @classmethod
    def from_hex(cls, text: str) -> "Key80":
        return cls(bytes.fromhex(text))

    def hex(self) -> str:
        return self.data.hex()

    def nibbles(self) -> tuple[int, ...]:
        return _bytes_to_symbols(self.data)


@dataclass(frozen=True)
class IV64:
    data: bytes

    def __post_init__(self):
        if len(self.data) != IV_BYTES:
            raise ValueError(f"IV must be {IV_BYTES} bytes, got {len(self.data)}")

    @classmethod
    def from_hex(cls, text: str) -> "IV64":
        return cls(bytes.fromhex(text))

    def hex(self) -> str:
        return self.data.hex()


@dataclass(frozen=True)
class PaddedIV:
    """IV plus the 16-bit constant: 40 symbols, V_1..V_40."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != KEY_BYTES:
            raise ValueError("padded IV must be 10 bytes")
        if self.data[IV_BYTES:] != PAD:
            raise ValueError("padded IV must end with the fixed constant")

    def nibbles(self) -> tuple[int, ...]:
        return _bytes_to_symbols(self.data)


def pad_iv(iv: IV64) -> PaddedIV:
    return PaddedIV(iv.data + PAD)


def fresh_iv() -> IV64:
    return IV64(secrets.token_bytes(IV_BYTES))


class KeySchedule:
    """Per-stage working quasigroups for one key.

    Stage i (1-based) works with the quasigroup picked by key symbol
    K_i for i <= 40 and K_{i-40} above, i.e. the 40 key symbols repeated.
    Tables are flattened to 16 entries indexed by (a<<2)|b for the kernels.
    """

    __slots__ = ("key", "quad", "selectors", "flat")

    def __init__(self, key: Key80, quad: Quad):
        self.key = key
        self.quad = quad
        nibbles = key.nibbles()
        self.selectors = nibbles + nibbles
        flat = bytearray()
        for sel in self.selectors:
            rows = quad[sel].rows
            for a in range(4):
                flat.extend(rows[a])
        self.flat = bytes(flat)

    def table(self, stage: int):
        """Working quasigroup of 1-based stage."""
        if not 1 <= stage <= STAGES:
            raise ValueError("stage must be in 1..80")
        return self.quad[self.selectors[stage - 1]]


@functools.lru_cache(maxsize=256)
def key_setup(key: Key80, quad: Quad = EDON80_QUAD) -> KeySchedule:
    return KeySchedule(key, quad)


class PipelineState:
    """Mutable cipher state: 80 stage leaders plus the counter position.

    Not thread-safe; one producer per state. pending holds bits already
    generated but not yet handed out when a request split a symbol.
    """

    __slots__ = ("leaders", "counter", "pending")

    def __init__(self, leaders, counter: int = 0, pending: str = ""):
        self.leaders = list(leaders)
        self.counter = counter
        self.pending = pending


def iv_setup(schedule: KeySchedule, padded: PaddedIV) -> PipelineState:
    """Mix key and padded IV into the initial stage leaders.

    Working row 0 is the 40 key symbols followed by the 40 padded-IV
    symbols. Each of 80 rounds e-transforms the row under that round's
    working quasigroup, the leader being the previous row's last symbol.
    The final row, left to right, seeds leaders a_1..a_80.
    """
    row = list(schedule.key.nibbles() + padded.nibbles())
    fast = _fastcore()
    if fast:
        import numpy as np

        tabs = np.frombuffer(schedule.flat, dtype=np.uint8).reshape(STAGES, 16)
        arr = np.array(row, dtype=np.uint8)
        fast.mix_rows(tabs, arr)
        return PipelineState(arr.tolist())
    for i in range(1, STAGES + 1):
        row = list(e_transform(schedule.table(i), row[-1], row))
    return PipelineState(row)


def _run(schedule: KeySchedule, state: PipelineState, n: int):
    """Feed the next n counter symbols through the pipeline and return the
    last stage's n outputs. Advances state."""
    fast = _fastcore()
    if fast:
        import numpy as np

        tabs = np.frombuffer(schedule.flat, dtype=np.uint8).reshape(STAGES, 16)
        leaders = np.array(state.leaders, dtype=np.uint8)
        out = np.empty(n, dtype=np.uint8)
        fast.run_pipeline(tabs, leaders, state.counter & 3, n, out)
        state.leaders = leaders.tolist()
        state.counter += n
        outputs = out
    else:
        flat = schedule.flat
        leaders = state.leaders
        c = state.counter
        outputs = []
        for t in range(n):
            x = (c + t) & 3
            for i in range(STAGES):
                x = flat[(i << 4) | (leaders[i] << 2) | x]
                leaders[i] = x
            outputs.append(x)
        state.counter += n
    return outputs


def _symbols_to_bits(outputs) -> str:
    fast = _fastcore()
    if fast and len(outputs) > 64:
        import numpy as np

        arr = np.asarray(outputs, dtype=np.uint8)
        bits = np.empty(arr.size * 2, dtype=np.uint8)
        bits[0::2] = arr >> 1
        bits[1::2] = arr & 1
        return (bits + ord("0")).tobytes().decode("ascii")
    return "".join(format(s, "02b") for s in outputs)


def keystream(state: PipelineState, schedule: KeySchedule, nbits: int) -> str:
    """Next nbits keystream bits as a '0'/'1' string.

    Keystream symbols are every second last-stage output, i.e. those for
    even 1-based counter positions; each carries 2 bits MSB-first.
    Successive calls continue the stream exactly where the last stopped.
    """
    if nbits < 0:
        raise ValueError("nbits must be non-negative")
    take = min(len(state.pending), nbits)
    head = state.pending[:take]
    state.pending = state.pending[take:]
    remaining = nbits - take
    if not remaining:
        return head
    nsyms = (remaining + 1) // 2
    # kept outputs sit at odd 0-based counter positions
    if state.counter % 2 == 0:
        consume = 2 * nsyms
    else:
        consume = 2 * nsyms - 1
    first_kept = (state.counter % 2 == 1)
    outputs = _run(schedule, state, consume)
    kept = outputs[0::2] if first_kept else outputs[1::2]
    bits = _symbols_to_bits(kept)
    state.pending = bits[remaining:]
    return head + bits[:remaining]


def keystream_bytes(state: PipelineState, schedule: KeySchedule, nbytes: int) -> bytes:
    bits = keystream(state, schedule, nbytes * 8)
    if not bits:
        return b""
    return int(bits, 2).to_bytes(nbytes, "big")


def xor_seal(key: Key80, iv: IV64, message: bytes, quad: Quad = EDON80_QUAD) -> bytes:
    """Seal or open message under (key, iv); XOR makes it its own inverse."""
    if not message:
        return b""
    schedule = key_setup(key, quad)
    state = iv_setup(schedule, pad_iv(iv))
    pad = keystream_bytes(state, schedule, len(message))
    n = len(message)
    return (int.from_bytes(message, "big") ^ int.from_bytes(pad, "big")).to_bytes(
        n, "big"
    )


@dataclass(frozen=True)
class SmokeReport:
    """Monobit and runs p-values for one bit stream."""

    monobit_p: float
    runs_p: float

    def passes(self, alpha: float = 0.01) -> bool:
        return self.monobit_p >= alpha and self.runs_p >= alpha


def nist_smoke(bits: str) -> SmokeReport:
    """Frequency (monobit) and runs tests from SP 800-22, two p-values.

    The runs test short-circuits to p=0 when the ones proportion sits
    outside the tau = 2/sqrt(n) band, per the standard's prerequisite.
    """
    n = len(bits)
    if n < 100:
        raise ValueError("need at least 100 bits")
    ones = bits.count("1")
    if ones + bits.count("0") != n:
        raise ValueError("bits must contain only '0' and '1'")
    s_obs = abs(2 * ones - n) / math.sqrt(n)
    monobit_p = math.erfc(s_obs / math.sqrt(2))
    pi = ones / n
    tau = 2 / math.sqrt(n)
    if abs(pi - 0.5) >= tau:
        return SmokeReport(monobit_p, 0.0)
    v = 1 + sum(1 for a, b in zip(bits, bits[1:]) if a != b)
    num = abs(v - 2 * n * pi * (1 - pi))
    den = 2 * math.sqrt(2 * n) * pi * (1 - pi)
    return SmokeReport(monobit_p, math.erfc(num / den))


def warmup() -> None:
    """Compile the JIT kernels ahead of first use; no-op in pure mode."""
    fast = _fastcore()
    if fast:
        fast.compile_kernels()
