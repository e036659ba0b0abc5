"""Independent oracle for the stream cipher: builds the whole computation
as explicit tables of e-transformation rows, following the textbook
row-by-row definition, instead of the production module's in-place stage
pipeline. Used to freeze the fixture vectors and to cross-check the
production path. Keep this file free of any import from unitor.edon80.

Run as a script to regenerate tests/fixtures/edon80_vectors.txt and
tests/fixtures/sealed_body.golden.
"""

from __future__ import annotations

import os

from unitor.qg4 import EDON80_QUAD, Quad, e_transform

PAD_BITS = "1110010000011011"


def hex_to_symbols(hex_str: str) -> list[int]:
    """2-bit symbols from a hex string, MSB-first within each byte."""
    bits = bin(int(hex_str, 16))[2:].zfill(len(hex_str) * 4)
    return [int(bits[i : i + 2], 2) for i in range(0, len(bits), 2)]


def ref_working_tables(key_hex: str, quad: Quad):
    """Stage tables *1..*80: table i selects quad member K_i (K reused
    for stages 41..80)."""
    k = hex_to_symbols(key_hex)
    assert len(k) == 40
    return [quad[k[i % 40]] for i in range(80)], k


def ref_padded_iv_symbols(iv_hex: str) -> list[int]:
    bits = bin(int(iv_hex, 16))[2:].zfill(64) + PAD_BITS
    return [int(bits[i : i + 2], 2) for i in range(0, 80, 2)]


def ref_iv_mix_rows(key_hex: str, iv_hex: str, quad: Quad):
    """The mixing table: row 0 is the 40 key symbols followed by the 40
    padded-IV symbols; each of the 80 following rows is the e-transform of
    the previous row, with the previous row's last symbol as leader. The
    final row is the 80 stage leaders."""
    tables, k = ref_working_tables(key_hex, quad)
    row = k + ref_padded_iv_symbols(iv_hex)
    rows = [row]
    for i in range(80):
        row = list(e_transform(tables[i], row[-1], row))
        rows.append(row)
    return rows


def ref_keystream_bits(key_hex: str, iv_hex: str, nbits: int, quad: Quad = EDON80_QUAD) -> str:
    """Keystream as a '0'/'1' string, via full row materialization.

    The counter row 0,1,2,3,... is pushed through 80 e-transformations
    (row i seeded by stage leader a_i); the keystream keeps every second
    symbol of the last row (the 2nd, 4th, ...), 2 bits per symbol,
    MSB-first.
    """
    tables, _ = ref_working_tables(key_hex, quad)
    leaders = ref_iv_mix_rows(key_hex, iv_hex, quad)[-1]
    nsyms = (nbits + 1) // 2
    width = 2 * nsyms  # counter symbols consumed
    row = [t & 3 for t in range(width)]
    for i in range(80):
        row = list(e_transform(tables[i], leaders[i], row))
    kept = row[1::2]
    bits = "".join(format(s, "02b") for s in kept)
    return bits[:nbits]


def ref_xor_seal(key_hex: str, iv_hex: str, message: bytes, quad: Quad = EDON80_QUAD) -> bytes:
    ks = ref_keystream_bits(key_hex, iv_hex, 8 * len(message), quad)
    if not message:
        return b""
    pad = int(ks, 2).to_bytes(len(message), "big")
    return bytes(m ^ p for m, p in zip(message, pad))


def bits_to_hex(bits: str) -> str:
    assert len(bits) % 8 == 0
    return "".join("%02x" % int(bits[i : i + 8], 2) for i in range(0, len(bits), 8))


FIXTURE_INPUTS = [
    ("00000000000000000000", "0000000000000000"),
    ("ffffffffffffffffffff", "ffffffffffffffff"),
    ("00000000000000000000", "0000000000000001"),
    ("80000000000000000000", "0000000000000000"),
    ("000102030405060708090a0b0c0d0e0f10111213"[:20], "0001020304050607"),
    ("123456789abcdef01234", "fedcba9876543210"),
    ("1b5a7c03e9d2f4688ace", "0f1e2d3c4b5a6978"),
    ("c3a5e80172bd4f96d00d", "9a3c5e7f01b2d4e6"),
]


def _write_fixtures(outdir: str) -> None:
    lines = []
    for key_hex, iv_hex in FIXTURE_INPUTS:
        ks = ref_keystream_bits(key_hex, iv_hex, 128)
        lines.append("%s %s %s" % (key_hex, iv_hex, bits_to_hex(ks)))
    path = os.path.join(outdir, "edon80_vectors.txt")
    with open(path, "w") as f:
        f.write("# key_hex iv_hex keystream_first_128_bits_hex\n")
        f.write("\n".join(lines) + "\n")
    print("wrote %s" % path)

    # golden sealed body for the wire-protocol fixture frame
    key_hex = "123456789abcdef01234"
    iv_hex = "00112233445566aa"
    plaintext = "CMD fan1 on SEQ 7".encode()
    ct = ref_xor_seal(key_hex, iv_hex, plaintext)
    body = "UNITOR/1\nIV: %s\nCT: %s\n" % (iv_hex, ct.hex())
    path = os.path.join(outdir, "sealed_body.golden")
    with open(path, "w") as f:
        f.write(body)
    print("wrote %s" % path)


if __name__ == "__main__":
    here = os.path.dirname(os.path.abspath(__file__))
    _write_fixtures(os.path.join(here, "fixtures"))
