import pathlib

import pytest

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def edon80_vectors():
    """(key_hex, iv_hex, first_128_keystream_bits_hex) triples."""
    rows = []
    for line in (FIXTURES / "edon80_vectors.txt").read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key_hex, iv_hex, ks_hex = line.split()
        rows.append((key_hex, iv_hex, ks_hex))
    assert len(rows) == 8
    return rows


@pytest.fixture(scope="session")
def golden_body():
    return (FIXTURES / "sealed_body.golden").read_bytes()
