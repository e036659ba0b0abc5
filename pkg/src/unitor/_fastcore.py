"""JIT-compiled inner loops for the stream cipher. Optional: the cipher
module falls back to its pure-Python path when this import fails or when
UNITOR_PURE_PYTHON is set."""

import numpy as np
from numba import njit


@njit(cache=True)
def mix_rows(tabs, row):
    """80 in-place e-transformation rounds of the 80-symbol mixing row.

    tabs is uint8[80,16], table i indexed by (a<<2)|x. Each round's leader
    is the previous row's last symbol, read before the row is overwritten.
    """
    for i in range(80):
        y = row[79]
        for j in range(80):
            y = tabs[i, (y << 2) | row[j]]
            row[j] = y


@njit(cache=True)
def run_pipeline(tabs, leaders, counter, n, out):
    """Push n counter symbols through the 80 stages, collecting the last
    stage's output per symbol. leaders is mutated; out must hold n."""
    c = counter
    for t in range(n):
        x = c & 3
        for i in range(80):
            x = tabs[i, (leaders[i] << 2) | x]
            leaders[i] = x
        out[t] = x
        c += 1


def compile_kernels():
    """Force JIT compilation (loads from the on-disk cache when warm)."""
    tabs = np.zeros((80, 16), dtype=np.uint8)
    row = np.zeros(80, dtype=np.uint8)
    mix_rows(tabs, row)
    out = np.zeros(4, dtype=np.uint8)
    run_pipeline(tabs, row, 0, 4, out)
