"""Unitor: a quasigroup stream cipher, a mail-carried command protocol,
a store-and-forward broker simulator, a device node and a controller."""

__version__ = "0.1.0"
