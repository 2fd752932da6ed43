"""Fixed deterministic 64-bit generator (splitmix64).

Part of the external contract: any compliant implementation drawing with the
same seeds must produce the same template choices and score fixtures.
"""

from __future__ import annotations

import struct

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 step: maps a 64-bit state to a well-mixed 64-bit value."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def unit_float(x: int) -> float:
    """Map a 64-bit value to [0, 1) using the top 53 bits."""
    return (x >> 11) * (2.0**-53)


def float_bits(value: float) -> int:
    """IEEE-754 bit pattern of a float, as an unsigned 64-bit integer."""
    return struct.unpack("<Q", struct.pack("<d", value))[0]
