"""16-bit fixed-point number system used by the hardware emulation.

A quantized value is a signed 16-bit integer with an attached power-of-two
scale: real = integer * 2**exponent. Scales are per tensor. Rounding is
half-away-from-zero everywhere so independent implementations agree bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QMIN = -32768
QMAX = 32767
EXP_MIN = -32
EXP_MAX = 31
ZERO_EXPONENT = -15  # convention for all-zero tensors


@dataclass(frozen=True)
class QFormat:
    """Fixed-point format: value = int16 * 2**exponent."""

    exponent: int

    def __post_init__(self):
        if not EXP_MIN <= self.exponent <= EXP_MAX:
            raise ValueError(f"exponent {self.exponent} outside [{EXP_MIN}, {EXP_MAX}]")

    @property
    def step(self) -> float:
        return 2.0 ** self.exponent

    @property
    def max_value(self) -> float:
        return QMAX * self.step


@dataclass(frozen=True)
class QTensor:
    """Immutable int16 tensor tagged with its fixed-point format."""

    values: np.ndarray
    qformat: QFormat

    def __post_init__(self):
        if self.values.dtype != np.int16:
            raise ValueError(f"QTensor requires int16 values, got {self.values.dtype}")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(self.values.shape)


def round_half_away(x):
    """Round to nearest, ties away from zero. Works on scalars and arrays."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def choose_qformat(t: np.ndarray) -> QFormat:
    """Smallest exponent e such that max|t| fits, i.e. max|t| <= 32767 * 2**e.

    All-zero tensors get exponent -15 by convention.
    """
    t = np.asarray(t, dtype=np.float64)
    if t.size == 0:
        raise ValueError("cannot choose a format for an empty tensor")
    if not np.isfinite(t).all():
        raise ValueError("tensor contains non-finite values")
    peak = float(np.abs(t).max())
    if peak == 0.0:
        return QFormat(ZERO_EXPONENT)
    e = int(np.ceil(np.log2(peak / QMAX)))
    # float log2 can land one off near exact powers; fix by direct evaluation
    while peak > QMAX * 2.0 ** e:
        e += 1
    while e - 1 >= EXP_MIN and peak <= QMAX * 2.0 ** (e - 1):
        e -= 1
    return QFormat(min(max(e, EXP_MIN), EXP_MAX))


def quantize(t: np.ndarray, q: QFormat) -> QTensor:
    """Round t / 2**e half-away-from-zero and saturate to int16."""
    scaled = np.asarray(t, dtype=np.float64) * 2.0 ** (-q.exponent)
    ints = np.clip(round_half_away(scaled), QMIN, QMAX)
    return QTensor(ints.astype(np.int16), q)


def dequantize(qt: QTensor) -> np.ndarray:
    """Exact float value of every element: int * 2**e."""
    return qt.values.astype(np.float64) * qt.qformat.step


def mac9(a, w) -> int:
    """Sum of 9 products, the 3x3 kernel datapath primitive.

    Accumulation is 64-bit: nine full-scale products reach 9 * 32767**2,
    which exceeds the int32 range.
    """
    if len(a) != 9 or len(w) != 9:
        raise ValueError("mac9 expects two 9-element vectors")
    return sum(int(x) * int(y) for x, y in zip(a, w))


def requantize(acc: int, in_e: int, w_e: int, out_e: int) -> int:
    """Shift a wide accumulator into the output format and saturate to int16.

    The accumulator carries values scaled by 2**(in_e + w_e); the result is
    scaled by 2**out_e. Right shifts round half away from zero.
    """
    acc = int(acc)
    shift = in_e + w_e - out_e
    if shift >= 0:
        v = acc << shift
    else:
        s = -shift
        mag = abs(acc)
        v = (mag + (1 << (s - 1))) >> s
        if acc < 0:
            v = -v
    return min(max(v, QMIN), QMAX)


def requantize_array(acc: np.ndarray, shift: int) -> np.ndarray:
    """Vectorized requantize over an int64 accumulator array.

    ``shift`` = in_e + w_e - out_e. Guards keep the int64 arithmetic away
    from overflow for pathological exponent combinations; results equal the
    scalar requantize element for element for |acc| < 2**61.
    """
    acc = np.asarray(acc, dtype=np.int64)
    if shift >= 0:
        if shift > 16:
            # any nonzero value saturates once shifted past the 16-bit range
            v = np.where(acc > 0, QMAX, np.where(acc < 0, QMIN, 0)).astype(np.int64)
            return v.astype(np.int16)
        pre = np.clip(acc, -(1 << 40), 1 << 40)
        v = pre << shift
    else:
        s = -shift
        if s >= 64:
            return np.zeros(acc.shape, dtype=np.int16)
        mag = np.abs(acc)
        v = (mag + (np.int64(1) << (s - 1))) >> s
        v = np.where(acc < 0, -v, v)
    return np.clip(v, QMIN, QMAX).astype(np.int16)
