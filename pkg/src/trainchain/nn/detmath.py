"""Bit-reproducible exponential.

Chain verification retrains models and compares hashes, so every float in
the training path must be identical across machines and across the numba /
numpy code paths. IEEE-754 basic operations (+, -, *, /, sqrt, ldexp, floor)
are exactly specified; library `exp` is not. This module computes exp from
basic operations only:

    k = floor(x / ln2 + 1/2)            (round to nearest integer)
    r = (x - k*LN2_HI) - k*LN2_LO       (Cody-Waite two-part reduction)
    exp(x) = 2**k * P(r)                (degree-13 Taylor polynomial, Horner)

|r| <= ln2/2, where the truncation error of P is below one ulp. Inputs are
clamped to [-746, 710]; beyond those points exp is exactly 0.0 or +inf in
float64. The numba kernels mirror this function operation for operation
(see kernels_nb.det_exp_scalar); any change here must be mirrored there.
"""

from __future__ import annotations

import math

import numpy as np

INV_LN2 = 1.44269504088896338700e+00
LN2_HI = 6.93147180369123816490e-01
LN2_LO = 1.90821492927058770002e-10

EXP_CLAMP_LO = -746.0
EXP_CLAMP_HI = 710.0

# 1/k! for k = 0..13; exact doubles (13! < 2**53), identical on any platform.
EXP_COEFFS = tuple(1.0 / math.factorial(k) for k in range(14))


def det_exp(x: np.ndarray) -> np.ndarray:
    """Deterministic exp, elementwise over a float64 array."""
    x = np.asarray(x, dtype=np.float64)
    nan_mask = np.isnan(x)
    xs = np.where(nan_mask, 0.0, x)
    xs = np.clip(xs, EXP_CLAMP_LO, EXP_CLAMP_HI)
    k = np.floor(xs * INV_LN2 + 0.5)
    r = (xs - k * LN2_HI) - k * LN2_LO
    p = np.full_like(r, EXP_COEFFS[13])
    for c in EXP_COEFFS[12::-1]:
        p = p * r + c
    with np.errstate(over="ignore"):  # overflow to +inf is the defined result
        out = np.ldexp(p, k.astype(np.int64))
    return np.where(nan_mask, np.nan, out)
