"""sRGB <-> CIE L*C*h colorimetry and the hue/chroma/lightness jitter.

Conversions run in float64 through linear RGB and XYZ (D65 white point);
the XYZ->RGB matrix is the exact numerical inverse of the forward matrix,
so a zero-offset jitter round-trips to within quantization. Out-of-gamut
results are clamped by clipping in sRGB.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "srgb_to_lab",
    "lab_to_srgb",
    "lab_to_lch",
    "lch_to_lab",
    "rgb255_to_lch",
    "lch_to_rgb255",
    "delta_e",
    "color_jitter",
]

_M_RGB2XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_M_XYZ2RGB = np.linalg.inv(_M_RGB2XYZ)
_WHITE = np.array([0.95047, 1.0, 1.08883])
_DELTA = 6.0 / 29.0


def _as_float(arr) -> np.ndarray:
    """Keep float32/float64 as-is, promote anything else to float64. The
    conversion chain preserves the working dtype (float32 for the bulk
    augmentation path, float64 elsewhere)."""
    arr = np.asarray(arr)
    if arr.dtype not in (np.float32, np.float64):
        return arr.astype(np.float64)
    return arr

JITTER_MAX_L = 10.0
JITTER_MAX_C = 7.0
JITTER_MAX_H = 30.0


def _srgb_to_linear(c: np.ndarray) -> np.ndarray:
    c = _as_float(c)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c: np.ndarray) -> np.ndarray:
    c = _as_float(c)
    safe = np.maximum(c, 0.0)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * safe ** (1.0 / 2.4) - 0.055)


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA ** 3, np.cbrt(t), t / (3 * _DELTA ** 2) + 4.0 / 29.0)


def _lab_f_inv(u: np.ndarray) -> np.ndarray:
    return np.where(u > _DELTA, u ** 3, 3 * _DELTA ** 2 * (u - 4.0 / 29.0))


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """sRGB in [0,1] (..., 3) to CIE L*a*b*."""
    lin = _srgb_to_linear(rgb)
    dt = lin.dtype
    xyz = lin @ _M_RGB2XYZ.T.astype(dt)
    f = _lab_f(xyz / _WHITE.astype(dt))
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_srgb(lab: np.ndarray) -> np.ndarray:
    """CIE L*a*b* to sRGB in [0,1], clipped to gamut."""
    lab = _as_float(lab)
    dt = lab.dtype
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack([_lab_f_inv(fx), _lab_f_inv(fy), _lab_f_inv(fz)], axis=-1)
    lin = (xyz * _WHITE.astype(dt)) @ _M_XYZ2RGB.T.astype(dt)
    return np.clip(_linear_to_srgb(lin), 0.0, 1.0)


def lab_to_lch(lab: np.ndarray) -> np.ndarray:
    lab = _as_float(lab)
    c = np.hypot(lab[..., 1], lab[..., 2])
    h = np.degrees(np.arctan2(lab[..., 2], lab[..., 1])) % 360.0
    return np.stack([lab[..., 0], c, h], axis=-1)


def lch_to_lab(lch: np.ndarray) -> np.ndarray:
    lch = _as_float(lch)
    rad = np.radians(lch[..., 2])
    return np.stack(
        [lch[..., 0], lch[..., 1] * np.cos(rad), lch[..., 1] * np.sin(rad)], axis=-1
    )


def rgb255_to_lch(rgb255) -> np.ndarray:
    return lab_to_lch(srgb_to_lab(np.asarray(rgb255, dtype=np.float64) / 255.0))


def lch_to_rgb255(lch) -> np.ndarray:
    rgb = lab_to_srgb(lch_to_lab(lch)) * 255.0
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def delta_e(rgb255_a, rgb255_b) -> float:
    """CIE76 color difference between two 8-bit RGB colors."""
    la = srgb_to_lab(np.asarray(rgb255_a, dtype=np.float64) / 255.0)
    lb = srgb_to_lab(np.asarray(rgb255_b, dtype=np.float64) / 255.0)
    return float(np.sqrt(((la - lb) ** 2).sum(axis=-1)))


def color_jitter(image: np.ndarray, d_l: float = 0.0, d_c: float = 0.0,
                 d_h: float = 0.0) -> np.ndarray:
    """Shift an 8-bit RGB image by (dL, dC, dh degrees) in CIE L*C*h.

    Offsets are bounded (|dL|<=10, |dC|<=7, |dh|<=30) to keep colors
    natural; chroma is floored at zero, so neutral pixels are inert under
    hue shifts. Gamut exits are clipped in sRGB.
    """
    if abs(d_l) > JITTER_MAX_L or abs(d_c) > JITTER_MAX_C or abs(d_h) > JITTER_MAX_H:
        raise ValueError("color_jitter: offsets exceed the natural-color bounds")
    img = np.asarray(image)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[-1] != 3:
        raise ValueError("color_jitter expects an (H,W,3) uint8 image")
    # float32 is plenty: conversion noise is orders below the 1/255 quantum
    lch = lab_to_lch(srgb_to_lab(img.astype(np.float32) / 255.0))
    lch[..., 0] += d_l
    lch[..., 1] = np.maximum(lch[..., 1] + d_c, 0.0)
    lch[..., 2] = (lch[..., 2] + d_h) % 360.0
    rgb = lab_to_srgb(lch_to_lab(lch)) * 255.0
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
