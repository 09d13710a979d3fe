"""Cressman-weighted filling of sparse gridded observations as a normalized convolution.

Distances are measured in grid cells. Longitude wraps around; beyond the
poles the field is padded with zeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

EPSILON = 1e-4
RADIUS = 10


class LayoutError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CressmanKernel:
    """Kernel weights plus the grid offset of element [0, 0].

    ``weights[a, b]`` applies at offset ``(a + origin, b + origin)`` from
    the target cell.
    """

    radius: int
    weights: np.ndarray
    origin: int

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.weights.shape[0]) + self.origin

    def weight_at(self, di: int, dj: int) -> float:
        a, b = di - self.origin, dj - self.origin
        n = self.weights.shape[0]
        return float(self.weights[a, b]) if 0 <= a < n and 0 <= b < n else 0.0


def cressman_weight(d2, R):
    d2 = np.asarray(d2, dtype=np.float64)
    R2 = float(R) ** 2
    return np.where(d2 < R2, (R2 - d2) / (R2 + d2), 0.0)


def build_kernel(R: int = RADIUS, symmetric: bool = False) -> CressmanKernel:
    """Cressman kernel (R^2 - d^2) / (R^2 + d^2), zero for d >= R.

    The default is the 2R x 2R form indexed i, j = 1..2R with d^2 =
    (i - R)^2 + (j - R)^2, i.e. offsets -(R-1)..R. Its last row and column
    lie at d >= R and are therefore all zero, so it carries the same
    weights as the symmetric (2R+1) x (2R+1) form (offsets -R..R).
    """
    if R < 1:
        raise ValueError("radius must be >= 1")
    if symmetric:
        off = np.arange(-R, R + 1)
    else:
        off = np.arange(1, 2 * R + 1) - R
    d2 = off[:, None] ** 2 + off[None, :] ** 2
    return CressmanKernel(R, cressman_weight(d2, R), int(off[0]))


def _convolve_periodic(field: np.ndarray, kernel: CressmanKernel) -> np.ndarray:
    """out[p] = sum_o w[o] * field[p - o] over the last two axes, periodic in longitude."""
    n = kernel.weights.shape[0]
    lo, hi = kernel.origin, kernel.origin + n - 1
    # odd-sized kernel centred on offset 0 so ndimage's origin rule is unambiguous
    half = max(abs(lo), abs(hi))
    full = np.zeros((2 * half + 1, 2 * half + 1))
    full[half + lo : half + hi + 1, half + lo : half + hi + 1] = kernel.weights
    nlon = field.shape[-1]
    if half > nlon:
        reps = int(np.ceil(half / nlon))
        padded = np.concatenate([field] * (2 * reps + 1), axis=-1)
        pad = reps * nlon
    else:
        padded = np.concatenate([field[..., nlon - half :], field, field[..., :half]], axis=-1)
        pad = half
    lead = field.shape[:-2]
    flat = padded.reshape(-1, *padded.shape[-2:])
    out = np.empty((flat.shape[0], field.shape[-2], nlon))
    for k in range(flat.shape[0]):
        conv = ndimage.convolve(flat[k], full, mode="constant", cval=0.0)
        out[k] = conv[:, pad : pad + nlon]
    return out.reshape(*lead, field.shape[-2], nlon)


def dilate(values, mask, kernel: CressmanKernel | None = None, epsilon: float = EPSILON, clip_confidence: bool = True):
    """Fill unobserved cells with the Cressman-weighted mean of observations in range.

    Arrays are [..., n_lat, n_lon]; leading axes (time, channel) are
    processed independently. Returns ``(values_out, mask_out, confidence)``:

    * observed cells keep their value bit-exactly and get confidence 1;
    * other cells get ``(y*w) / (m*w + epsilon)`` where ``m*w > 0``, mask 1
      and confidence ``m*w``, capped at 1 when ``clip_confidence`` is set;
    * cells out of reach of every observation stay 0 with mask 0.
    """
    kernel = kernel or build_kernel(RADIUS)
    y = np.asarray(values, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    if y.shape != m.shape:
        raise LayoutError(f"values {y.shape} and mask {m.shape} differ")
    if y.ndim < 2:
        raise LayoutError("need at least two spatial axes")
    observed = m > 0
    y_masked = np.where(observed, y, 0.0)
    m_bin = observed.astype(np.float64)
    y_conv = _convolve_periodic(y_masked, kernel)
    m_conv = _convolve_periodic(m_bin, kernel)
    # sums of nonnegative products: exact zero iff no observation in range
    reach = m_conv > 0
    filled = y_conv / (m_conv + epsilon)
    out = np.where(observed, y, np.where(reach, filled, 0.0))
    mask_out = (observed | reach).astype(np.float64)
    conf_fill = np.minimum(m_conv, 1.0) if clip_confidence else m_conv
    confidence = np.where(observed, 1.0, np.where(reach, conf_fill, 0.0))
    return out, mask_out, confidence


def brute_force_fill(values, mask, R: int = RADIUS, epsilon: float = EPSILON, clip_confidence: bool = True):
    """Per-observation scatter of Cressman weights; reference for :func:`dilate`.

    Loops over every observation and adds its weight to every cell within
    radius R, using the same index convention and boundary handling. Meant
    for small grids only.
    """
    y = np.asarray(values, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64) > 0
    if y.shape != m.shape:
        raise LayoutError("values and mask differ in shape")
    lead = y.shape[:-2]
    H, W = y.shape[-2:]
    out = np.zeros_like(y)
    mout = np.zeros_like(y)
    conf = np.zeros_like(y)
    rows = np.arange(H)[:, None]
    cols = np.arange(W)[None, :]
    R2 = float(R * R)
    for idx in np.ndindex(*lead):
        num = np.zeros((H, W))
        den = np.zeros((H, W))
        for oi, oj in zip(*np.nonzero(m[idx])):
            if 2 * R > W:
                w = _all_images(rows, cols, oi, oj, W, R)
            else:
                # at most one periodic image lies within R: use the shortest separation
                dj = np.abs(cols - oj)
                dj = np.minimum(dj, W - dj)
                d2 = (rows - oi) ** 2 + dj**2
                w = np.where(d2 < R2, (R2 - d2) / (R2 + d2), 0.0)
            num += w * y[idx][oi, oj]
            den += w
        obs = m[idx]
        reach = den > 0
        out[idx] = np.where(obs, y[idx], np.where(reach, num / (den + epsilon), 0.0))
        mout[idx] = (obs | reach).astype(np.float64)
        c = np.minimum(den, 1.0) if clip_confidence else den
        conf[idx] = np.where(obs, 1.0, np.where(reach, c, 0.0))
    return out, mout, conf


def _all_images(rows, cols, oi, oj, W, R):
    """Weight from every periodic image of an observation (grids narrower than 2R)."""
    R2 = float(R * R)
    w = np.zeros((rows.shape[0], cols.shape[1]))
    k = int(np.ceil(R / W)) + 1
    for shift in range(-k, k + 1):
        d2 = (rows - oi) ** 2 + (cols - oj - shift * W) ** 2
        w += np.where(d2 < R2, (R2 - d2) / (R2 + d2), 0.0)
    return w


def dilate_tensor(tensor, kernel: CressmanKernel | None = None, epsilon: float = EPSILON):
    """Dilate a GriddedObsTensor, returning a new tensor with updated mask and confidence."""
    from .observations import GriddedObsTensor

    v, m, c = dilate(tensor.values, tensor.mask, kernel, epsilon)
    meta = dict(tensor.meta, dilated=True, radius=(kernel or build_kernel(RADIUS)).radius, epsilon=epsilon)
    return GriddedObsTensor(v, m, c, tensor.window_start, tensor.window_hours, tensor.channels, meta)
