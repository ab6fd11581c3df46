"""Scale-correction map construction and joint bilateral densification.

The sparse map holds measured correction factors eps = v / z_tilde at the
point pixels; JBU propagates them to neighbouring pixels of similar aligned
depth using Gaussian spatial and range kernels, and remaining holes are
filled with the neutral factor 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DepthRaster, ScaleMap, Space, SparsePointSet
from .errors import ConfigError, DomainError, ShapeError

K_UNDERFLOW = 1e-300  # below this the normalizer is treated as "no neighbours"


@dataclass(frozen=True)
class JBUParams:
    window_radius: int = 7
    sigma_spatial: float = 3.0
    sigma_range: float = 0.1  # inverse-depth units

    def __post_init__(self):
        if self.window_radius < 1:
            raise ConfigError(f"window_radius must be >= 1, got {self.window_radius}")
        if self.sigma_spatial <= 0 or self.sigma_range <= 0:
            raise ConfigError(
                f"kernel sigmas must be positive, got spatial={self.sigma_spatial}, range={self.sigma_range}"
            )


def sparse_scale_map(pts: SparsePointSet, z_tilde: DepthRaster) -> ScaleMap:
    """eps = v / z_tilde at each point pixel, v = 1/depth_m."""
    if z_tilde.space is not Space.INVERSE:
        raise DomainError(f"aligned map must be inverse depth, got {z_tilde.space.value}")
    pts.check_bounds(z_tilde)
    values = np.zeros(z_tilde.shape, dtype=np.float64)
    known = np.zeros(z_tilde.shape, dtype=bool)
    for p in pts:
        zt = z_tilde.values[p.v_row, p.u]
        if not z_tilde.valid[p.v_row, p.u] or zt <= 0:
            raise DomainError(
                f"aligned map is not positive at point pixel (u={p.u}, v={p.v_row})"
            )
        values[p.v_row, p.u] = (1.0 / p.depth_m) / zt
        known[p.v_row, p.u] = True
    return ScaleMap(values, known)


def jbu_densify(eps: ScaleMap, z_tilde: DepthRaster, params: JBUParams = JBUParams()) -> ScaleMap:
    """Joint bilateral upsampling of a sparse scale map guided by aligned depth.

    For every pixel p with at least one known neighbour q in the
    (2R+1)^2 window:

        out_p = sum_q eps_q * f(||p-q||) * g(|z_p - z_q|) / k_p

    with unnormalized Gaussian kernels f, g and k_p the sum of weights.
    The sum runs only over known pixels. Pixels without known neighbours
    (or with an invalid guide value) stay 0 and are later replaced by
    fill_default. The output's `filled` mask marks pixels that received a
    propagated value; `known` is carried over unchanged.
    """
    if eps.shape != z_tilde.shape:
        raise ShapeError(f"scale map {eps.shape} vs guide {z_tilde.shape}")
    r = params.window_radius
    inv2ss = 1.0 / (2.0 * params.sigma_spatial**2)
    inv2sr = 1.0 / (2.0 * params.sigma_range**2)

    h, w = eps.shape
    guide = z_tilde.values
    kmask = eps.known & z_tilde.valid
    vals = np.where(kmask, eps.values, 0.0)

    num = np.zeros((h, w), dtype=np.float64)
    den = np.zeros((h, w), dtype=np.float64)
    for dy in range(-r, r + 1):
        ys = slice(max(dy, 0), h + min(dy, 0))
        yd = slice(max(-dy, 0), h + min(-dy, 0))
        for dx in range(-r, r + 1):
            xs = slice(max(dx, 0), w + min(dx, 0))
            xd = slice(max(-dx, 0), w + min(-dx, 0))
            f = np.exp(-(dy * dy + dx * dx) * inv2ss)
            dz = guide[yd, xd] - guide[ys, xs]
            wgt = kmask[ys, xs] * f * np.exp(-(dz * dz) * inv2sr)
            num[yd, xd] += wgt * vals[ys, xs]
            den[yd, xd] += wgt

    ok = (den >= K_UNDERFLOW) & z_tilde.valid
    out = np.zeros((h, w), dtype=np.float64)
    np.divide(num, den, out=out, where=ok)
    # a measured point on an invalid guide pixel contributes nothing and is dropped
    return ScaleMap(out, eps.known & ok, filled=ok)


def fill_default(eps: ScaleMap) -> ScaleMap:
    """Replace every zero-valued pixel with the neutral factor 1.0."""
    out = np.where(eps.values == 0.0, 1.0, eps.values)
    return ScaleMap(out, eps.known.copy(), filled=eps.filled.copy())
