"""Empirical semivariogram maps on regular grids.

    gamma(h) = 1 / (2 N(h)) * sum over observed pairs (Z(s) - Z(s+h))**2

Lags are indexed ``values[h_y + K, h_x + K]``.  Only half of the lag plane is
computed; the other half is its mirror, so ``gamma(h) == gamma(-h)`` exactly.
Squared differences are summed in sorted order, which makes each entry a
function of the multiset of pairs alone (point reflection of the field leaves
the map bitwise unchanged).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .grids import FieldGrid

NV_MAX_LAG = 6


@dataclass
class VariogramMap:
    values: np.ndarray  # (2K+1, 2K+1), NaN where no pairs
    pair_counts: np.ndarray
    K: int

    @property
    def missing(self) -> np.ndarray:
        return self.pair_counts == 0

    def at(self, hx: int, hy: int) -> float:
        return float(self.values[hy + self.K, hx + self.K])


def _half_plane_lags(K: int) -> list[tuple[int, int]]:
    lags = [(hx, 0) for hx in range(1, K + 1)]
    lags += [(hx, hy) for hy in range(1, K + 1) for hx in range(-K, K + 1)]
    return lags


def _pair_slices(n: int, h: int) -> tuple[slice, slice]:
    # index ranges for s and s + h along one axis of length n
    if h >= 0:
        return slice(0, n - h), slice(h, n)
    return slice(-h, n), slice(0, n + h)


def variogram_maps(values: np.ndarray, missing: np.ndarray | None = None, K: int = NV_MAX_LAG):
    """Batched maps for fields of shape (N, height, width).

    Returns ``(values, pair_counts)`` with shapes (N, 2K+1, 2K+1).
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 3:
        raise DomainError("expected a stack of fields with shape (N, height, width)")
    if K < 1:
        raise DomainError("max lag K must be >= 1")
    N, H, W = values.shape
    obs = np.isfinite(values) if missing is None else ~np.asarray(missing, dtype=bool) & np.isfinite(values)
    z = np.where(obs, values, 0.0)
    size = 2 * K + 1
    gam = np.full((N, size, size), np.nan)
    cnt = np.zeros((N, size, size), dtype=np.int64)
    cnt[:, K, K] = obs.reshape(N, -1).sum(axis=1)
    gam[:, K, K] = np.where(cnt[:, K, K] > 0, 0.0, np.nan)
    for hx, hy in _half_plane_lags(K):
        if abs(hx) >= W or abs(hy) >= H:
            continue
        ys, ys2 = _pair_slices(H, hy)
        xs, xs2 = _pair_slices(W, hx)
        both = (obs[:, ys, xs] & obs[:, ys2, xs2]).reshape(N, -1)
        d = (z[:, ys, xs] - z[:, ys2, xs2]).reshape(N, -1)
        sq = np.where(both, d * d, 0.0)
        s = np.sort(sq, axis=1).sum(axis=1)
        n = both.sum(axis=1)
        g = np.full(N, np.nan)
        np.divide(s, 2.0 * n, out=g, where=n > 0)
        for (ix, iy) in ((hx, hy), (-hx, -hy)):
            gam[:, iy + K, ix + K] = g
            cnt[:, iy + K, ix + K] = n
    return gam, cnt


def variogram_map(field: FieldGrid, K: int = NV_MAX_LAG) -> VariogramMap:
    """Semivariogram map of one field, skipping missing cells."""
    if field.n_observed < 2:
        raise DomainError("variogram map needs at least two observed cells")
    g, c = variogram_maps(field.values[None], field.missing[None], K)
    return VariogramMap(g[0], c[0], K)


def fill_missing_lags(values: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Replace lags without pairs by the mean of the observed map entries.

    Works on a single map or a stack with leading batch axis.
    """
    values = np.array(values, dtype=float)
    miss = counts == 0
    if not miss.any():
        return values
    flat_v = values.reshape(-1, values.shape[-2] * values.shape[-1])
    flat_m = miss.reshape(flat_v.shape)
    for v, m in zip(flat_v, flat_m):
        if m.any():
            v[m] = v[~m].mean()
    return flat_v.reshape(values.shape)


def varmap_image(vmap: VariogramMap) -> np.ndarray:
    """Dense 13 x 13 network input; missing lags take the observed-entry mean."""
    if vmap.K != NV_MAX_LAG:
        raise DomainError(f"NV input requires K = {NV_MAX_LAG}, got {vmap.K}")
    return fill_missing_lags(vmap.values, vmap.pair_counts)


def write_varmap_csv(vmap: VariogramMap, path_or_fh) -> None:
    """One row per h_y from -K to K, one column per h_x from -K to K."""
    own = not hasattr(path_or_fh, "write")
    fh = open(path_or_fh, "w", newline="") if own else path_or_fh
    try:
        w = csv.writer(fh, lineterminator="\n")
        for row in vmap.values:
            w.writerow(["NaN" if not math.isfinite(v) else repr(float(v)) for v in row])
    finally:
        if own:
            fh.close()


def read_varmap_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(t) for t in r] for r in csv.reader(fh) if r]
    arr = np.array(rows)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] % 2 == 0:
        raise DomainError(f"{path}: not a square odd-sized variogram map")
    return arr
