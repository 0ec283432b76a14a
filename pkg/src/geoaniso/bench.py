"""Benchmark harness, AIC comparison and sliding-window scans.

All outputs are tidy rows written as CSV (floats via ``repr``, so reading a
file back reproduces the values exactly).  Work items run serially or on a
process pool; results are always returned in work-item order.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Callable, Iterable, Sequence

import numpy as np

from .covariance import AnisotropyParams, MaternSpec, canonical_alpha
from .errors import DomainError, GeoanisoError
from .grids import FieldGrid, GridDomain
from .likelihood import SearchConfig, fit_ml, fit_ml_isotropic
from .models import ModelArtifact, estimate
from .simulate import simulate_stream, validation_param_grid

logger = logging.getLogger(__name__)

METHODS = ("ML", "NF", "NV")
DENSE_REGION = {"alpha": (0.0, math.pi), "lambda": (0.3, 0.7), "theta": (1.0, 3.0)}


def circular_alpha_error(true, est):
    """Angular distance between orientations identified modulo pi; lies in [0, pi/2]."""
    d = np.mod(np.asarray(est, dtype=float) - np.asarray(true, dtype=float), math.pi)
    err = np.minimum(d, math.pi - d)
    return float(err) if err.ndim == 0 else err


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "NaN" if math.isnan(v) else repr(v)
    return str(v)


def write_rows(path_or_fh, cls, rows: Iterable, exclude: Sequence[str] = ()) -> None:
    """Write dataclass rows as CSV with a header; ``exclude`` drops columns."""
    names = [f.name for f in fields(cls) if f.name not in exclude]
    own = isinstance(path_or_fh, (str, bytes)) or hasattr(path_or_fh, "__fspath__")
    fh = open(path_or_fh, "w", newline="") if own else path_or_fh
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in rows:
            w.writerow([_cell(getattr(r, n)) for n in names])
    finally:
        if own:
            fh.close()


def _parse(tp, tok: str):
    if tp in (bool, "bool"):
        return tok == "1"
    if tp in (int, "int"):
        return int(tok)
    if tp in (float, "float"):
        return float(tok)
    return tok


def read_rows(path, cls) -> list:
    types = {f.name: f.type for f in fields(cls)}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [cls(**{k: _parse(types[k], v) for k, v in row.items()}) for row in reader]


# ---------------------------------------------------------------------------
# records and binned summaries
# ---------------------------------------------------------------------------


@dataclass
class EstimateRecord:
    method: str
    config_index: int
    replicate: int
    true_alpha: float
    true_lambda: float
    true_theta: float
    est_alpha: float
    est_lambda: float
    est_theta: float
    est_sigma2: float  # NaN for the network methods
    alpha_error: float  # circular
    converged: bool
    out_of_domain: bool
    wall_time: float = 0.0


@dataclass
class BinSummary:
    parameter: str
    bin_index: int
    bin_center: float
    method: str
    count: int
    bias: float
    std: float


def _estimate_one(method: str, field: FieldGrid, artifact: ModelArtifact | None, spec: MaternSpec,
                  search: SearchConfig):
    """Returns (alpha, lambda, theta, sigma2, converged, out_of_domain)."""
    if method == "ML":
        r = fit_ml(field, spec, search)
        p = r.params
        return p.alpha, p.lam, p.theta, p.sigma2, r.converged, False
    if artifact is None:
        raise DomainError(f"method {method} needs a trained model artifact")
    e = estimate(artifact, field)
    return e.alpha, e.lam, e.theta, math.nan, True, e.out_of_domain


def _bench_item(args) -> EstimateRecord:
    method, ci, rep, cfg, seed, domain, spec, search, artifact = args
    alpha, lam, theta = cfg
    field = simulate_stream(domain, AnisotropyParams(alpha, lam, theta, 1.0), spec, seed, ci, rep)
    t0 = time.perf_counter()
    a, l, t, s2, conv, ood = _estimate_one(method, field, artifact, spec, search)
    dt = time.perf_counter() - t0
    return EstimateRecord(method, ci, rep, alpha, lam, theta, a, l, t, s2,
                          circular_alpha_error(alpha, a), conv, ood, dt)


def _run(func: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=max(1, len(items) // (4 * workers))))


def benchmark(methods: Sequence[str], configs: Sequence[tuple], replicates: int, seed: int,
              artifacts: dict | None = None, domain: GridDomain = GridDomain(),
              spec: MaternSpec = MaternSpec(), search: SearchConfig = SearchConfig(),
              workers: int = 1) -> list[EstimateRecord]:
    """Estimate every (config, replicate) field with every method.

    The field for config ``i`` and replicate ``r`` comes from stream
    ``(seed, i, r)``, so all methods see identical data.  Records are ordered
    by method, then config, then replicate.
    """
    artifacts = artifacts or {}
    for m in methods:
        if m not in METHODS:
            raise DomainError(f"unknown method {m!r}")
        if m != "ML" and m not in artifacts:
            raise DomainError(f"method {m} needs a model artifact")
    records = []
    for m in methods:
        items = [(m, i, r, tuple(cfg), seed, domain, spec, search, artifacts.get(m))
                 for i, cfg in enumerate(configs) for r in range(replicates)]
        # network inference is cheap; keep it in-process
        records.extend(_run(_bench_item, items, workers if m == "ML" else 1))
    return records


def bin_summaries(records: Sequence[EstimateRecord], n_bins: int = 10,
                  region: dict = DENSE_REGION) -> list[BinSummary]:
    """Bias and standard deviation of (estimate - truth), binned by true value.

    Bins are equal-width over each dense-region interval; alpha errors are
    signed differences modulo pi.  The standard deviation uses ddof = 1
    (0 when a bin holds a single record).
    """
    out = []
    methods = list(dict.fromkeys(r.method for r in records))
    for name, (lo, hi) in region.items():
        width = (hi - lo) / n_bins
        for m in methods:
            rows = [r for r in records if r.method == m]
            truth = np.array([getattr(r, f"true_{name}") for r in rows])
            err = np.array([getattr(r, f"est_{name}") for r in rows]) - truth
            if name == "alpha":
                # signed difference modulo pi, in [-pi/2, pi/2)
                err = np.mod(err + math.pi / 2, math.pi) - math.pi / 2
            b = np.floor((truth - lo) / width).astype(int)
            for k in range(n_bins):
                e = err[b == k]
                if len(e) == 0:
                    continue
                std = float(e.std(ddof=1)) if len(e) > 1 else 0.0
                out.append(BinSummary(name, k, lo + (k + 0.5) * width, m, len(e), float(e.mean()), std))
    return out


def sample_dense_configs(n: int, seed: int) -> list[tuple]:
    """Seeded configurations drawn from the validation grid (dense region)."""
    grid = validation_param_grid()
    return [grid.config(int(i)) for i in grid.subsample(n, seed)]


# ---------------------------------------------------------------------------
# AIC experiment
# ---------------------------------------------------------------------------


@dataclass
class AICRow:
    lam: float
    replicate: int
    aic_isotropic: float
    aic_anisotropic: float
    anisotropic_preferred: bool
    error: str = ""


def _aic_item(args) -> AICRow:
    lam, li, rep, seed, alpha, theta, domain, spec, search = args
    field = simulate_stream(domain, AnisotropyParams(alpha, lam, theta, 1.0), spec, seed, li, rep)
    try:
        iso = fit_ml_isotropic(field, spec, search)
        ani = fit_ml(field, spec, search)
    except GeoanisoError as exc:
        return AICRow(lam, rep, math.nan, math.nan, False, str(exc))
    return AICRow(lam, rep, iso.aic, ani.aic, bool(ani.aic < iso.aic))


def aic_experiment(lambdas: Sequence[float] = (0.25, 0.5, 0.75), replicates: int = 100, seed: int = 0,
                   alpha: float = math.pi / 4, theta: float = 2.0, domain: GridDomain = GridDomain(),
                   spec: MaternSpec = MaternSpec(), search: SearchConfig = SearchConfig(),
                   workers: int = 1) -> list[AICRow]:
    """Paired isotropic/anisotropic AIC per replicate; field (l, r) uses stream (seed, l, r)."""
    items = [(float(lam), li, r, seed, alpha, theta, domain, spec, search)
             for li, lam in enumerate(lambdas) for r in range(replicates)]
    return _run(_aic_item, items, workers)


def aic_win_fractions(rows: Sequence[AICRow]) -> dict:
    out = {}
    for lam in dict.fromkeys(r.lam for r in rows):
        sel = [r for r in rows if r.lam == lam and not r.error]
        out[lam] = sum(r.anisotropic_preferred for r in sel) / len(sel) if sel else math.nan
    return out


# ---------------------------------------------------------------------------
# window scan
# ---------------------------------------------------------------------------


@dataclass
class ScanPixel:
    row: int
    col: int
    status: str  # ok | boundary | missing | constant | failed
    alpha: float
    lam: float
    theta: float
    out_of_domain: bool
    missing_fraction: float


def window_bounds(window: int) -> tuple[int, int]:
    """Offsets (before, after) of a window around its center pixel.

    An even window of 16 spans rows p-7 .. p+8.
    """
    if window < 2:
        raise DomainError("window must be at least 2")
    return (window - 1) // 2, window // 2


def standardize_window(win: FieldGrid) -> FieldGrid | None:
    """Subtract the observed mean and divide by the observed (ddof 0) std; None if constant."""
    obs = win.values[~win.missing]
    mu = obs.mean()
    sd = obs.std()
    if not sd > 0.0:
        return None
    vals = np.where(win.missing, np.nan, (win.values - mu) / sd)
    return FieldGrid(vals, win.missing.copy())


def _scan_item(args) -> ScanPixel:
    r, c, method, win_vals, win_miss, artifact, spec, search, max_missing = args
    win = FieldGrid(win_vals, win_miss)
    frac = float(win.missing.mean())
    if method in ("ML", "NF") and frac > 0.0:
        return ScanPixel(r, c, "missing", math.nan, math.nan, math.nan, False, frac)
    if method == "NV" and frac > max_missing:
        return ScanPixel(r, c, "missing", math.nan, math.nan, math.nan, False, frac)
    std = standardize_window(win)
    if std is None:
        return ScanPixel(r, c, "constant", math.nan, math.nan, math.nan, False, frac)
    try:
        a, l, t, _, conv, ood = _estimate_one(method, std, artifact, spec, search)
    except GeoanisoError as exc:
        logger.warning("pixel (%d, %d): %s", r, c, exc)
        return ScanPixel(r, c, "failed", math.nan, math.nan, math.nan, False, frac)
    return ScanPixel(r, c, "ok", a, l, t, ood, frac)


def window_scan(raster: FieldGrid, method: str, artifact: ModelArtifact | None = None, window: int = 16,
                spec: MaternSpec = MaternSpec(), search: SearchConfig = SearchConfig(),
                nv_max_missing: float = 0.2, workers: int = 1) -> list[ScanPixel]:
    """Estimate parameters on the standardized window around every pixel.

    Pixels whose window leaves the raster are reported with status
    ``boundary``; a raster smaller than the window yields no rows.  ML and NF need fully observed windows; NV tolerates up to
    ``nv_max_missing`` missing cells.  Output is in row-major pixel order.
    """
    method = method.upper()
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}")
    if method != "ML" and artifact is None:
        raise DomainError(f"method {method} needs a model artifact")
    if method == "NF" and window != 16:
        raise DomainError("NF works on 16 x 16 windows only")
    before, after = window_bounds(window)
    H, W = raster.shape
    if H < window or W < window:
        logger.warning("raster %dx%d is smaller than the %d-pixel window; nothing to scan", H, W, window)
        return []
    pixels: list = []
    items = []
    for r in range(H):
        for c in range(W):
            if r - before < 0 or c - before < 0 or r + after >= H or c + after >= W:
                pixels.append(ScanPixel(r, c, "boundary", math.nan, math.nan, math.nan, False, math.nan))
                continue
            r0, c0 = r - before, c - before
            items.append((r, c, method,
                          raster.values[r0:r0 + window, c0:c0 + window].copy(),
                          raster.missing[r0:r0 + window, c0:c0 + window].copy(),
                          artifact, spec, search, nv_max_missing))
            pixels.append(None)
    results = iter(_run(_scan_item, items, workers if method == "ML" else 1))
    return [p if p is not None else next(results) for p in pixels]


def scan_arrays(pixels: Sequence[ScanPixel], shape: tuple) -> dict:
    """Per-parameter rasters (NaN where no estimate) from scan rows."""
    out = {k: np.full(shape, np.nan) for k in ("alpha", "lam", "theta")}
    for p in pixels:
        if p.status == "ok":
            out["alpha"][p.row, p.col] = p.alpha
            out["lam"][p.row, p.col] = p.lam
            out["theta"][p.row, p.col] = p.theta
    return out


def modal_alpha(alphas: np.ndarray, bins: int = 36) -> float:
    """Center of the most populated orientation bin over [0, pi)."""
    a = np.mod(np.asarray(alphas, dtype=float), math.pi)
    a = a[np.isfinite(a)]
    counts, edges = np.histogram(a, bins=bins, range=(0.0, math.pi))
    k = int(np.argmax(counts))
    return canonical_alpha(0.5 * (edges[k] + edges[k + 1]))


def record_dicts(records: Iterable) -> list[dict]:
    return [asdict(r) for r in records]
