"""Gaussian random field simulation and labeled dataset generation.

Fields are drawn exactly by dense Cholesky: ``z = L @ eps`` with
``L L^T = sigma2 * R``.  Every draw gets its own Philox stream keyed by
``(seed, *keys)`` through :class:`numpy.random.SeedSequence`, so any
(configuration, replicate) pair can be regenerated in isolation.  Normals come
from numpy's ziggurat sampler.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .covariance import AnisotropyParams, MaternSpec, SiteGeometry, cholesky_lower, correlation_matrix
from .errors import CholeskyError, DomainError, SimulationError
from .grids import FieldGrid, GridDomain

logger = logging.getLogger(__name__)

DATASET_FORMAT = "geoaniso-dataset/1"


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    if seed < 0 or any(k < 0 for k in keys):
        raise DomainError("seeds and stream keys must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


@lru_cache(maxsize=8)
def grid_geometry(domain: GridDomain) -> SiteGeometry:
    return SiteGeometry(domain.sites())


@lru_cache(maxsize=64)
def _factor(domain: GridDomain, params: AnisotropyParams, spec: MaternSpec) -> np.ndarray:
    R = correlation_matrix(grid_geometry(domain), params, spec)
    try:
        L = cholesky_lower(R)
    except CholeskyError as exc:
        raise SimulationError(f"cannot factor covariance for {params}: {exc}") from None
    return L * math.sqrt(params.sigma2)


def cholesky_factor(domain: GridDomain, params: AnisotropyParams, spec: MaternSpec = MaternSpec()):
    """Cached lower factor of the full covariance matrix over ``domain``."""
    return _factor(domain, params, spec)


def _draw(domain: GridDomain, L: np.ndarray, rng: np.random.Generator) -> FieldGrid:
    eps = rng.standard_normal(domain.n_sites)
    return FieldGrid((L @ eps).reshape(domain.height, domain.width))


def simulate_grf(
    domain: GridDomain, params: AnisotropyParams, spec: MaternSpec = MaternSpec(), seed: int = 0
) -> FieldGrid:
    """One zero-mean realization; bit-identical for equal arguments."""
    return _draw(domain, cholesky_factor(domain, params, spec), rng_for(seed))


def simulate_stream(domain: GridDomain, params: AnisotropyParams, spec: MaternSpec, seed: int,
                    *keys: int) -> FieldGrid:
    """Realization drawn from stream ``(seed, *keys)``; used by dataset and benchmark runs."""
    return _draw(domain, cholesky_factor(domain, params, spec), rng_for(seed, *keys))


def simulate_many(
    domain: GridDomain, params: AnisotropyParams, spec: MaternSpec, seeds: Iterable[int]
) -> np.ndarray:
    """Stack of realizations, shape (len(seeds), height, width).

    Row ``k`` equals ``simulate_grf(..., seed=seeds[k]).values``.
    """
    L = cholesky_factor(domain, params, spec)
    return np.stack([_draw(domain, L, rng_for(s)).values for s in seeds])


@dataclass(frozen=True)
class ParamGrid:
    alphas: tuple
    lambdas: tuple
    thetas: tuple

    def __post_init__(self):
        for a in self.alphas:
            if not (0.0 <= a < math.pi):
                raise DomainError(f"alpha {a} outside [0, pi)")
        for l in self.lambdas:
            if not (0.0 < l <= 1.0):
                raise DomainError(f"lambda {l} outside (0, 1]")
        for t in self.thetas:
            if not t > 0.0:
                raise DomainError(f"theta {t} not positive")

    @property
    def size(self) -> int:
        return len(self.alphas) * len(self.lambdas) * len(self.thetas)

    def __len__(self) -> int:
        return self.size

    def config(self, index: int) -> tuple[float, float, float]:
        """(alpha, lambda, theta) of configuration ``index``; alpha varies slowest."""
        if not 0 <= index < self.size:
            raise IndexError(index)
        nl, nt = len(self.lambdas), len(self.thetas)
        ia, rest = divmod(index, nl * nt)
        il, it = divmod(rest, nt)
        return (self.alphas[ia], self.lambdas[il], self.thetas[it])

    def subsample(self, n: int, seed: int) -> np.ndarray:
        """Sorted, seeded uniform sample of ``n`` distinct configuration indices."""
        if n >= self.size:
            return np.arange(self.size)
        idx = rng_for(seed, 0xC0F).choice(self.size, size=n, replace=False)
        return np.sort(idx)

    def describe(self) -> dict:
        return {
            "n_alpha": len(self.alphas),
            "n_lambda": len(self.lambdas),
            "n_theta": len(self.thetas),
            "alpha_range": [self.alphas[0], self.alphas[-1]],
            "lambda_range": [self.lambdas[0], self.lambdas[-1]],
            "theta_range": [self.thetas[0], self.thetas[-1]],
        }


def _half_open(a: float, b: float, k: int) -> list[float]:
    return [a + (b - a) * i / k for i in range(k)]


def training_param_grid() -> ParamGrid:
    """The 20 x 150 x 150 training design.

    Segment conventions: ``[a, b)`` with k points is ``a + (b-a) i/k``;
    the open ``(0, 0.3)`` uses ``0.3 i/26`` for i = 1..25; closed ``[a, b]``
    segments are inclusive linspaces.
    """
    alphas = [k * math.pi / 20 for k in range(20)]
    lambdas = (
        [0.3 * i / 26 for i in range(1, 26)]
        + _half_open(0.3, 0.7, 100)
        + list(np.linspace(0.7, 1.0, 25))
    )
    thetas = _half_open(0.02, 1.0, 25) + _half_open(1.0, 3.0, 100) + list(np.linspace(3.0, 5.0, 25))
    return ParamGrid(tuple(alphas), tuple(float(v) for v in lambdas), tuple(float(v) for v in thetas))


def validation_param_grid() -> ParamGrid:
    """20 x 34 x 34 = 23,120 configurations inside the dense region.

    Points sit at cell midpoints.  Alpha values fall halfway between training
    angles, so no configuration coincides with a training configuration.
    """
    alphas = [(k + 0.5) * math.pi / 20 for k in range(20)]
    lambdas = [0.3 + 0.4 * (i + 0.5) / 34 for i in range(34)]
    thetas = [1.0 + 2.0 * (i + 0.5) / 34 for i in range(34)]
    return ParamGrid(tuple(alphas), tuple(lambdas), tuple(thetas))


@dataclass
class LabeledSample:
    field: FieldGrid
    label: tuple[float, float, float]
    config_index: int
    replicate: int


def generate_dataset(
    grid: ParamGrid,
    domain: GridDomain = GridDomain(),
    spec: MaternSpec = MaternSpec(),
    fields_per_config: int = 1,
    base_seed: int = 0,
    configs: Iterable[int] | None = None,
) -> Iterator[LabeledSample]:
    """Yield labeled realizations in (config, replicate) order.

    The draw for (config ``c``, replicate ``r``) uses stream ``(base_seed, c, r)``.
    ``configs`` restricts generation to a subset of configuration indices.
    """
    if fields_per_config < 1:
        raise DomainError("fields_per_config must be >= 1")
    indices = range(grid.size) if configs is None else configs
    for c in indices:
        c = int(c)
        alpha, lam, theta = grid.config(c)
        params = AnisotropyParams(alpha, lam, theta, 1.0)
        try:
            L = _factor.__wrapped__(domain, params, spec)
        except SimulationError as exc:
            raise SimulationError(f"config {c} (alpha={alpha}, lambda={lam}, theta={theta}): {exc}") from None
        for r in range(fields_per_config):
            yield LabeledSample(_draw(domain, L, rng_for(base_seed, c, r)), (alpha, lam, theta), c, r)


# ---------------------------------------------------------------------------
# dataset files: little-endian float64 records of (cells..., alpha, lambda, theta)
# plus a JSON sidecar manifest
# ---------------------------------------------------------------------------


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def write_dataset(path, samples: Iterable[LabeledSample], domain: GridDomain, manifest: dict) -> int:
    """Stream samples to ``path``; returns the record count."""
    n = 0
    with open(path, "wb") as fh:
        for s in samples:
            if s.field.shape != (domain.height, domain.width):
                raise DomainError(f"sample shape {s.field.shape} does not match domain")
            rec = np.concatenate([s.field.values.ravel(), np.asarray(s.label, dtype=float)])
            fh.write(rec.astype("<f8").tobytes())
            n += 1
    meta = {
        "format": DATASET_FORMAT,
        "byte_order": "little",
        "dtype": "float64",
        "record_layout": f"{domain.n_sites} field values (row-major, x fastest) then alpha, lambda, theta",
        "records": n,
        "width": domain.width,
        "height": domain.height,
        **manifest,
    }
    manifest_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return n


def read_dataset(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Load a dataset: fields (N, height, width), labels (N, 3) and its manifest."""
    meta = json.loads(manifest_path(path).read_text())
    if meta.get("format") != DATASET_FORMAT:
        raise DomainError(f"{path}: unknown dataset format {meta.get('format')!r}")
    h, w = meta["height"], meta["width"]
    raw = np.fromfile(path, dtype="<f8")
    rec = h * w + 3
    if raw.size != meta["records"] * rec:
        raise DomainError(f"{path}: expected {meta['records']} records, file holds {raw.size / rec:g}")
    raw = raw.reshape(-1, rec).astype(float)
    return raw[:, : h * w].reshape(-1, h, w), raw[:, h * w:].copy(), meta
