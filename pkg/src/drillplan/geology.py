"""Generative model of the synthetic geology.

A ground truth is a 2D grid of mineral thickness and grade. Thickness is
elevated inside graben bands (trapezoidal column strips interpolated from a
bottom-row to a top-row placement); grade is elevated inside geochemical
alteration domains (decagonal polygons). Fields are stationary GPs whose
mean switches with domain membership, independent across the in/out domain
populations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import gp

GRID_SHAPE = (32, 32)
WIDTH_FLOOR = 0.1  # clamp for rasterized widths and radii
N_POLY_VERTICES = 10

THICKNESS_MEAN_OUT = 1.0
THICKNESS_MEAN_IN = 7.5
GRADE_MEAN_OUT = 0.0
GRADE_MEAN_IN = 0.085
NOISE_STD = 0.001

GRABEN_START_MEAN, GRABEN_START_STD = 11.0, 6.0
GRABEN_WIDTH_MEAN, GRABEN_WIDTH_STD = 6.0, 2.0
GEOCHEM_CENTER_MEAN, GEOCHEM_CENTER_STD = 16.0, 8.0
GEOCHEM_RADIUS_MEAN, GEOCHEM_RADIUS_STD = 5.0, 2.5

GRABEN_PARAM_DIM = 4
GEOCHEM_PARAM_DIM = 2 + N_POLY_VERTICES


@dataclass(frozen=True)
class HypothesisSpec:
    """A structural scenario: how many grabens and geochemical domains."""

    id: int
    n_grabens: int
    n_geochem: int
    prior_prob: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.prior_prob <= 1.0):
            raise ValueError(f"prior_prob must be in [0,1], got {self.prior_prob}")
        if self.n_grabens < 0 or self.n_geochem < 0:
            raise ValueError("structure counts must be non-negative")

    @property
    def param_dim(self) -> int:
        return GRABEN_PARAM_DIM * self.n_grabens + GEOCHEM_PARAM_DIM * self.n_geochem


def default_hypotheses() -> tuple[HypothesisSpec, ...]:
    """The four standard scenarios: 1-2 grabens x 1-2 geochem domains."""
    combos = [(1, 1), (1, 2), (2, 1), (2, 2)]
    return tuple(
        HypothesisSpec(id=i + 1, n_grabens=g, n_geochem=c, prior_prob=0.25)
        for i, (g, c) in enumerate(combos)
    )


@dataclass(frozen=True)
class GeometryParams:
    """Raw (unclamped) geometry of grabens and geochemical domains.

    Stored as a flat parameter vector: per graben (bottom_start, bottom_width,
    top_start, top_width), then per geochemical domain (center_r, center_c,
    10 radii at evenly spaced angles). Clamping to the width floor happens
    only at rasterization so the parameter prior stays exactly Gaussian.
    """

    n_grabens: int
    n_geochem: int
    vector: tuple[float, ...]

    def __post_init__(self) -> None:
        expected = GRABEN_PARAM_DIM * self.n_grabens + GEOCHEM_PARAM_DIM * self.n_geochem
        if len(self.vector) != expected:
            raise ValueError(
                f"geometry vector has length {len(self.vector)}, expected {expected}"
            )

    @property
    def grabens(self) -> np.ndarray:
        """(n_grabens, 4) array of (bottom_start, bottom_width, top_start, top_width)."""
        end = GRABEN_PARAM_DIM * self.n_grabens
        return np.asarray(self.vector[:end], dtype=float).reshape(self.n_grabens, 4)

    @property
    def geochem_centers(self) -> np.ndarray:
        arr = self._geochem_block()
        return arr[:, :2]

    @property
    def geochem_radii(self) -> np.ndarray:
        arr = self._geochem_block()
        return arr[:, 2:]

    def _geochem_block(self) -> np.ndarray:
        start = GRABEN_PARAM_DIM * self.n_grabens
        return np.asarray(self.vector[start:], dtype=float).reshape(
            self.n_geochem, GEOCHEM_PARAM_DIM
        )

    @classmethod
    def from_vector(cls, n_grabens: int, n_geochem: int, vec: np.ndarray) -> "GeometryParams":
        return cls(n_grabens=n_grabens, n_geochem=n_geochem, vector=tuple(float(v) for v in vec))


@dataclass
class GeoModel:
    """A (possibly hidden) world state: fields plus domain masks on the grid."""

    thickness: np.ndarray
    grade: np.ndarray
    graben_mask: np.ndarray
    geochem_mask: np.ndarray
    hypothesis_id: int = 0

    def __post_init__(self) -> None:
        shape = self.thickness.shape
        for name in ("grade", "graben_mask", "geochem_mask"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} shape {getattr(self, name).shape} != {shape}")
        if not (np.all(np.isfinite(self.thickness)) and np.all(np.isfinite(self.grade))):
            raise ValueError("thickness and grade must be finite")
        self.graben_mask = self.graben_mask.astype(bool)
        self.geochem_mask = self.geochem_mask.astype(bool)

    @property
    def shape(self) -> tuple[int, int]:
        return self.thickness.shape


@dataclass(frozen=True)
class EconParams:
    """Economic model: cut-off grade is expressed in percent, grade fields
    are fractions, so the qualification threshold is cutoff_grade / 100."""

    cutoff_grade: float = 6.0
    extraction_cost: float = 35.0
    drill_cost: float = 0.1
    price_scale: float = 0.40

    def __post_init__(self) -> None:
        for name in ("cutoff_grade", "extraction_cost", "drill_cost", "price_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class GeologyModel:
    """Physical configuration shared by sampling, likelihoods and prediction."""

    grid_shape: tuple[int, int] = GRID_SHAPE
    kernel: gp.KernelParams = field(default_factory=gp.KernelParams)
    noise_std: float = NOISE_STD
    thickness_means: tuple[float, float] = (THICKNESS_MEAN_OUT, THICKNESS_MEAN_IN)
    grade_means: tuple[float, float] = (GRADE_MEAN_OUT, GRADE_MEAN_IN)

    def thickness_mean_grid(self, graben_mask: np.ndarray) -> np.ndarray:
        return np.where(graben_mask, self.thickness_means[1], self.thickness_means[0])

    def grade_mean_grid(self, geochem_mask: np.ndarray) -> np.ndarray:
        return np.where(geochem_mask, self.grade_means[1], self.grade_means[0])


def geometry_prior(h: HypothesisSpec) -> tuple[np.ndarray, np.ndarray]:
    """Mean and std vectors of the independent Gaussian geometry prior."""
    mean: list[float] = []
    std: list[float] = []
    for _ in range(h.n_grabens):
        mean += [GRABEN_START_MEAN, GRABEN_WIDTH_MEAN, GRABEN_START_MEAN, GRABEN_WIDTH_MEAN]
        std += [GRABEN_START_STD, GRABEN_WIDTH_STD, GRABEN_START_STD, GRABEN_WIDTH_STD]
    for _ in range(h.n_geochem):
        mean += [GEOCHEM_CENTER_MEAN, GEOCHEM_CENTER_MEAN] + [GEOCHEM_RADIUS_MEAN] * N_POLY_VERTICES
        std += [GEOCHEM_CENTER_STD, GEOCHEM_CENTER_STD] + [GEOCHEM_RADIUS_STD] * N_POLY_VERTICES
    return np.asarray(mean), np.asarray(std)


def sample_geometry(h: HypothesisSpec, rng: np.random.Generator) -> GeometryParams:
    """Draw graben and geochemical-domain parameters from their priors."""
    mean, std = geometry_prior(h)
    vec = rng.normal(mean, std)
    return GeometryParams.from_vector(h.n_grabens, h.n_geochem, vec)


_POLY_ANGLES = 2.0 * np.pi * np.arange(N_POLY_VERTICES) / N_POLY_VERTICES
_POLY_COS = np.cos(_POLY_ANGLES)
_POLY_SIN = np.sin(_POLY_ANGLES)


def _graben_membership(grabens: np.ndarray, points: np.ndarray, n_rows: int) -> np.ndarray:
    """Union membership of points (m, 2) in trapezoidal graben strips.

    Row r uses the column interval [start(r), start(r) + width(r)) where
    start/width interpolate linearly from the bottom row (r=0) to the top
    row (r=n_rows-1); widths are clamped to the floor.
    """
    if grabens.shape[0] == 0:
        return np.zeros(points.shape[0], dtype=bool)
    t = points[:, 0] / (n_rows - 1)  # (m,)
    cols = points[:, 1]
    inside = np.zeros(points.shape[0], dtype=bool)
    for b_start, b_width, t_start, t_width in grabens:
        start = b_start + t * (t_start - b_start)
        width = np.maximum(b_width + t * (t_width - b_width), WIDTH_FLOOR)
        inside |= (cols >= start) & (cols < start + width)
    return inside


def _points_in_polygon(points: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Even-odd (ray casting) point-in-polygon test, vectorized over points."""
    x, y = points[:, 0], points[:, 1]
    x0, y0 = verts[:, 0], verts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    crossing = (y0[None, :] <= y[:, None]) != (y1[None, :] <= y[:, None])
    dy = np.where(y1 - y0 == 0.0, 1.0, y1 - y0)
    t = (y[:, None] - y0[None, :]) / dy[None, :]
    xs = x0[None, :] + t * (x1 - x0)[None, :]
    hits = crossing & (x[:, None] < xs)
    return (hits.sum(axis=1) % 2).astype(bool)


def _geochem_membership(
    centers: np.ndarray, radii: np.ndarray, points: np.ndarray
) -> np.ndarray:
    """Union membership of points in the decagonal geochemical domains."""
    inside = np.zeros(points.shape[0], dtype=bool)
    for center, r in zip(centers, radii):
        rr = np.maximum(r, WIDTH_FLOOR)
        verts = np.column_stack(
            [center[0] + rr * _POLY_COS, center[1] + rr * _POLY_SIN]
        )
        inside |= _points_in_polygon(points, verts)
    return inside


def masks_at_points(
    geom: GeometryParams, points: np.ndarray, grid_shape: tuple[int, int] = GRID_SHAPE
) -> tuple[np.ndarray, np.ndarray]:
    """(graben, geochem) membership of the given (m, 2) cell coordinates."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    grab = _graben_membership(geom.grabens, points, grid_shape[0])
    chem = _geochem_membership(geom.geochem_centers, geom.geochem_radii, points)
    return grab, chem


def rasterize_graben(
    geom: GeometryParams, grid_shape: tuple[int, int] = GRID_SHAPE
) -> np.ndarray:
    """Boolean grid of the union of graben strips."""
    pts = gp.grid_locations(grid_shape)
    return _graben_membership(geom.grabens, pts, grid_shape[0]).reshape(grid_shape)


def rasterize_geochem(
    geom: GeometryParams, grid_shape: tuple[int, int] = GRID_SHAPE
) -> np.ndarray:
    """Boolean grid of the union of geochemical domains."""
    pts = gp.grid_locations(grid_shape)
    return _geochem_membership(
        geom.geochem_centers, geom.geochem_radii, pts
    ).reshape(grid_shape)


def compose_field(
    mask: np.ndarray,
    mean_out: float,
    mean_in: float,
    draw_out: np.ndarray,
    draw_in: np.ndarray,
) -> np.ndarray:
    """Mean-switched field with independent in/out fluctuations."""
    return np.where(mask, mean_in + draw_in, mean_out + draw_out)


def sample_truth(
    h: HypothesisSpec,
    rng: np.random.Generator,
    model: GeologyModel | None = None,
) -> GeoModel:
    """Sample a full ground truth: geometry, masks, then both fields.

    The in-domain and out-of-domain populations of each field are sampled as
    independent stationary GPs (values are spatially independent across the
    domain boundary).
    """
    model = model or GeologyModel()
    geom = sample_geometry(h, rng)
    return realization_from_geometry(geom, rng, model, hypothesis_id=h.id)


def realization_from_geometry(
    geom: GeometryParams,
    rng: np.random.Generator,
    model: GeologyModel | None = None,
    hypothesis_id: int = 0,
) -> GeoModel:
    """Draw unconditioned fields for a fixed geometry."""
    model = model or GeologyModel()
    shape = model.grid_shape
    grab = rasterize_graben(geom, shape)
    chem = rasterize_geochem(geom, shape)
    draws = gp.draw_grid_fields(shape, model.kernel, rng, 4)
    thickness = compose_field(
        grab, model.thickness_means[0], model.thickness_means[1], draws[0], draws[1]
    )
    grade = compose_field(
        chem, model.grade_means[0], model.grade_means[1], draws[2], draws[3]
    )
    return GeoModel(
        thickness=thickness,
        grade=grade,
        graben_mask=grab,
        geochem_mask=chem,
        hypothesis_id=hypothesis_id,
    )


def profit(m: GeoModel, e: EconParams, n_holes: int = 0) -> float:
    """Economic value of a ground truth.

    Cells qualify when grade >= cutoff_grade/100; revenue is price_scale
    times the summed thickness*grade over qualifying cells, less the fixed
    extraction cost and per-hole drill costs.
    """
    qualifies = m.grade >= e.cutoff_grade / 100.0
    revenue = e.price_scale * float(np.sum(m.thickness[qualifies] * m.grade[qualifies]))
    return revenue - e.extraction_cost - n_holes * e.drill_cost
