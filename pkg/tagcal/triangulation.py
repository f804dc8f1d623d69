"""Conical AoA error regions as TINs and their pairwise intersection tests.

Each AoA path becomes a cone with its apex at the locator, tessellated as an
apex fan plus a far cap over twelve boundary vertices. For every locator pair
and every combination of their two paths, the twelve apex->vertex edges of one
cone are tested against the faces of the other: 4 combinations x 12 edges = 48
tests per pair, 288 for four locators. Hits are merged into candidate regions.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Final, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .core import Point3

logger = logging.getLogger(__name__)

DEFAULT_HALF_ANGLE: Final[float] = 6.0
DEFAULT_VERTICES: Final[int] = 12
BARYCENTRIC_EPS: Final[float] = 1e-9
CLUSTER_RADIUS: Final[float] = 0.5
_MIN_TRIANGLE_AREA: Final[float] = 1e-12
_PARALLEL_EPS: Final[float] = 1e-12


class TriangulationError(ValueError):
    """Raised for degenerate cone or triangle input."""


@dataclass(frozen=True)
class ConicalPathRegion:
    apex: np.ndarray
    axis: np.ndarray
    half_angle: float
    max_range: float
    vertices: np.ndarray
    faces: np.ndarray

    def edges(self) -> np.ndarray:
        """Apex->vertex boundary segments, shape (n_vertices, 2, 3)."""

        starts = np.broadcast_to(self.apex, self.vertices.shape)
        return np.stack([starts, self.vertices], axis=1)

    def contains(self, point: Point3 | np.ndarray, tol: float = 1e-6) -> bool:
        p = point.as_array() if isinstance(point, Point3) else np.asarray(point)
        offset = p - self.apex
        along = float(offset @ self.axis)
        if along < -tol or along > self.max_range + tol:
            return False
        radial = float(np.linalg.norm(offset - along * self.axis))
        return radial <= max(along, 0.0) * math.tan(math.radians(self.half_angle)) + tol


@dataclass(frozen=True)
class CandidateRegion:
    members: Tuple[Point3, ...]
    overlap_count: int
    centroid: Point3
    pairs: frozenset[Tuple[str, str]]


@dataclass(frozen=True)
class EdgeTest:
    pair: Tuple[str, str]
    combo: Tuple[int, int]
    edge: int
    hits: Tuple[Point3, ...]


def build_cone(
    anchor: Point3,
    azimuth: float,
    half_angle: float = DEFAULT_HALF_ANGLE,
    max_range: float = 10.0,
    n_vertices: int = DEFAULT_VERTICES,
) -> ConicalPathRegion:
    """Cone about the horizontal azimuth ``azimuth`` (0 degrees = +x)."""

    if not 0.0 < half_angle < 90.0:
        raise TriangulationError(f"half_angle must be in (0, 90), got {half_angle}")
    if max_range <= 0:
        raise TriangulationError(f"max_range must be positive, got {max_range}")
    if n_vertices < 3:
        raise TriangulationError("A cone needs at least 3 boundary vertices")

    apex = anchor.as_array()
    phi = math.radians(azimuth)
    axis = np.array([math.cos(phi), math.sin(phi), 0.0])
    side = np.array([-math.sin(phi), math.cos(phi), 0.0])
    up = np.array([0.0, 0.0, 1.0])
    radius = max_range * math.tan(math.radians(half_angle))
    angles = 2.0 * np.pi * np.arange(n_vertices) / n_vertices
    ring = np.cos(angles)[:, None] * side + np.sin(angles)[:, None] * up
    vertices = apex + max_range * axis + radius * ring

    triangles = [
        (apex, vertices[k], vertices[(k + 1) % n_vertices]) for k in range(n_vertices)
    ]
    triangles += [
        (vertices[0], vertices[k], vertices[k + 1]) for k in range(1, n_vertices - 1)
    ]
    interior = apex + 0.5 * max_range * axis
    faces = []
    for a, b, c in triangles:
        normal = np.cross(b - a, c - a)
        # clockwise seen from outside: normal points into the cone
        if normal @ ((a + b + c) / 3.0 - interior) > 0:
            b, c = c, b
        faces.append((a, b, c))
    return ConicalPathRegion(
        apex=apex,
        axis=axis,
        half_angle=half_angle,
        max_range=max_range,
        vertices=vertices,
        faces=np.array(faces),
    )


def _intersect(
    p0: np.ndarray, p1: np.ndarray, triangles: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Segments (..., 3) against triangles (..., 3, 3), broadcast together.

    Returns ``(hit, q)`` where ``q`` is the plane crossing point. Barycentric
    coordinates use u = A->B, v = A->C, w = A->Q.
    """

    a = triangles[..., 0, :]
    u = triangles[..., 1, :] - a
    v = triangles[..., 2, :] - a
    normal = np.cross(u, v)
    direction = p1 - p0
    denom = np.einsum("...i,...i->...", normal, direction)
    scale = np.linalg.norm(normal, axis=-1) * np.linalg.norm(direction, axis=-1)
    parallel = np.abs(denom) <= _PARALLEL_EPS * np.maximum(scale, 1e-300)
    safe = np.where(parallel, 1.0, denom)
    r = np.einsum("...i,...i->...", normal, a - p0) / safe
    crosses = (r >= -BARYCENTRIC_EPS) & (r <= 1.0 + BARYCENTRIC_EPS)
    q = p0 + r[..., None] * direction
    w = q - a

    uu = np.einsum("...i,...i->...", u, u)
    vv = np.einsum("...i,...i->...", v, v)
    uv = np.einsum("...i,...i->...", u, v)
    wu = np.einsum("...i,...i->...", w, u)
    wv = np.einsum("...i,...i->...", w, v)
    d = uv * uv - uu * vv
    s = (uv * wv - vv * wu) / d
    t = (uv * wu - uu * wv) / d
    inside = (
        (s >= -BARYCENTRIC_EPS)
        & (t >= -BARYCENTRIC_EPS)
        & (s + t <= 1.0 + BARYCENTRIC_EPS)
    )
    return (~parallel) & crosses & inside, q


def segment_triangle_intersect(
    seg: Tuple[Point3, Point3], tri: Tuple[Point3, Point3, Point3]
) -> Optional[Point3]:
    triangle = np.array([p.as_array() for p in tri])
    area = 0.5 * np.linalg.norm(
        np.cross(triangle[1] - triangle[0], triangle[2] - triangle[0])
    )
    if area <= _MIN_TRIANGLE_AREA:
        raise TriangulationError(f"Degenerate triangle (area {area:.3e} m^2)")
    hit, q = _intersect(seg[0].as_array(), seg[1].as_array(), triangle)
    if not bool(hit):
        return None
    return Point3.from_array(q)


def _ordered_regions(
    regions_by_anchor: Mapping[str, Sequence[ConicalPathRegion]],
) -> list[tuple[str, Sequence[ConicalPathRegion]]]:
    return sorted(regions_by_anchor.items(), key=lambda item: item[0])


def intersection_tests(
    regions_by_anchor: Mapping[str, Sequence[ConicalPathRegion]],
) -> list[EdgeTest]:
    """Run every edge-versus-region test, ordered by (pair, combo, edge)."""

    layout: list[tuple[tuple[str, str], tuple[int, int], int]] = []
    segments: list[np.ndarray] = []
    face_sets: list[np.ndarray] = []
    ordered = _ordered_regions(regions_by_anchor)
    for (id_a, paths_a), (id_b, paths_b) in itertools.combinations(ordered, 2):
        for p, q in itertools.product(range(len(paths_a)), range(len(paths_b))):
            edges = paths_a[p].edges()
            for e, edge in enumerate(edges):
                layout.append(((id_a, id_b), (p, q), e))
                segments.append(edge)
                face_sets.append(paths_b[q].faces)
    if not layout:
        return []

    seg = np.array(segments)
    faces = np.array(face_sets)
    hit, points = _intersect(seg[:, None, 0, :], seg[:, None, 1, :], faces)
    tests = []
    for index, (pair, combo, edge) in enumerate(layout):
        found = tuple(Point3.from_array(p) for p in points[index][hit[index]])
        tests.append(EdgeTest(pair=pair, combo=combo, edge=edge, hits=found))
    return tests


def _cluster(points: np.ndarray, radius: float) -> np.ndarray:
    if len(points) == 1:
        return np.array([1])
    return fcluster(linkage(points, method="single"), t=radius, criterion="distance")


def pairwise_candidates(
    regions_by_anchor: Mapping[str, Sequence[ConicalPathRegion]],
    cluster_radius: float = CLUSTER_RADIUS,
) -> list[CandidateRegion]:
    """Candidate target regions, most-overlapped first."""

    hits: list[np.ndarray] = []
    sources: list[tuple[str, str]] = []
    for test in intersection_tests(regions_by_anchor):
        for point in test.hits:
            hits.append(point.as_array())
            sources.append(test.pair)
    if not hits:
        return []

    points = np.array(hits)
    labels = _cluster(points, cluster_radius)
    candidates = []
    for label in np.unique(labels):
        index = np.flatnonzero(labels == label)
        members = points[index]
        members = members[np.lexsort(members.T[::-1])]
        pairs = frozenset(sources[i] for i in index)
        candidates.append(
            CandidateRegion(
                members=tuple(Point3.from_array(m) for m in members),
                overlap_count=len(pairs),
                centroid=Point3.from_array(members.mean(axis=0)),
                pairs=pairs,
            )
        )
    candidates.sort(
        key=lambda c: (-c.overlap_count, c.centroid.x, c.centroid.y, c.centroid.z)
    )
    logger.debug("%d hits -> %d candidate regions", len(points), len(candidates))
    return candidates
