"""Grasp geometry: the minimal-thickness horizontal direction.

The gripper approaches along the horizontal direction in which the
object's projected point cloud is thinnest, closing at the cloud's mean
position. The minimum-width direction of a planar point set is always
normal to an edge of its convex hull, so scanning hull edges gives the
exact continuous minimizer; a brute-force angle sweep serves as the
independent check in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCloud


@dataclass(frozen=True)
class GraspPlan:
    """Approach direction in the horizontal plane plus the grasped width."""

    direction: tuple[float, float]
    width: float


def as_cloud(points) -> np.ndarray:
    """Validate an (n, 3) float array of world-frame points."""
    cloud = np.asarray(points, dtype=np.float64)
    if cloud.ndim != 2 or cloud.shape[1] != 3:
        raise ValueError("point cloud must have shape (n, 3)")
    if cloud.shape[0] < 1:
        raise ValueError("point cloud must contain at least one point")
    if not np.all(np.isfinite(cloud)):
        raise ValueError("point cloud contains non-finite coordinates")
    return cloud


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Counterclockwise convex hull (monotone chain), without repeated endpoint.

    Collinear input degenerates to the two extreme points.
    """
    pts = np.unique(points, axis=0)
    if pts.shape[0] <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def turn(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def half(iterable):
        chain: list[np.ndarray] = []
        for p in iterable:
            while len(chain) >= 2 and turn(chain[-2], chain[-1], p) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    hull = lower[:-1] + upper[:-1]
    return np.asarray(hull)


def grasp_direction(cloud) -> GraspPlan:
    """Horizontal unit direction of globally minimal projected extent.

    Scans the convex hull's edge normals (rotating calipers); the sign is
    canonicalized to nonnegative x, breaking ties toward nonnegative y.
    Raises DegenerateCloud when every point projects to the same spot.
    """
    cloud = as_cloud(cloud)
    flat = cloud[:, :2]
    hull = convex_hull_2d(flat)
    if hull.shape[0] < 2:
        raise DegenerateCloud("all horizontal projections coincide")

    if hull.shape[0] == 2:
        # Collinear cloud: zero width normal to the segment.
        edges = hull[1:] - hull[:-1]
    else:
        edges = np.roll(hull, -1, axis=0) - hull

    lengths = np.hypot(edges[:, 0], edges[:, 1])
    keep = lengths > 0
    units = edges[keep] / lengths[keep, None]
    normals = np.stack([-units[:, 1], units[:, 0]], axis=1)

    extents = normals @ hull.T
    widths = extents.max(axis=1) - extents.min(axis=1)
    best = int(np.argmin(widths))
    direction = normals[best]
    if direction[0] < 0 or (direction[0] == 0 and direction[1] < 0):
        direction = -direction
    direction = direction + 0.0  # normalize -0.0
    return GraspPlan(direction=(float(direction[0]), float(direction[1])), width=float(widths[best]))


def grasp_pose(cloud) -> tuple[tuple[float, float, float], GraspPlan]:
    """Mean 3D position of the cloud plus the minimal-thickness direction."""
    cloud = as_cloud(cloud)
    plan = grasp_direction(cloud)
    center = cloud.mean(axis=0)
    return (float(center[0]), float(center[1]), float(center[2])), plan


def width_along(cloud, direction) -> float:
    """Projected extent of the cloud along an arbitrary horizontal direction."""
    cloud = as_cloud(cloud)
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    proj = cloud[:, :2] @ d
    return float(proj.max() - proj.min())


def parse_cloud_text(text: str) -> np.ndarray:
    """Parse whitespace-separated `x y z` lines into a point cloud."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 3 coordinates, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    if not rows:
        raise ValueError("no points found")
    return as_cloud(rows)
