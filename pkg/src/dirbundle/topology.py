"""Rasterization of cones onto spherical and planar grids and connected-component
counts of their complements."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from scipy.spatial import cKDTree

from .core import DirectionSet, chord, chord_to_angle, grid_neighbors, normalize, union_find_components
from .estimators import ConeGerm

# cube faces: (normal, u axis, v axis); u x v = normal so every face is right-handed
_FACES = np.array([
    [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
    [[-1, 0, 0], [0, 0, 1], [0, 1, 0]],
    [[0, 1, 0], [0, 0, 1], [1, 0, 0]],
    [[0, -1, 0], [1, 0, 0], [0, 0, 1]],
    [[0, 0, 1], [1, 0, 0], [0, 1, 0]],
    [[0, 0, -1], [0, 1, 0], [1, 0, 0]],
], dtype=float)

THICKNESS_CELLS = 2.0
MIN_THICKNESS_CELLS = 1.5


@dataclass(frozen=True)
class SphericalGrid:
    """Equiangular cube-sphere with 6 k^2 cells (dim 3) or k angular bins (dim 2).

    Cell index for dim 3 is face * k^2 + i * k + j, i along the face u axis.
    """

    dim: int
    resolution: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.resolution < (3 if self.dim == 2 else 1):
            raise ValueError("resolution too small")

    @property
    def cell_count(self) -> int:
        k = self.resolution
        return 6 * k * k if self.dim == 3 else k

    def _face_point(self, face: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        n, u, v = _FACES[face, 0], _FACES[face, 1], _FACES[face, 2]
        ta, tb = np.tan(a)[..., None], np.tan(b)[..., None]
        return normalize(n + ta * u + tb * v)

    def _angles(self, idx: np.ndarray) -> np.ndarray:
        # cell index (possibly -1 or k) -> equiangular coordinate of its center
        return (np.asarray(idx) + 0.5) * (math.pi / 2) / self.resolution - math.pi / 4

    @cached_property
    def centers(self) -> np.ndarray:
        k = self.resolution
        if self.dim == 2:
            th = 2 * math.pi * (np.arange(k) + 0.5) / k
            return np.stack([np.cos(th), np.sin(th)], axis=1)
        face, rem = np.divmod(np.arange(self.cell_count), k * k)
        i, j = np.divmod(rem, k)
        return self._face_point(face, self._angles(i), self._angles(j))

    def cell_of(self, dirs) -> np.ndarray:
        """Index of the cell containing each direction."""
        d = np.atleast_2d(np.asarray(dirs, dtype=float))
        k = self.resolution
        if self.dim == 2:
            th = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * math.pi)
            return np.minimum((th / (2 * math.pi) * k).astype(np.int64), k - 1)
        dots = d @ _FACES[:, 0].T
        face = np.argmax(dots, axis=1)
        nd = dots[np.arange(d.shape[0]), face]
        a = np.arctan(np.einsum("ij,ij->i", d, _FACES[face, 1]) / nd)
        b = np.arctan(np.einsum("ij,ij->i", d, _FACES[face, 2]) / nd)
        scale = k / (math.pi / 2)
        i = np.clip(np.floor((a + math.pi / 4) * scale).astype(np.int64), 0, k - 1)
        j = np.clip(np.floor((b + math.pi / 4) * scale).astype(np.int64), 0, k - 1)
        return face * k * k + i * k + j

    @cached_property
    def neighbors(self) -> np.ndarray:
        """(cells, 4) face-adjacency table with seam stitching."""
        k = self.resolution
        n = self.cell_count
        if self.dim == 2:
            idx = np.arange(n)
            return np.stack([(idx - 1) % n, (idx + 1) % n], axis=1)
        out = np.empty((n, 4), dtype=np.int64)
        face, rem = np.divmod(np.arange(n), k * k)
        i, j = np.divmod(rem, k)
        for col, (di, dj) in enumerate(((-1, 0), (1, 0), (0, -1), (0, 1))):
            ii, jj = i + di, j + dj
            inside = (ii >= 0) & (ii < k) & (jj >= 0) & (jj < k)
            out[inside, col] = face[inside] * k * k + ii[inside] * k + jj[inside]
            off = ~inside
            # step across the seam: the would-be center lies on the neighboring face
            pts = self._face_point(face[off], self._angles(ii[off]), self._angles(jj[off]))
            out[off, col] = self.cell_of(pts)
        return out

    @cached_property
    def cell_diameter(self) -> float:
        """Largest angular diameter of a cell (radians)."""
        k = self.resolution
        if self.dim == 2:
            return 2 * math.pi / k
        edges = np.arange(k + 1) * (math.pi / 2) / k - math.pi / 4
        a, b = np.meshgrid(edges, edges, indexing="ij")
        corner = self._face_point(np.zeros(a.shape, dtype=np.int64), a, b)
        d1 = np.einsum("ijk,ijk->ij", corner[:-1, :-1], corner[1:, 1:])
        d2 = np.einsum("ijk,ijk->ij", corner[1:, :-1], corner[:-1, 1:])
        return float(np.arccos(np.clip(min(d1.min(), d2.min()), -1.0, 1.0)))

    def default_thickness(self, link: DirectionSet | None = None) -> float:
        """Two cells, widened to 0.75 of the member spacing (2 alpha) of a sampled link."""
        base = THICKNESS_CELLS * self.cell_diameter
        if link is None:
            return base
        return max(base, 1.5 * link.resolution_alpha)


@dataclass
class Occupancy:
    grid: SphericalGrid
    active: np.ndarray
    link: DirectionSet
    thickness: float
    clearance: np.ndarray = field(repr=False)   # angle from each cell center to the link

    @property
    def active_count(self) -> int:
        return int(self.active.sum())


def _check_thickness(thickness: float, cell: float) -> None:
    if thickness < MIN_THICKNESS_CELLS * cell * (1 - 1e-9):
        raise ValueError(f"thickness {thickness:.4g} rad below {MIN_THICKNESS_CELLS} cell diameters ({cell:.4g} rad)")


def _link_angle(dirs: np.ndarray, link: DirectionSet, cap: float) -> np.ndarray:
    """Angle from each direction to the link; +inf beyond `cap`."""
    if link.empty:
        return np.full(dirs.shape[0], np.inf)
    d, _ = cKDTree(link.members).query(dirs, k=1, distance_upper_bound=chord(min(cap, math.pi)) * (1 + 1e-12))
    out = np.full(d.shape, np.inf)
    ok = np.isfinite(d)
    out[ok] = chord_to_angle(d[ok])
    return out


def _occupancy(grid: SphericalGrid, link: DirectionSet, thickness: float) -> Occupancy:
    clear = _link_angle(grid.centers, link, thickness + 2 * grid.cell_diameter)
    return Occupancy(grid, clear <= thickness, link, thickness, clear)


def rasterize_cone(cone: ConeGerm | DirectionSet, grid: SphericalGrid, thickness: float | None = None) -> Occupancy:
    """Cells whose center direction lies within `thickness` of the cone's link."""
    link = cone.link if isinstance(cone, ConeGerm) else cone
    if link.dim != grid.dim:
        raise ValueError("link and grid dimensions differ")
    thickness = grid.default_thickness(link) if thickness is None else float(thickness)
    _check_thickness(thickness, grid.cell_diameter)
    return _occupancy(grid, link, thickness)


@dataclass
class ComponentReport:
    active_count: int
    component_count: int
    resolutions_checked: list[int]
    stable: bool
    counts: list[int] = field(default_factory=list)
    slivers: list[int] = field(default_factory=list)
    labels: np.ndarray | None = field(default=None, repr=False, compare=False)

    def as_dict(self) -> dict:
        return {"active_count": self.active_count, "component_count": self.component_count,
                "resolutions_checked": list(self.resolutions_checked), "stable": self.stable,
                "counts": list(self.counts), "slivers": list(self.slivers)}


def _count_free(neighbors: np.ndarray, active: np.ndarray, core: np.ndarray) -> tuple[int, int, np.ndarray]:
    """Components of the inactive cells that contain a core cell.

    Components without one are rasterization slivers (pinched-off cells where
    two thickened pieces of the link meet at a small angle); they get label -1.
    Returns (count, sliver_count, labels).
    """
    raw_count, raw = union_find_components(neighbors, ~active)
    keep = np.zeros(raw_count + 1, dtype=bool)
    keep[raw[core & ~active]] = True
    keep[-1] = False
    new = np.full(raw_count + 1, -1, dtype=np.int64)
    new[np.flatnonzero(keep[:-1])] = np.arange(int(keep[:-1].sum()))
    labels = new[raw]
    count = int(keep[:-1].sum())
    return count, raw_count - count, labels


def complement_components(occupancy: Occupancy, grid: SphericalGrid | None = None, refine: bool = True) -> ComponentReport:
    """Components of the inactive cells, rechecked at double resolution with the
    same link and thickness.

    Only components holding a cell farther than thickness + one cell diameter
    from the link are counted; the rest are reported as slivers.
    """
    grid = occupancy.grid if grid is None else grid
    if occupancy.active.shape[0] != grid.cell_count:
        raise ValueError("occupancy does not match the grid")
    occs = [occupancy]
    if refine:
        occs.append(_occupancy(SphericalGrid(grid.dim, 2 * grid.resolution), occupancy.link, occupancy.thickness))
    counts, slivers, labels = [], [], None
    for occ in occs:
        core = occ.clearance > occ.thickness + occ.grid.cell_diameter
        c, sl, lab = _count_free(occ.grid.neighbors, occ.active, core)
        counts.append(c)
        slivers.append(sl)
        labels = lab if labels is None else labels
    return ComponentReport(occupancy.active_count, counts[0], [o.grid.resolution for o in occs],
                           len(set(counts)) == 1, counts, slivers, labels)


# --- planar sections ------------------------------------------------------------------

@dataclass(frozen=True)
class PlanarGrid:
    """Square window [-extent, extent]^2 of the plane z = height, N x N cells."""

    resolution: int
    extent: float = 20.0
    height: float = 1.0

    @property
    def cell_size(self) -> float:
        return 2 * self.extent / self.resolution

    @cached_property
    def points(self) -> np.ndarray:
        c = -self.extent + (np.arange(self.resolution) + 0.5) * self.cell_size
        x, y = np.meshgrid(c, c, indexing="ij")
        return np.stack([x.ravel(), y.ravel(), np.full(x.size, self.height)], axis=1)

    @cached_property
    def cell_angles(self) -> np.ndarray:
        """Upper bound on the angle a cell subtends at the vertex."""
        return self.cell_size / np.linalg.norm(self.points, axis=1)

    @cached_property
    def neighbors(self) -> np.ndarray:
        return grid_neighbors(self.resolution, self.resolution, 4)


def section_occupancy(link: DirectionSet, grid: PlanarGrid, thickness: float) -> np.ndarray:
    """Cells whose ray from the vertex passes within angle `thickness` of the link."""
    return _link_angle(normalize(grid.points), link, thickness) <= thickness


def planar_section_components(cone: ConeGerm | DirectionSet, plane_height: float = 1.0, grid_resolution: int = 800,
                              extent: float = 20.0, thickness: float | None = None) -> ComponentReport:
    """Components of the complement of cone cap {z = plane_height} inside the window,
    with 4-adjacency, rechecked at double resolution.

    The section is thickened by angle around the vertex (radians), so the sampled
    link's member spacing does not open gaps far from the foot of the plane.
    Slivers are filtered as in complement_components.
    """
    link = cone.link if isinstance(cone, ConeGerm) else cone
    if link.dim != 3:
        raise ValueError("planar sections need a cone in R^3")
    if not plane_height > 0:
        raise ValueError("plane_height must be positive")
    if thickness is None:
        thickness = 1.5 * link.resolution_alpha
    counts, slivers, res, first = [], [], [], None
    for n in (grid_resolution, 2 * grid_resolution):
        grid = PlanarGrid(n, extent, plane_height)
        clear = _link_angle(normalize(grid.points), link, thickness + 2 * float(grid.cell_angles.max()))
        active = clear <= thickness
        c, sl, labels = _count_free(grid.neighbors, active, clear > thickness + grid.cell_angles)
        if first is None:
            first = (int(active.sum()), labels)
        counts.append(c)
        slivers.append(sl)
        res.append(n)
    return ComponentReport(first[0], counts[0], res, len(set(counts)) == 1, counts, slivers, first[1])


# --- export ---------------------------------------------------------------------------

def occupancy_image(active: np.ndarray, grid: SphericalGrid | PlanarGrid) -> np.ndarray:
    """2-D uint8 image (255 = active): cube faces stacked vertically, or the planar window."""
    a = np.asarray(active, dtype=bool).astype(np.uint8) * 255
    if isinstance(grid, PlanarGrid):
        # row = y from top, column = x
        return a.reshape(grid.resolution, grid.resolution).T[::-1]
    if grid.dim == 2:
        return a.reshape(1, -1)
    return a.reshape(6 * grid.resolution, grid.resolution)


def write_pgm(path, image: np.ndarray) -> None:
    """Binary PGM (P5), one byte per cell."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError("image must be 2-D")
    h, w = image.shape
    path = Path(path)
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + image.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValueError("not a binary PGM")
    w, h = int(m.group(1)), int(m.group(2))
    return np.frombuffer(data[m.end(): m.end() + w * h], dtype=np.uint8).reshape(h, w)
