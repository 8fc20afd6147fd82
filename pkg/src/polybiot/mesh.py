"""Polygonal mesh data structures, generators, and file I/O (2D).

Meshes are stored as flat vertex/element arrays with a fully deduplicated
face table.  Faces are straight segments between two vertices; a hanging
node on a nonmatching interface splits the coarse cell's edge into several
faces of that cell, so no mortar structures are needed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Voronoi


class MeshError(Exception):
    """Invalid, degenerate, or unparseable mesh input."""


@dataclass(frozen=True)
class Face:
    vertices: tuple[int, int]  # as traversed by the owner element (CCW)
    owner: int                 # T1
    neighbor: int | None       # T2, None for boundary faces
    normal: np.ndarray         # unit normal pointing out of T1
    midpoint: np.ndarray
    tangent: np.ndarray        # unit tangent, oriented vertices[0] -> vertices[1]
    length: float


@dataclass
class PolyMesh:
    """Immutable-after-construction polygonal mesh of a 2D domain.

    ``element_faces[T]`` lists ``(face_id, sign)`` pairs in loop order;
    ``sign`` is +1 when the face normal points out of ``T`` and -1
    otherwise, i.e. ``n_TF = sign * faces[face_id].normal``.  The
    owner/neighbor ordering of each interior face is fixed at construction
    and never changes.
    """

    vertices: np.ndarray                 # (nv, 2)
    elements: list[list[int]]            # CCW vertex loops
    faces: list[Face] = field(default_factory=list)
    element_faces: list[list[tuple[int, int]]] = field(default_factory=list)
    partition_tag: np.ndarray | None = None

    # geometric quantities, filled by _finalize
    areas: np.ndarray = None
    barycenters: np.ndarray = None
    diameters: np.ndarray = None
    interior_faces: list[int] = field(default_factory=list)
    boundary_faces: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.partition_tag is None:
            self.partition_tag = np.zeros(len(self.elements), dtype=int)
        else:
            self.partition_tag = np.asarray(self.partition_tag, dtype=int)
        if not self.faces:
            self._build_faces()
        self._finalize()

    # -- construction -------------------------------------------------

    def _build_faces(self):
        edge_map: dict[tuple[int, int], int] = {}
        faces: list[Face] = []
        element_faces: list[list[tuple[int, int]]] = []
        for t, loop in enumerate(self.elements):
            if len(loop) < 3:
                raise MeshError(f"element {t} has fewer than 3 vertices")
            if _signed_area(self.vertices[loop]) <= 0.0:
                raise MeshError(
                    f"element {t} is degenerate or not counterclockwise"
                )
            ef = []
            n = len(loop)
            for i in range(n):
                a, b = loop[i], loop[(i + 1) % n]
                if a == b:
                    raise MeshError(f"element {t} repeats vertex {a}")
                key = (min(a, b), max(a, b))
                if key in edge_map:
                    fid = faces[edge_map[key]]
                    if fid.neighbor is not None:
                        raise MeshError(
                            f"face {key} shared by more than two elements"
                        )
                    faces[edge_map[key]] = Face(
                        fid.vertices, fid.owner, t, fid.normal,
                        fid.midpoint, fid.tangent, fid.length,
                    )
                    ef.append((edge_map[key], -1))
                else:
                    va, vb = self.vertices[a], self.vertices[b]
                    d = vb - va
                    length = float(np.hypot(*d))
                    if length == 0.0:
                        raise MeshError(f"zero-length edge in element {t}")
                    tangent = d / length
                    normal = np.array([d[1], -d[0]]) / length
                    faces.append(Face((a, b), t, None, normal,
                                      0.5 * (va + vb), tangent, length))
                    edge_map[key] = len(faces) - 1
                    ef.append((len(faces) - 1, +1))
            element_faces.append(ef)
        self.faces = faces
        self.element_faces = element_faces

    def _finalize(self):
        ne = len(self.elements)
        self.areas = np.empty(ne)
        self.barycenters = np.empty((ne, 2))
        self.diameters = np.empty(ne)
        for t, loop in enumerate(self.elements):
            pts = self.vertices[loop]
            area = _signed_area(pts)
            if area <= 0.0:
                raise MeshError(f"element {t} has nonpositive area")
            self.areas[t] = area
            self.barycenters[t] = _centroid(pts, area)
            d = pts[:, None, :] - pts[None, :, :]
            self.diameters[t] = math.sqrt((d ** 2).sum(axis=2).max())
        self.interior_faces = [i for i, f in enumerate(self.faces)
                               if f.neighbor is not None]
        self.boundary_faces = [i for i, f in enumerate(self.faces)
                               if f.neighbor is None]

    # -- queries ------------------------------------------------------

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    def normal_out_of(self, fid: int, t: int) -> np.ndarray:
        f = self.faces[fid]
        if t == f.owner:
            return f.normal
        if t == f.neighbor:
            return -f.normal
        raise ValueError(f"element {t} not incident to face {fid}")

    def element_containing(self, x) -> int:
        x = np.asarray(x, dtype=float)
        for t, loop in enumerate(self.elements):
            if _point_in_polygon(x, self.vertices[loop]):
                return t
        raise ValueError(f"point {x} outside the mesh")


@dataclass
class SubTriangulation:
    """Per-element triangle covers used as quadrature support."""

    triangles: list[np.ndarray]  # per element: (nt, 3, 2) vertex coordinates

    def areas(self, t: int) -> np.ndarray:
        tri = self.triangles[t]
        return 0.5 * np.abs(
            (tri[:, 1, 0] - tri[:, 0, 0]) * (tri[:, 2, 1] - tri[:, 0, 1])
            - (tri[:, 2, 0] - tri[:, 0, 0]) * (tri[:, 1, 1] - tri[:, 0, 1])
        )


def subtriangulate(mesh: PolyMesh) -> SubTriangulation:
    """Cover each element by triangles, fanning from the barycenter.

    Triangles (and any convex polygon) fan cleanly; if a fan triangle of a
    nonconvex element degenerates, an ear-clipping cover is used instead.
    """
    out = []
    for t, loop in enumerate(mesh.elements):
        pts = mesh.vertices[loop]
        if len(loop) == 3:
            out.append(pts[None, :, :].copy())
            continue
        c = mesh.barycenters[t]
        tris = np.array([[c, pts[i], pts[(i + 1) % len(loop)]]
                         for i in range(len(loop))])
        a = _tri_areas(tris)
        if (a <= 1e-14 * mesh.areas[t]).any():
            tris = _ear_clip(pts)
            a = _tri_areas(tris)
            if (a <= 0.0).any():
                raise MeshError(f"cannot triangulate nonconvex element {t}")
        out.append(tris)
    sub = SubTriangulation(out)
    for t in range(mesh.n_elements):
        if not math.isclose(sub.areas(t).sum(), mesh.areas[t],
                            rel_tol=1e-9):
            raise MeshError(f"sub-triangulation of element {t} does not "
                            f"cover it")
    return sub


def regularity_report(mesh: PolyMesh, sub: SubTriangulation | None = None) -> dict:
    """Shape diagnostics: simplex inradius ratios, face counts, h."""
    if sub is None:
        sub = subtriangulate(mesh)
    min_inradius_ratio = math.inf
    min_sub_ratio = math.inf
    for t in range(mesh.n_elements):
        for tri in sub.triangles[t]:
            h_s = max(np.linalg.norm(tri[1] - tri[0]),
                      np.linalg.norm(tri[2] - tri[1]),
                      np.linalg.norm(tri[0] - tri[2]))
            area = 0.5 * abs(_cross2(tri[1] - tri[0], tri[2] - tri[0]))
            per = (np.linalg.norm(tri[1] - tri[0])
                   + np.linalg.norm(tri[2] - tri[1])
                   + np.linalg.norm(tri[0] - tri[2]))
            r_s = 2.0 * area / per
            min_inradius_ratio = min(min_inradius_ratio, r_s / h_s)
            min_sub_ratio = min(min_sub_ratio, h_s / mesh.diameters[t])
    return {
        "min_inradius_ratio": min_inradius_ratio,
        "min_subdiameter_ratio": min_sub_ratio,
        "max_faces_per_element": max(len(ef) for ef in mesh.element_faces),
        "h": mesh.h,
        "n_elements": mesh.n_elements,
        "n_faces": mesh.n_faces,
        "n_interior_faces": len(mesh.interior_faces),
    }


def write_statistics_csv(mesh: PolyMesh, path) -> None:
    rep = regularity_report(mesh)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(sorted(rep))
        w.writerow([rep[k] for k in sorted(rep)])


# ---------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------

def generate_cartesian(n: int) -> PolyMesh:
    """n x n uniform quadrilateral mesh of the unit square."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    verts = np.array([[x, y] for y in xs for x in xs])
    vid = lambda i, j: j * (n + 1) + i
    elements = [[vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]
                for j in range(n) for i in range(n)]
    return PolyMesh(verts, elements)


def generate_triangular(n: int) -> PolyMesh:
    """Structured triangulation of the unit square, 2 n^2 triangles."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    verts = np.array([[x, y] for y in xs for x in xs])
    vid = lambda i, j: j * (n + 1) + i
    elements = []
    for j in range(n):
        for i in range(n):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            elements.append([a, b, c])
            elements.append([a, c, d])
    return PolyMesh(verts, elements)


def generate_hexagonal(rows: int, cols: int) -> PolyMesh:
    """Hexagonal-dominant mesh of the unit square.

    Voronoi diagram of a staggered lattice with ``rows`` rows alternating
    ``cols`` and ``cols - 1`` seeds; interior cells are hexagons, boundary
    cells are cut.  Element count is ``(rows // 2) * (2 * cols - 1)`` for
    even ``rows``.
    """
    if rows < 2 or cols < 2:
        raise ValueError("rows and cols must be >= 2")
    dy = 1.0 / rows
    dx = 1.0 / cols
    pts = []
    for j in range(rows):
        y = (j + 0.5) * dy
        if j % 2 == 0:
            pts.extend([(i + 0.5) * dx, y] for i in range(cols))
        else:
            pts.extend([(i + 1.0) * dx, y] for i in range(cols - 1))
    return _clipped_voronoi(np.asarray(pts))


def generate_voronoi(n: int, seed: int = 0, jitter: float = 0.35) -> PolyMesh:
    """Voronoi mesh of roughly n^2 cells from a jittered n x n seed grid."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = np.random.default_rng(seed)
    d = 1.0 / n
    xs = (np.arange(n) + 0.5) * d
    pts = np.stack(np.meshgrid(xs, xs), axis=-1).reshape(-1, 2)
    pts = pts + rng.uniform(-jitter * d, jitter * d, size=pts.shape)
    pts = np.clip(pts, 0.05 * d, 1.0 - 0.05 * d)
    return _clipped_voronoi(pts)


def generate_nonmatching(n: int) -> PolyMesh:
    """Cartesian mesh with the quadrant (0,1/2)^2 refined 2x.

    Coarse cells abutting the refined quadrant carry hanging nodes, hence
    more than 4 faces.  ``n`` (even) is the coarse resolution.
    """
    if n < 2 or n % 2:
        raise ValueError("n must be even and >= 2")
    h_c = 1.0 / n
    h_f = h_c / 2.0
    vdict: dict[tuple[int, int], int] = {}
    verts: list[list[float]] = []

    def vid(x: float, y: float) -> int:
        # exact on the fine grid, so integer keys dedup exactly
        key = (round(x / h_f), round(y / h_f))
        if key not in vdict:
            vdict[key] = len(verts)
            verts.append([key[0] * h_f, key[1] * h_f])
        return vdict[key]

    elements = []
    # fine cells in the quadrant
    for j in range(n):
        for i in range(n):
            x0, y0 = i * h_f, j * h_f
            elements.append([vid(x0, y0), vid(x0 + h_f, y0),
                             vid(x0 + h_f, y0 + h_f), vid(x0, y0 + h_f)])
    # coarse cells elsewhere; insert hanging nodes on the interface
    for j in range(n):
        for i in range(n):
            if i < n // 2 and j < n // 2:
                continue
            x0, y0 = i * h_c, j * h_c
            loop_xy = [(x0, y0), (x0 + h_c, y0),
                       (x0 + h_c, y0 + h_c), (x0, y0 + h_c)]
            loop = []
            for a, b in zip(loop_xy, loop_xy[1:] + loop_xy[:1]):
                loop.append(vid(*a))
                mid = (0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]))
                if _on_refined_interface(a, b, n):
                    loop.append(vid(*mid))
            elements.append(loop)
    return PolyMesh(np.asarray(verts), elements)


def _on_refined_interface(a, b, n) -> bool:
    half = 0.5
    lo = min(a[1], b[1])
    hi = max(a[1], b[1])
    if abs(a[0] - half) < 1e-12 and abs(b[0] - half) < 1e-12 and hi <= half + 1e-12:
        return True
    lo = min(a[0], b[0])
    hi = max(a[0], b[0])
    if abs(a[1] - half) < 1e-12 and abs(b[1] - half) < 1e-12 and hi <= half + 1e-12:
        return True
    return False


def _clipped_voronoi(points: np.ndarray) -> PolyMesh:
    """Voronoi cells of ``points`` clipped exactly to the unit square.

    Clipping uses mirror seeds across the four sides, so the square
    boundary is an exact Voronoi edge and cell vertices are shared by
    construction (same diagram vertex index).
    """
    mirrors = [points * [-1, 1], points * [1, -1],
               points * [-1, 1] + [2, 0], points * [1, -1] + [0, 2]]
    allpts = np.vstack([points] + mirrors)
    vor = Voronoi(allpts)
    vcoords = vor.vertices.copy()
    # snap diagram vertices that sit on the square boundary
    for axis in (0, 1):
        for val in (0.0, 1.0):
            on = np.abs(vcoords[:, axis] - val) < 1e-9
            vcoords[on, axis] = val
    vcoords = np.clip(vcoords, 0.0, 1.0)

    used: dict[int, int] = {}
    verts: list[np.ndarray] = []
    elements = []
    for i in range(len(points)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or not region:
            raise MeshError("unbounded cell; seed outside the unit square?")
        loop_pts = vcoords[region]
        ang = np.arctan2(loop_pts[:, 1] - points[i, 1],
                         loop_pts[:, 0] - points[i, 0])
        order = np.argsort(ang)
        region = [region[o] for o in order]
        # collapse near-duplicate consecutive diagram vertices (degenerate
        # cocircular configurations at the square corners)
        cleaned: list[int] = []
        for rid in region:
            if cleaned and np.linalg.norm(vcoords[rid] - vcoords[cleaned[-1]]) < 1e-9:
                continue
            cleaned.append(rid)
        if len(cleaned) > 1 and np.linalg.norm(
                vcoords[cleaned[0]] - vcoords[cleaned[-1]]) < 1e-9:
            cleaned.pop()
        loop = []
        for rid in cleaned:
            if rid not in used:
                used[rid] = len(verts)
                verts.append(vcoords[rid])
            loop.append(used[rid])
        elements.append(loop)
    return PolyMesh(np.asarray(verts), elements)


# ---------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------

NATIVE_FORMAT_VERSION = 1


def save_mesh(mesh: PolyMesh, path) -> None:
    doc = {
        "format": "polybiot-mesh",
        "version": NATIVE_FORMAT_VERSION,
        "vertices": mesh.vertices.tolist(),
        "elements": [list(map(int, loop)) for loop in mesh.elements],
        "partition": mesh.partition_tag.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def save_fvca5(mesh: PolyMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write("vertices\n%d\n" % len(mesh.vertices))
        for x, y in mesh.vertices:
            fh.write("%.17g %.17g\n" % (x, y))
        fh.write("cells\n%d\n" % mesh.n_elements)
        for loop in mesh.elements:
            fh.write(" ".join([str(len(loop))] + [str(v + 1) for v in loop]))
            fh.write("\n")


def load_mesh(path, fmt: str = "native-json") -> PolyMesh:
    if fmt == "native-json":
        return _load_native(path)
    if fmt == "fvca5":
        return _load_fvca5(path)
    raise ValueError(f"unknown mesh format {fmt!r}")


def _load_native(path) -> PolyMesh:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MeshError(f"cannot parse mesh file {path}: {exc}") from exc
    if doc.get("format") != "polybiot-mesh":
        raise MeshError(f"{path}: not a polybiot mesh file")
    if doc.get("version") != NATIVE_FORMAT_VERSION:
        raise MeshError(f"{path}: unsupported version {doc.get('version')}")
    return PolyMesh(np.asarray(doc["vertices"], dtype=float),
                    [list(loop) for loop in doc["elements"]],
                    partition_tag=doc.get("partition"))


def _load_fvca5(path) -> PolyMesh:
    """Text layout: 'vertices' count, x-y lines, then a cell section.

    Cell sections are headed 'triangles', 'quadrangles', or 'cells'
    followed by a count; each cell line gives 1-based vertex indices
    (for 'cells', preceded by the vertex count of the polygon).
    """
    try:
        with open(path) as fh:
            tokens = fh.read().split()
    except OSError as exc:
        raise MeshError(f"cannot read mesh file {path}: {exc}") from exc
    pos = 0

    def take() -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise MeshError(f"{path}: truncated file")
        pos += 1
        return tokens[pos - 1]

    verts = None
    elements: list[list[int]] = []
    while pos < len(tokens):
        section = take().lower()
        if section == "vertices":
            nv = int(take())
            verts = np.array([[float(take()), float(take())]
                              for _ in range(nv)])
        elif section in ("triangles", "quadrangles", "cells"):
            nc = int(take())
            fixed = {"triangles": 3, "quadrangles": 4}.get(section)
            for _ in range(nc):
                nloc = fixed if fixed is not None else int(take())
                elements.append([int(take()) - 1 for _ in range(nloc)])
        else:
            raise MeshError(f"{path}: unknown section {section!r}")
    if verts is None or not elements:
        raise MeshError(f"{path}: missing vertices or cells")
    return PolyMesh(verts, elements)


# ---------------------------------------------------------------------
# small geometry helpers
# ---------------------------------------------------------------------

def _cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _signed_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _centroid(pts: np.ndarray, area: float) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def _tri_areas(tris: np.ndarray) -> np.ndarray:
    return 0.5 * ((tris[:, 1, 0] - tris[:, 0, 0]) * (tris[:, 2, 1] - tris[:, 0, 1])
                  - (tris[:, 2, 0] - tris[:, 0, 0]) * (tris[:, 1, 1] - tris[:, 0, 1]))


def _ear_clip(pts: np.ndarray) -> np.ndarray:
    idx = list(range(len(pts)))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(pts) ** 2:
            raise MeshError("ear clipping failed")
        n = len(idx)
        for c in range(n):
            i0, i1, i2 = idx[c - 1], idx[c], idx[(c + 1) % n]
            a, b, cpt = pts[i0], pts[i1], pts[i2]
            if _cross2(b - a, cpt - a) <= 0.0:
                continue
            if any(_point_in_triangle(pts[j], a, b, cpt)
                   for j in idx if j not in (i0, i1, i2)):
                continue
            tris.append([a, b, cpt])
            idx.pop(c)
            break
        else:
            raise MeshError("ear clipping failed: no ear found")
    tris.append([pts[idx[0]], pts[idx[1]], pts[idx[2]]])
    return np.asarray(tris)


def _point_in_triangle(p, a, b, c) -> bool:
    d1 = _cross2(b - a, p - a)
    d2 = _cross2(c - b, p - b)
    d3 = _cross2(a - c, p - c)
    return (d1 > 0) and (d2 > 0) and (d3 > 0)


def _point_in_polygon(p, poly: np.ndarray) -> bool:
    # ray casting with boundary tolerance
    n = len(poly)
    inside = False
    x, y = p
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        # on-edge check
        d = np.array([x1 - x0, y1 - y0])
        t = np.dot([x - x0, y - y0], d) / np.dot(d, d)
        if 0.0 <= t <= 1.0:
            proj = np.array([x0, y0]) + t * d
            if np.hypot(x - proj[0], y - proj[1]) < 1e-12:
                return True
        if (y0 > y) != (y1 > y):
            xi = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if x < xi:
                inside = not inside
    return inside
