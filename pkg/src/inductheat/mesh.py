"""Fixed triangular meshes: Medit I/O, generators, element geometry.

Meshes never conform to the moving workpiece; region membership is
resolved per quadrature point by :mod:`inductheat.motion`.
"""
import math
import re

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay, cKDTree

from .quadrature import DEFAULT_RULE

OUTER = 1
GAMMA_IN = 2
GAMMA_OUT = 3

MAX_NODES = 2_000_000


class MeshError(ValueError):
    """Malformed or non-conforming mesh data."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GeometryError(ValueError):
    pass


class MeshResourceError(MemoryError):
    pass


def _edge_key(edges):
    e = np.sort(edges, axis=1)
    return e[:, 0].astype(np.int64) * (1 << 32) + e[:, 1]


class Mesh:
    """Immutable conforming triangle mesh with labeled boundary edges.

    Parameters
    ----------
    points : (n, 2) array
    triangles : (m, 3) int array, any orientation (reordered to CCW).
    boundary_edges : (k, 2) int array, optional
        Labeled boundary edges. An edge may appear once per label.
        Boundary edges that are not listed get the ``OUTER`` label.
    edge_labels : (k,) int array, optional
    vertex_refs : (n,) int array, optional
        Region hints carried over from a mesh file; not authoritative.
    """

    def __init__(self, points, triangles, boundary_edges=None, edge_labels=None,
                 vertex_refs=None):
        points = np.array(points, dtype=float).reshape(-1, 2)
        tris = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        n = len(points)
        if not np.all(np.isfinite(points)):
            raise MeshError("non-finite node coordinates")
        if len(tris) == 0:
            raise MeshError("mesh has no triangles")
        if tris.min() < 0 or tris.max() >= n:
            raise MeshError("triangle node index out of range")
        if np.any((tris[:, 0] == tris[:, 1]) | (tris[:, 1] == tris[:, 2])
                  | (tris[:, 0] == tris[:, 2])):
            raise MeshError("triangle with repeated node")

        signed = _signed_areas(points, tris)
        flip = signed < 0
        tris[flip] = tris[flip][:, [0, 2, 1]]
        p0, p1, p2 = points[tris[:, 0]], points[tris[:, 1]], points[tris[:, 2]]
        longest = np.max([np.sum((p1 - p0) ** 2, 1), np.sum((p2 - p1) ** 2, 1),
                          np.sum((p0 - p2) ** 2, 1)], axis=0)
        if np.any(np.abs(signed) <= 1e-13 * longest):
            raise GeometryError("degenerate triangle (zero area)")

        all_edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
        keys = _edge_key(all_edges)
        uniq, first, counts = np.unique(keys, return_index=True, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-conforming mesh: edge shared by more than two triangles")
        edges = np.sort(all_edges[first], axis=1)
        bnd_mask = counts == 1

        if boundary_edges is None or len(boundary_edges) == 0:
            be = np.empty((0, 2), dtype=np.int64)
            bl = np.empty(0, dtype=np.int64)
        else:
            be = np.sort(np.array(boundary_edges, dtype=np.int64).reshape(-1, 2), axis=1)
            bl = (np.full(len(be), OUTER, dtype=np.int64) if edge_labels is None
                  else np.array(edge_labels, dtype=np.int64))
            if be.min() < 0 or be.max() >= n:
                raise MeshError("boundary edge node index out of range")
            pos = np.searchsorted(uniq, _edge_key(be))
            pos = np.minimum(pos, len(uniq) - 1)
            ok = (uniq[pos] == _edge_key(be)) & bnd_mask[pos]
            if not np.all(ok):
                idx = int(np.flatnonzero(~ok)[0])
                err = MeshError(f"edge {tuple(be[idx])} is not a boundary edge")
                err.edge_index = idx
                raise err
        listed = np.isin(uniq[bnd_mask], _edge_key(be))
        missing = edges[bnd_mask][~listed]
        if len(missing):
            be = np.concatenate([be, missing])
            bl = np.concatenate([bl, np.full(len(missing), OUTER, dtype=np.int64)])

        self.points = points
        self.triangles = tris
        self.edges = edges
        self.edge_counts = counts
        self.boundary_edges = be
        self.edge_labels = bl
        self.vertex_refs = (np.zeros(n, dtype=np.int64) if vertex_refs is None
                            else np.array(vertex_refs, dtype=np.int64))
        self._check_hanging_nodes()
        self._check_connected()
        for arr in (self.points, self.triangles, self.edges, self.edge_counts,
                    self.boundary_edges, self.edge_labels, self.vertex_refs):
            arr.setflags(write=False)
        self._geometry = {}

    def _check_hanging_nodes(self):
        bnd = self.edges[self.edge_counts == 1]
        if len(bnd) == 0:
            return
        p = self.points
        a, b = p[bnd[:, 0]], p[bnd[:, 1]]
        mid = 0.5 * (a + b)
        half = 0.5 * np.linalg.norm(b - a, axis=1)
        tree = cKDTree(p)
        for k, cand in enumerate(tree.query_ball_point(mid, half * (1 + 1e-12))):
            for c in cand:
                if c in bnd[k]:
                    continue
                d = b[k] - a[k]
                q = p[c] - a[k]
                cross = d[0] * q[1] - d[1] * q[0]
                s = (q @ d) / (d @ d)
                if abs(cross) <= 1e-12 * (d @ d) and 0 < s < 1:
                    raise MeshError(f"non-conforming mesh: hanging node {c}")

    def _check_connected(self):
        n = self.n_nodes
        t = self.triangles
        rows = np.repeat(t[:, 0], 2)
        cols = t[:, 1:].ravel()
        g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        used = np.zeros(n, dtype=bool)
        used[t.ravel()] = True
        if not used.all():
            raise MeshError("mesh has nodes not referenced by any triangle")
        ncomp, _ = connected_components(g, directed=False)
        if ncomp != 1:
            raise MeshError(f"mesh is not connected ({ncomp} components)")

    @property
    def n_nodes(self):
        return len(self.points)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def interior_edges(self):
        return self.edges[self.edge_counts == 2]

    def labels(self):
        return sorted(set(self.edge_labels.tolist()))

    def edges_with_label(self, label):
        sel = self.edge_labels == label
        if not np.any(sel):
            raise KeyError(f"unknown boundary label {label}")
        return self.boundary_edges[sel]

    def boundary_nodes(self, label=None):
        """Sorted node ids on the boundary (all labels when ``label`` is None)."""
        edges = self.boundary_edges if label is None else self.edges_with_label(label)
        return np.unique(edges)

    @property
    def areas(self):
        return np.abs(_signed_areas(self.points, self.triangles))

    def edge_lengths(self):
        d = self.points[self.edges[:, 1]] - self.points[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def h_max(self):
        return float(self.edge_lengths().max())

    def element_geometry(self, rule=DEFAULT_RULE):
        """Cached :class:`ElementGeometry` for ``rule``."""
        key = id(rule)
        if key not in self._geometry:
            self._geometry[key] = ElementGeometry(self, rule)
        return self._geometry[key]

    def __repr__(self):
        return f"Mesh(n_nodes={self.n_nodes}, n_triangles={self.n_triangles})"


def _signed_areas(points, tris):
    a, b, c = points[tris[:, 0]], points[tris[:, 1]], points[tris[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))


class ElementGeometry:
    """Per-element areas, P1 gradients and physical quadrature data."""

    def __init__(self, mesh, rule):
        p, t = mesh.points, mesh.triangles
        self.rule = rule
        self.area = mesh.areas
        if np.any(self.area <= 0):
            raise GeometryError("degenerate triangle")
        a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
        # gradient of barycentric i is rot90(opposite edge) / (2 area)
        e0, e1, e2 = c - b, a - c, b - a
        grads = np.stack([e0, e1, e2], axis=1)[:, :, ::-1] * np.array([-1.0, 1.0])
        self.grads = grads / (2.0 * self.area)[:, None, None]  # (m, 3, 2)
        self.basis = rule.points  # (nq, 3), same on every element
        self.qpoints = np.einsum("qk,mkd->mqd", rule.points, p[t])  # (m, nq, 2)
        self.qweights = self.area[:, None] * rule.weights[None, :]  # (m, nq)

    @property
    def flat_points(self):
        return self.qpoints.reshape(-1, 2)


def triangle_geometry(mesh, tri_index):
    """Area and the three constant P1 basis gradients of one triangle."""
    t = mesh.triangles[tri_index]
    p = mesh.points[t]
    area = 0.5 * ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                  - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))
    if not area > 0:
        raise GeometryError(f"triangle {tri_index} is degenerate")
    grads = np.empty((3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        e = p[k] - p[j]
        grads[i] = (-e[1], e[0])
    return area, grads / (2.0 * area)


def quadrature_points(rule, mesh, tri_index):
    """Physical points and weights of ``rule`` on triangle ``tri_index``."""
    area, _ = triangle_geometry(mesh, tri_index)
    xy = rule.points @ mesh.points[mesh.triangles[tri_index]]
    return list(zip(xy, rule.weights * area))


# ---------------------------------------------------------------- generators

def generate_rect_mesh(width, height, nx, ny, origin=(0.0, 0.0), gamma_labels=False):
    """Structured triangulation of a rectangle, diagonals alternating per cell.

    All boundary edges carry ``OUTER``; with ``gamma_labels`` the left edge
    is additionally labeled ``GAMMA_IN`` and the right edge ``GAMMA_OUT``.
    """
    if not (width > 0 and height > 0):
        raise ValueError("rectangle dimensions must be positive")
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    x = origin[0] + np.linspace(0.0, width, nx + 1)
    y = origin[1] + np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(x, y)
    points = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]

    bottom = [(nid(i, 0), nid(i + 1, 0)) for i in range(nx)]
    top = [(nid(i, ny), nid(i + 1, ny)) for i in range(nx)]
    left = [(nid(0, j), nid(0, j + 1)) for j in range(ny)]
    right = [(nid(nx, j), nid(nx, j + 1)) for j in range(ny)]
    edges = bottom + top + left + right
    labels = [OUTER] * len(edges)
    if gamma_labels:
        edges += left + right
        labels += [GAMMA_IN] * ny + [GAMMA_OUT] * ny
    return Mesh(points, tris, edges, labels)


def generate_disk_mesh(radius, target_h, center=(0.0, 0.0), max_nodes=MAX_NODES):
    """Quasi-uniform disk mesh from concentric rings of nodes.

    Ring ``k`` sits at radius ``k * radius / n_rings`` and carries enough
    nodes for an arc spacing of at most ``target_h``; consecutive rings are
    staggered by half a spacing. The node cloud is Delaunay-triangulated,
    so the outer ring polygon is the mesh boundary.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    if not 0 < target_h < radius:
        raise ValueError("target_h must satisfy 0 < target_h < radius")
    n_rings = math.ceil(radius / target_h)
    counts = [max(6, math.ceil(2 * math.pi * radius * k / n_rings / target_h))
              for k in range(1, n_rings + 1)]
    if 1 + sum(counts) > max_nodes:
        raise MeshResourceError(
            f"disk mesh would need {1 + sum(counts)} nodes (cap {max_nodes})")
    pts = [np.zeros((1, 2))]
    for k, m in enumerate(counts, start=1):
        r = radius * k / n_rings
        theta = 2 * np.pi * (np.arange(m) + 0.5 * (k % 2)) / m
        pts.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
    points = np.concatenate(pts) + np.asarray(center, dtype=float)
    tri = Delaunay(points)
    tris = tri.simplices
    keep = np.abs(_signed_areas(points, tris)) > 1e-12 * target_h ** 2
    return Mesh(points, tris[keep])


def mesh_stats(mesh):
    """Summary numbers printed by the ``mesh-info`` command."""
    lengths = mesh.edge_lengths()
    labels = {int(lab): int(np.sum(mesh.edge_labels == lab)) for lab in mesh.labels()}
    return {
        "n_nodes": mesh.n_nodes,
        "n_triangles": mesh.n_triangles,
        "n_boundary_edges": int(np.sum(mesh.edge_counts == 1)),
        "area": float(mesh.areas.sum()),
        "h_min": float(lengths.min()),
        "h_max": float(lengths.max()),
        "boundary_labels": labels,
    }


# ---------------------------------------------------------------- Medit I/O

_SECTION_RE = re.compile(r"^[A-Za-z]+$")


def parse_medit_mesh(text):
    """Parse the 2D ASCII subset of the Medit ``.mesh`` format.

    Recognised keywords: ``MeshVersionFormatted``, ``Dimension``,
    ``Vertices``, ``Triangles``, ``Edges``, ``End``. Indices are 1-based
    in the file.
    """
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        s = raw.split("#", 1)[0].strip()
        if s:
            lines.append((lineno, s))

    vertices = refs = triangles = edges = edge_refs = None
    i = 0

    def read_count(kw, lineno, rest):
        nonlocal i
        if rest:
            tok = rest
        else:
            i += 1
            if i >= len(lines):
                raise MeshError(f"missing count after {kw}", lineno)
            lineno, tok = lines[i]
        try:
            count = int(tok)
        except ValueError:
            raise MeshError(f"bad count {tok!r} after {kw}", lineno) from None
        if count < 0:
            raise MeshError(f"negative count after {kw}", lineno)
        return count

    def read_rows(count, ncols, kind, kw):
        nonlocal i
        rows, linenos = [], []
        for _ in range(count):
            i += 1
            if i >= len(lines):
                raise MeshError(f"unexpected end of file in {kw} section", lines[-1][0])
            lineno, s = lines[i]
            parts = s.split()
            if len(parts) != ncols:
                raise MeshError(f"expected {ncols} values in {kw} row, got {len(parts)}", lineno)
            try:
                rows.append([kind(v) for v in parts])
            except ValueError:
                raise MeshError(f"malformed {kw} row {s!r}", lineno) from None
            linenos.append(lineno)
        return rows, linenos

    tri_lines = edge_lines = []
    while i < len(lines):
        lineno, s = lines[i]
        parts = s.split(None, 1)
        kw, rest = parts[0], (parts[1].strip() if len(parts) > 1 else "")
        if not _SECTION_RE.match(kw):
            raise MeshError(f"expected section keyword, got {s!r}", lineno)
        if kw == "End":
            break
        if kw == "MeshVersionFormatted":
            read_count(kw, lineno, rest)
        elif kw == "Dimension":
            dim = read_count(kw, lineno, rest)
            if dim != 2:
                raise MeshError(f"only Dimension 2 is supported, got {dim}", lineno)
        elif kw == "Vertices":
            n = read_count(kw, lineno, rest)
            rows, _ = read_rows(n, 3, float, kw)
            arr = np.array(rows, dtype=float).reshape(-1, 3)
            vertices, refs = arr[:, :2], arr[:, 2].astype(np.int64)
        elif kw == "Triangles":
            n = read_count(kw, lineno, rest)
            rows, tri_lines = read_rows(n, 4, int, kw)
            triangles = np.array(rows, dtype=np.int64).reshape(-1, 4)
        elif kw == "Edges":
            n = read_count(kw, lineno, rest)
            rows, edge_lines = read_rows(n, 3, int, kw)
            arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
            edges, edge_refs = arr[:, :2], arr[:, 2]
        else:
            raise MeshError(f"unknown section {kw!r}", lineno)
        i += 1

    if vertices is None or triangles is None:
        raise MeshError("file must contain Vertices and Triangles sections")
    nv = len(vertices)
    for k, row in enumerate(triangles):
        if row[:3].min() < 1 or row[:3].max() > nv:
            raise MeshError(f"triangle index out of range (1..{nv})", tri_lines[k])
    if edges is not None:
        for k, row in enumerate(edges):
            if row.min() < 1 or row.max() > nv:
                raise MeshError(f"edge index out of range (1..{nv})", edge_lines[k])
    try:
        return Mesh(vertices, triangles[:, :3] - 1,
                    None if edges is None else edges - 1, edge_refs, refs)
    except MeshError as err:
        idx = getattr(err, "edge_index", None)
        if idx is not None:
            raise MeshError(str(err), edge_lines[idx]) from None
        raise


def write_medit_mesh(mesh):
    """Serialise ``mesh`` to Medit ASCII (inverse of :func:`parse_medit_mesh`)."""
    out = ["MeshVersionFormatted 2", "", "Dimension 2", "", "Vertices", str(mesh.n_nodes)]
    for (x, y), ref in zip(mesh.points, mesh.vertex_refs):
        out.append(f"{float(x)!r} {float(y)!r} {ref}")
    out += ["", "Triangles", str(mesh.n_triangles)]
    out += [f"{a + 1} {b + 1} {c + 1} 0" for a, b, c in mesh.triangles]
    out += ["", "Edges", str(len(mesh.boundary_edges))]
    out += [f"{a + 1} {b + 1} {lab}" for (a, b), lab in zip(mesh.boundary_edges, mesh.edge_labels)]
    out += ["", "End", ""]
    return "\n".join(out)
