"""Isosurface extraction from binary masks and Wavefront OBJ export.

Standard 256-case marching cubes over the 0/1 voxel field at iso level
0.5. The mask is zero-padded by one voxel so surfaces close at the volume
border; with binary data every surface vertex sits at a cube-edge
midpoint. Vertices are deduplicated through global edge keys and emitted
in cell-scan order, so output is deterministic.
"""

from dataclasses import dataclass

import numpy as np

from ._mc_tables import CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE


@dataclass
class TriangleMesh:
    vertices: np.ndarray   # (nv, 3) float64, mm
    triangles: np.ndarray  # (nt, 3) int

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def edges(self):
        """Unique undirected edges as a (ne, 2) sorted-index array."""
        if self.n_triangles == 0:
            return np.empty((0, 2), dtype=int)
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def euler_characteristic(self):
        return self.n_vertices - len(self.edges()) + self.n_triangles


def extract_surface(mask, spacing_mm=1.25):
    """Triangulate the boundary of a 3D binary mask.

    Vertex coordinates are in mm on the one-voxel-padded grid (so they
    always lie inside the padded bounding box). An empty mask yields an
    empty mesh.
    """
    mask = np.asarray(mask)
    if mask.ndim != 3:
        raise ValueError(f"mask must be 3D, got shape {mask.shape}")
    if not np.all((mask == 0) | (mask == 1)):
        raise ValueError("mask must be 0/1 valued")
    if not mask.any():
        return TriangleMesh(np.empty((0, 3)), np.empty((0, 3), dtype=int))

    # field indexed [x, y, z]; corner "inside" means value > iso
    field = np.pad(mask.astype(np.uint8), 1).transpose(2, 1, 0)
    below = field == 0

    # case index per cell from the 8 corner tests (bit set when below iso)
    case = np.zeros(tuple(s - 1 for s in field.shape), dtype=np.uint8)
    for bit, (ox, oy, oz) in enumerate(CORNER_OFFSETS):
        nx, ny, nz = case.shape
        case |= (
            below[ox:ox + nx, oy:oy + ny, oz:oz + nz].astype(np.uint8) << bit
        )
    active = np.argwhere((case != 0) & (case != 0xFF))

    ny_c, nz_c = case.shape[1] + 1, case.shape[2] + 1
    vertex_ids = {}
    vertices = []
    triangles = []
    for x, y, z in active:
        tri_edges = TRI_TABLE[case[x, y, z]]
        if not tri_edges:
            continue
        cell_vertex = {}
        for e in set(tri_edges):
            ca, cb = EDGE_CORNERS[e]
            ax, ay, az = CORNER_OFFSETS[ca]
            bx, by, bz = CORNER_OFFSETS[cb]
            pa = (x + ax, y + ay, z + az)
            pb = (x + bx, y + by, z + bz)
            lo = min(pa, pb)
            axis = 0 if pa[0] != pb[0] else (1 if pa[1] != pb[1] else 2)
            key = ((lo[0] * ny_c + lo[1]) * nz_c + lo[2]) * 3 + axis
            vid = vertex_ids.get(key)
            if vid is None:
                vid = len(vertices)
                vertex_ids[key] = vid
                mid = (np.array(pa, dtype=np.float64) + np.array(pb)) / 2.0
                vertices.append(mid * spacing_mm)
            cell_vertex[e] = vid
        for k in range(0, len(tri_edges), 3):
            # table order already yields outward-facing triangles
            triangles.append(tuple(cell_vertex[tri_edges[k + i]] for i in range(3)))
    return TriangleMesh(np.array(vertices), np.array(triangles, dtype=int))


def write_mesh(mesh, path, fmt="obj"):
    """Write Wavefront-style text: 'v x y z' records, 1-indexed 'f' faces."""
    if fmt != "obj":
        raise ValueError(f"unsupported mesh format {fmt!r}")
    with open(path, "w") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
    return path


def read_mesh(path):
    """Parse the OBJ subset written by write_mesh."""
    vertices, triangles = [], []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                triangles.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return TriangleMesh(
        np.array(vertices).reshape(-1, 3),
        np.array(triangles, dtype=int).reshape(-1, 3),
    )
