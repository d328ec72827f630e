"""Uniform-grid neighbor search producing capacity-padded CSR lists."""

from __future__ import annotations

import numpy as np

from . import _kernels


class NeighborLists:
    """Fixed-radius adjacency: row i is indices[indptr[i] : indptr[i]+nlen[i]].

    Rows are capacity-padded (built in a single sweep), symmetric
    (j in N(i) iff i in N(j)) and exclude the point itself.  ``cutoff`` is
    the radius actually used, which may include a skin margin on top of the
    kernel support.
    """

    def __init__(self, indptr, nlen, indices, cutoff):
        self.indptr = indptr
        self.nlen = nlen
        self.indices = indices
        self.cutoff = float(cutoff)

    def neighbors(self, i):
        s = self.indptr[i]
        return self.indices[s:s + self.nlen[i]]

    @property
    def n_points(self):
        return len(self.nlen)

    @property
    def n_pairs(self):
        return int(self.nlen.sum())


def _grid_cells(pos, cutoff, lo, hi):
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    dims = np.maximum(np.floor((hi - lo) / cutoff).astype(np.int64) + 1, 1)
    cell = np.floor((np.clip(pos, lo, hi) - lo) / cutoff).astype(np.int64)
    np.clip(cell, 0, dims - 1, out=cell)
    return cell, dims


def _spread_bits(v):
    # interleave-ready spread of 16-bit values to every third bit
    v = v.astype(np.uint64)
    v = (v | (v << 32)) & np.uint64(0x1F00000000FFFF)
    v = (v | (v << 16)) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v << 8)) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v << 4)) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v << 2)) & np.uint64(0x1249249249249249)
    return v


def morton_order(pos, cutoff, lo, hi):
    """Permutation sorting points along a Z-order curve of their grid cells.

    Points ordered this way keep their spatial neighbors nearby in memory,
    which makes the gather-heavy SPH loops cache-friendly.
    """
    cell, _ = _grid_cells(pos, cutoff, lo, hi)
    key = (_spread_bits(cell[:, 0]) | (_spread_bits(cell[:, 1]) << np.uint64(1))
           | (_spread_bits(cell[:, 2]) << np.uint64(2)))
    return np.argsort(key, kind="stable")


def build_neighbor_lists(pos, cutoff, lo=None, hi=None, reach=2
                         ) -> NeighborLists:
    """Exact fixed-radius neighbor lists over an arbitrary point cloud.

    ``lo``/``hi`` clamp the cell grid to a fixed box (used by the solver so
    a stray particle cannot blow up the grid); by default the box is the
    bounding box of the points.  Points outside the box are assigned to edge
    cells and filtered by the exact distance check.  ``reach`` subdivides
    cells (size cutoff/reach, scan +-reach) to trim the candidate volume.
    """
    pos = np.ascontiguousarray(pos, dtype=np.float64)
    n = pos.shape[0]
    if n == 0:
        z = np.zeros(0, dtype=np.int64)
        return NeighborLists(z, z.copy(), np.zeros(0, dtype=np.int32), cutoff)
    if lo is None:
        lo = pos.min(axis=0) - 1e-9
    if hi is None:
        hi = pos.max(axis=0) + 1e-9
    cell, dims = _grid_cells(pos, cutoff / reach, lo, hi)
    ids = cell[:, 0] + dims[0] * (cell[:, 1] + dims[1] * cell[:, 2])
    order = np.argsort(ids, kind="stable").astype(np.int32)
    pos_sorted = pos[order]
    n_cells = int(dims[0] * dims[1] * dims[2])
    cell_start = np.zeros(n_cells + 1, dtype=np.int64)
    np.cumsum(np.bincount(ids, minlength=n_cells), out=cell_start[1:])

    caps = np.empty(n, dtype=np.int64)
    _kernels.candidate_caps(cell, dims, cell_start, reach, caps)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(caps, out=indptr[1:])
    indices = np.empty(int(indptr[-1]), dtype=np.int32)
    nlen = np.empty(n, dtype=np.int64)
    _kernels.fill_neighbors(pos, pos_sorted, order, cell, dims, cell_start,
                            reach, cutoff * cutoff, indptr, indices, nlen)
    return NeighborLists(indptr[:-1], nlen, indices, cutoff)


def neighbor_search(particles_pos, markers_pos=None, support=None
                    ) -> NeighborLists:
    """Neighbor lists over soil particles plus (optionally) markers.

    Markers are appended after the particles, so combined indices >= the
    particle count refer to markers.
    """
    if support is None or support <= 0:
        raise ValueError("support radius must be positive")
    pts = [np.atleast_2d(np.asarray(particles_pos, dtype=np.float64))]
    if markers_pos is not None and len(markers_pos) > 0:
        pts.append(np.atleast_2d(np.asarray(markers_pos, dtype=np.float64)))
    return build_neighbor_lists(np.vstack(pts), support)
