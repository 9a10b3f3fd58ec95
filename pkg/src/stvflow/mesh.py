"""Conforming triangulations of the unit square with newest-vertex bisection.

A mesh is a set of leaf triangles of a binary forest rooted in a macro
triangulation.  Each triangle stores its vertices as (peak, a, b) where
(a, b) is the refinement edge (the edge opposite the newest vertex).
Bisection inserts the midpoint m of (a, b) and produces the children
(m, peak, a) and (m, b, peak), so the refinement edges of the children
are the legs of the parent.  The macro triangles are right isosceles
with the peak at the square centers, hence every descendant is again
right isosceles and the minimum angle is 45 degrees for all times.

Meshes are immutable: refinement and coarsening return new Mesh objects
that share the forest history, so triangle ids (forest node ids) and
vertex ids stay stable across adaptation steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Mesh", "MeshError", "macro_mesh", "from_root_triangulation", "refine", "coarsen"]

# minimum angle of any newest-vertex descendant of the macro triangles (radians)
MIN_ANGLE = np.pi / 4.0

_GEOM_TOL = 1e-14


class MeshError(Exception):
    """Raised for invalid mesh operations (non-leaf marks, degenerate geometry, ...)."""


@dataclass
class _Forest:
    """Growable binary forest storage shared by a mesh lineage.

    Vertex and triangle slots are append-mostly; coarsening frees triangle
    slots into a free list for reuse but never renumbers survivors.
    """

    verts: np.ndarray        # (capV, 2) float64
    vparent: np.ndarray      # (capV, 2) int64, parents of edge midpoints, -1 for root vertices
    nv: int
    tv: np.ndarray           # (capT, 3) int64, (peak, a, b)
    parent: np.ndarray       # (capT,) int64, -1 for macro roots
    children: np.ndarray     # (capT, 2) int64, -1 if leaf
    alive: np.ndarray        # (capT,) bool, False for freed slots
    level: np.ndarray        # (capT,) int64
    nt: int
    n_roots: int
    free: list

    def copy(self) -> "_Forest":
        return _Forest(
            verts=self.verts[: self.nv].copy(),
            vparent=self.vparent[: self.nv].copy(),
            nv=self.nv,
            tv=self.tv[: self.nt].copy(),
            parent=self.parent[: self.nt].copy(),
            children=self.children[: self.nt].copy(),
            alive=self.alive[: self.nt].copy(),
            level=self.level[: self.nt].copy(),
            nt=self.nt,
            n_roots=self.n_roots,
            free=list(self.free),
        )

    def _grow_verts(self, extra: int) -> None:
        cap = self.verts.shape[0]
        if self.nv + extra <= cap:
            return
        new_cap = max(2 * cap, self.nv + extra)
        self.verts = np.resize(self.verts, (new_cap, 2))
        self.vparent = np.resize(self.vparent, (new_cap, 2))

    def _grow_tris(self, extra: int) -> None:
        cap = self.tv.shape[0]
        if self.nt + extra <= cap:
            return
        new_cap = max(2 * cap, self.nt + extra)
        self.tv = np.resize(self.tv, (new_cap, 3))
        self.parent = np.resize(self.parent, new_cap)
        self.children = np.resize(self.children, (new_cap, 2))
        self.alive = np.resize(self.alive, new_cap)
        self.level = np.resize(self.level, new_cap)

    def new_vertex(self, xy: np.ndarray, pa: int, pb: int) -> int:
        self._grow_verts(1)
        v = self.nv
        self.verts[v] = xy
        self.vparent[v] = (min(pa, pb), max(pa, pb))
        self.nv += 1
        return v

    def new_tri(self, peak: int, a: int, b: int, parent: int, level: int) -> int:
        if self.free:
            t = self.free.pop()
        else:
            self._grow_tris(1)
            t = self.nt
            self.nt += 1
        self.tv[t] = (peak, a, b)
        self.parent[t] = parent
        self.children[t] = (-1, -1)
        self.alive[t] = True
        self.level[t] = level
        return t

    def free_tri(self, t: int) -> None:
        self.alive[t] = False
        self.children[t] = (-1, -1)
        self.free.append(t)


class Mesh:
    """Immutable view of the leaf triangulation of a bisection forest.

    Exposed arrays (all derived at construction):

    - ``coords``        (nv, 2)  coordinates of active vertices, ordered by global id
    - ``leaf_ids``      (nl,)    forest node ids of the leaves, ascending
    - ``leaf_verts``    (nl, 3)  global vertex ids per leaf, (peak, a, b) order
    - ``leaf_local``    (nl, 3)  same in local (active) numbering
    - ``area``          (nl,)    triangle areas
    - ``h_t``           (nl,)    longest edge per triangle
    - ``grads``         (nl, 3, 2) gradients of the three nodal basis functions
    - ``edge_verts``    (ne, 2)  global vertex ids per edge, sorted pairs
    - ``edge_tris``     (ne, 2)  adjacent leaf positions (into leaf arrays);
                                 second entry -1 on the boundary; interior pairs
                                 ordered by ascending leaf id
    - ``edge_boundary`` (ne,)    boundary flags
    - ``edge_h``        (ne,)    edge lengths
    - ``edge_normal``   (ne, 2)  unit normals, oriented from the first adjacent
                                 leaf into the second (outward on the boundary)
    - ``boundary_vertex`` (nv,)  mask over local vertices
    - ``interior_idx``  indices of interior (degree-of-freedom) vertices
    """

    def __init__(self, forest: _Forest, generation: int):
        self._forest = forest
        self.generation = generation
        self._cache = {}

        f = forest
        node_alive = f.alive[: f.nt]
        is_leaf = node_alive & (f.children[: f.nt, 0] < 0)
        self.leaf_ids = np.flatnonzero(is_leaf).astype(np.int64)
        if self.leaf_ids.size == 0:
            raise MeshError("mesh has no leaf triangles")
        self.leaf_verts = f.tv[self.leaf_ids]

        active = np.unique(self.leaf_verts)
        self.active_vids = active
        self.nv = active.size
        self.local_of = np.full(f.nv, -1, dtype=np.int64)
        self.local_of[active] = np.arange(self.nv, dtype=np.int64)
        self.coords = f.verts[active]
        self.leaf_local = self.local_of[self.leaf_verts]

        p = f.verts[self.leaf_verts]                      # (nl, 3, 2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(signed <= _GEOM_TOL):
            raise MeshError("degenerate or negatively oriented triangle")
        self.area = signed
        e0 = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
        e1 = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
        e2 = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
        self.h_t = np.maximum(np.maximum(e0, e1), e2)

        # gradients of nodal basis: grad phi_i = rot90(p_{i+1} - p_{i+2}) / (2A)
        inv2a = 1.0 / (2.0 * signed)
        g = np.empty((self.leaf_ids.size, 3, 2))
        g[:, 0, 0] = (p[:, 1, 1] - p[:, 2, 1]) * inv2a
        g[:, 0, 1] = (p[:, 2, 0] - p[:, 1, 0]) * inv2a
        g[:, 1, 0] = (p[:, 2, 1] - p[:, 0, 1]) * inv2a
        g[:, 1, 1] = (p[:, 0, 0] - p[:, 2, 0]) * inv2a
        g[:, 2, 0] = (p[:, 0, 1] - p[:, 1, 1]) * inv2a
        g[:, 2, 1] = (p[:, 1, 0] - p[:, 0, 0]) * inv2a
        self.grads = g

        self._build_edges(p)
        self._build_boundary()

    # -- construction helpers -------------------------------------------------

    def _build_edges(self, p: np.ndarray) -> None:
        nl = self.leaf_ids.size
        # local edge slots: (a,b) refinement edge, (peak,a), (peak,b)
        slots = np.array([[1, 2], [0, 1], [0, 2]])
        pairs = self.leaf_verts[:, slots]                 # (nl, 3, 2)
        pairs = np.sort(pairs, axis=2).reshape(-1, 2)
        edge_verts, inverse, counts = np.unique(
            pairs, axis=0, return_inverse=True, return_counts=True
        )
        if np.any(counts > 2):
            raise MeshError("non-manifold edge: more than two adjacent triangles")
        ne = edge_verts.shape[0]
        self.edge_verts = edge_verts
        self.edge_boundary = counts == 1

        owner = np.repeat(np.arange(nl, dtype=np.int64), 3)
        # per edge: adjacent leaves ordered by ascending leaf id
        order = np.lexsort((self.leaf_ids[owner], inverse))
        einv = inverse[order]
        eown = owner[order]
        first = np.searchsorted(einv, np.arange(ne))
        edge_tris = np.full((ne, 2), -1, dtype=np.int64)
        edge_tris[:, 0] = eown[first]
        second = first + 1
        interior = ~self.edge_boundary
        edge_tris[interior, 1] = eown[second[interior]]
        self.edge_tris = edge_tris

        va = self.coords[self.local_of[edge_verts[:, 0]]]
        vb = self.coords[self.local_of[edge_verts[:, 1]]]
        tang = vb - va
        self.edge_h = np.linalg.norm(tang, axis=1)
        normal = np.stack([tang[:, 1], -tang[:, 0]], axis=1) / self.edge_h[:, None]
        # orient from first adjacent triangle into the second (outward on boundary)
        cent = p.mean(axis=1)
        mid = 0.5 * (va + vb)
        ref = cent[edge_tris[:, 0]]
        flip = np.einsum("ij,ij->i", normal, mid - ref) < 0.0
        normal[flip] *= -1.0
        self.edge_normal = normal

    def _build_boundary(self) -> None:
        mask = np.zeros(self.nv, dtype=bool)
        bverts = self.edge_verts[self.edge_boundary].ravel()
        mask[self.local_of[bverts]] = True
        self.boundary_vertex = mask
        self.interior_idx = np.flatnonzero(~mask)

    # -- public queries --------------------------------------------------------

    @property
    def n_leaves(self) -> int:
        return self.leaf_ids.size

    @property
    def ndof(self) -> int:
        """Dimension of the zero-trace P1 space: number of interior vertices."""
        return self.interior_idx.size

    def leaf_position(self, leaf_id_array: np.ndarray) -> np.ndarray:
        """Positions of given leaf ids inside the leaf arrays."""
        pos = np.searchsorted(self.leaf_ids, leaf_id_array)
        if np.any(pos >= self.leaf_ids.size) or np.any(self.leaf_ids[pos] != leaf_id_array):
            raise MeshError("id does not refer to a leaf of this mesh")
        return pos

    def tri_levels(self) -> np.ndarray:
        return self._forest.level[self.leaf_ids]

    def barycenters(self) -> np.ndarray:
        return self.coords[self.leaf_local].mean(axis=1)

    def min_angle(self) -> float:
        p = self.coords[self.leaf_local]
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            cosang = np.einsum("ij,ij->i", u, v) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
            )
            angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
        return float(np.min(angles))

    def same_lineage(self, other: "Mesh") -> bool:
        """Whether both meshes descend from the same macro triangulation."""
        a, b = self._forest, other._forest
        return a.n_roots == b.n_roots and np.array_equal(
            a.verts[: _root_vertex_count(a)], b.verts[: _root_vertex_count(b)]
        )


def _root_vertex_count(f: _Forest) -> int:
    return int(f.tv[: f.n_roots].max()) + 1


# -- constructors ---------------------------------------------------------------


def from_root_triangulation(vertices: np.ndarray, triangles: np.ndarray) -> Mesh:
    """Mesh from an explicit conforming root triangulation.

    Each triangle is reordered so that its longest edge becomes the
    refinement edge.  Triangles must be positively oriented after the
    reorder; the input must be edge-conforming.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("vertices must be (n, 2)")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise MeshError("triangles must be (m, 3)")

    tv = np.empty_like(triangles)
    for k, tri in enumerate(triangles):
        p = vertices[tri]
        lengths = [
            np.linalg.norm(p[2] - p[1]),   # edge opposite vertex 0
            np.linalg.norm(p[2] - p[0]),
            np.linalg.norm(p[1] - p[0]),
        ]
        peak_slot = int(np.argmax(lengths))
        a_slot, b_slot = [s for s in range(3) if s != peak_slot]
        peak, a, b = tri[peak_slot], tri[a_slot], tri[b_slot]
        pa, pb, pp = vertices[a], vertices[b], vertices[peak]
        signed = 0.5 * ((pa[0] - pp[0]) * (pb[1] - pp[1]) - (pa[1] - pp[1]) * (pb[0] - pp[0]))
        if signed < 0:
            a, b = b, a
        tv[k] = (peak, a, b)

    nt = triangles.shape[0]
    forest = _Forest(
        verts=vertices.copy(),
        vparent=np.full((vertices.shape[0], 2), -1, dtype=np.int64),
        nv=vertices.shape[0],
        tv=tv,
        parent=np.full(nt, -1, dtype=np.int64),
        children=np.full((nt, 2), -1, dtype=np.int64),
        alive=np.ones(nt, dtype=bool),
        level=np.zeros(nt, dtype=np.int64),
        nt=nt,
        n_roots=nt,
        free=[],
    )
    return Mesh(forest, generation=0)


def macro_mesh(n: int) -> Mesh:
    """Macro triangulation of the unit square.

    n x n squares of side 1/n, each split into four triangles by its
    center point: (n+1)^2 + n^2 vertices and 4 n^2 triangles.  The peak
    of each macro triangle is the square center, so the refinement edge
    is the square side (its longest edge).
    """
    if n < 1:
        raise MeshError("n must be a positive integer")
    h = 1.0 / n
    grid = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(grid, grid, indexing="xy")
    corners = np.stack([gx.ravel(), gy.ravel()], axis=1)
    cg = (grid[:-1] + grid[1:]) / 2.0
    cx, cy = np.meshgrid(cg, cg, indexing="xy")
    centers = np.stack([cx.ravel(), cy.ravel()], axis=1)
    verts = np.concatenate([corners, centers], axis=0)

    def cid(i, j):
        return j * (n + 1) + i

    def mid(i, j):
        return (n + 1) * (n + 1) + j * n + i

    tv = np.empty((4 * n * n, 3), dtype=np.int64)
    k = 0
    for j in range(n):
        for i in range(n):
            m = mid(i, j)
            c00, c10 = cid(i, j), cid(i + 1, j)
            c11, c01 = cid(i + 1, j + 1), cid(i, j + 1)
            tv[k + 0] = (m, c00, c10)
            tv[k + 1] = (m, c10, c11)
            tv[k + 2] = (m, c11, c01)
            tv[k + 3] = (m, c01, c00)
            k += 4

    nt = tv.shape[0]
    forest = _Forest(
        verts=verts,
        vparent=np.full((verts.shape[0], 2), -1, dtype=np.int64),
        nv=verts.shape[0],
        tv=tv,
        parent=np.full(nt, -1, dtype=np.int64),
        children=np.full((nt, 2), -1, dtype=np.int64),
        alive=np.ones(nt, dtype=bool),
        level=np.zeros(nt, dtype=np.int64),
        nt=nt,
        n_roots=nt,
        free=[],
    )
    del h
    return Mesh(forest, generation=0)


# -- refinement -------------------------------------------------------------------


def _edge_key(a: int, b: int):
    return (a, b) if a < b else (b, a)


def refine(mesh: Mesh, marked) -> Mesh:
    """Bisect the marked leaves once each, plus recursive conforming closure.

    Every bisection splits the triangle at its refinement edge; when the
    neighbor across that edge carries a different refinement edge it is
    bisected first, which terminates because the macro mesh is strongly
    compatible.  Returns a new mesh; the input is untouched.
    """
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if marked.size == 0:
        return Mesh(mesh._forest.copy(), mesh.generation + 1)
    mesh.leaf_position(marked)  # validates leaf ids

    f = mesh._forest.copy()

    # adjacency map over current leaf edges, kept live during the operation
    edge_map: dict = {}
    for t, (peak, a, b) in zip(mesh.leaf_ids, mesh.leaf_verts):
        for key in (_edge_key(a, b), _edge_key(peak, a), _edge_key(peak, b)):
            edge_map.setdefault(key, []).append(int(t))

    # reuse midpoint vertices surviving in the pool from earlier refinements
    midpoint_of: dict = {}
    vp = f.vparent[: f.nv]
    for v in np.flatnonzero(vp[:, 0] >= 0):
        midpoint_of[(int(vp[v, 0]), int(vp[v, 1]))] = int(v)

    def split(t: int, m: int) -> None:
        peak, a, b = (int(x) for x in f.tv[t])
        lvl = int(f.level[t]) + 1
        c1 = f.new_tri(m, peak, a, t, lvl)
        c2 = f.new_tri(m, b, peak, t, lvl)
        f.children[t] = (c1, c2)
        for key in (_edge_key(a, b), _edge_key(peak, a), _edge_key(peak, b)):
            edge_map[key].remove(t)
        for c, (q, u, w) in ((c1, (m, peak, a)), (c2, (m, b, peak))):
            for key in (_edge_key(u, w), _edge_key(q, u), _edge_key(q, w)):
                edge_map.setdefault(key, []).append(c)

    guard = 0
    stack: list = []
    for t0 in marked:
        stack.append(int(t0))
        while stack:
            guard += 1
            if guard > 64 * (f.nt + marked.size):
                raise MeshError("refinement closure does not terminate")
            t = stack[-1]
            if f.children[t, 0] >= 0:
                stack.pop()
                continue
            peak, a, b = (int(x) for x in f.tv[t])
            key = _edge_key(a, b)
            others = [s for s in edge_map.get(key, ()) if s != t]
            nb = others[0] if others else None
            if nb is not None:
                npk, na, nbv = (int(x) for x in f.tv[nb])
                if _edge_key(na, nbv) != key:
                    stack.append(nb)
                    continue
            if key in midpoint_of:
                m = midpoint_of[key]
            else:
                xy = 0.5 * (f.verts[key[0]] + f.verts[key[1]])
                m = f.new_vertex(xy, key[0], key[1])
                midpoint_of[key] = m
            split(t, m)
            if nb is not None:
                split(nb, m)
            stack.pop()

    return Mesh(f, mesh.generation + 1)


def coarsen(mesh: Mesh, marked) -> Mesh:
    """Merge sibling pairs whose two leaves are both marked, one level deep.

    A merge around a bisection midpoint m happens only when every leaf
    touching m belongs to the merging sibling pairs (both pairs for an
    interior edge, one on the boundary), which preserves conformity.
    Macro triangles are roots and are never removed.  Unmergeable marks
    are ignored.
    """
    marked = {int(t) for t in np.asarray(list(marked), dtype=np.int64).ravel()}
    if marked:
        mesh.leaf_position(np.array(sorted(marked), dtype=np.int64))

    f = mesh._forest.copy()

    leaf_set = set(int(t) for t in mesh.leaf_ids)
    cand_parents = set()
    for t in marked:
        p = int(f.parent[t])
        if p < 0:
            continue
        c1, c2 = (int(c) for c in f.children[p])
        if c1 in marked and c2 in marked and c1 in leaf_set and c2 in leaf_set:
            cand_parents.add(p)

    if not cand_parents:
        return Mesh(f, mesh.generation + 1)

    # group candidate parents by the midpoint vertex their bisection created
    groups: dict = {}
    for p in cand_parents:
        m = int(f.tv[int(f.children[p, 0]), 0])  # children peak = midpoint
        groups.setdefault(m, []).append(p)

    # leaves touching each candidate midpoint
    cand_m = np.array(sorted(groups), dtype=np.int64)
    touching: dict = {int(m): set() for m in cand_m}
    hit = np.isin(mesh.leaf_verts, cand_m)
    rows, cols = np.nonzero(hit)
    for r, c in zip(rows, cols):
        touching[int(mesh.leaf_verts[r, c])].add(int(mesh.leaf_ids[r]))

    for m in sorted(groups):
        parents = groups[m]
        kids = {int(c) for p in parents for c in f.children[p]}
        if touching[m] != kids:
            continue  # merge would leave a hanging node
        for p in parents:
            c1, c2 = (int(c) for c in f.children[p])
            f.free_tri(c1)
            f.free_tri(c2)
            f.children[p] = (-1, -1)

    return Mesh(f, mesh.generation + 1)
