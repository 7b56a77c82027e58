"""Orthotropically stable interpolation operators on lattice meshes.

Two families are provided:

* ``AveragedInterpolant`` (positivity preserving): nodal values are
  means of the input over the box v(k) + (-h/2, h/2)^2, summed against
  the interior Lagrange basis.  Stable per cell and direction with
  constant one.

* ``DualBasisProjector``: a genuine projection.  The node functionals
  pair the input with a dual function supported on the patch of the
  node, either piecewise quadratic on the half-refined Kuhn patch
  (eight triangles around the node, usable for both the Q1 and the P1
  target) or piecewise bilinear on the four adjacent squares of a quad
  mesh (Q1 target only).  Near the boundary the input is extended by
  odd reflection, realized as an evaluation rule: query points are
  reflected into the domain and the value sign is flipped once per
  reflection.

The dual coefficient tables are validated at construction by solving
the local patch mass system and comparing.

Inputs may be analytic callables on (n, 2) point arrays (integrated by
Gauss rules of a configurable degree) or FE functions; for FE inputs
the standard rules are exact whenever the input mesh is the same
lattice or a nested refinement of double resolution.
"""

import numpy as np

from .fespace import FeFunction, quadrature_rule

__all__ = [
    "AveragedInterpolant",
    "DualBasisProjector",
    "build_dual_table",
    "transfer",
]

FE_PAIRING_DEGREE = 4

# dual coefficients on the simplicial patch by node class: the key is
# the sorted pair (|x|, |y|) in units of h, the value is in units of
# h^-2.  Vertex classes first, edge-midpoint classes after.
_SIMPLICIAL_DUAL_CLASSES = {
    (0.0, 0.0): 36.0,
    (0.0, 0.5): 6.0,
    (0.5, 0.5): 6.0,
    (0.25, 0.5): 6.0,
    (0.0, 0.25): -1.5,
    (0.25, 0.25): -1.5,
}


def _point_evaluator(w):
    if isinstance(w, FeFunction):
        return w.evaluate
    if callable(w):
        def ev(points):
            vals = np.asarray(w(points), dtype=float)
            if vals.ndim == 0:
                vals = np.full(len(points), float(vals))
            return vals
        return ev
    raise TypeError("input must be an FeFunction or a callable on point arrays")


def _odd_reflection(ev, bounds):
    """Evaluate through repeated odd reflection across the domain faces."""
    lo, hi = bounds

    def reflected(points):
        pts = points.copy()
        sign = np.ones(len(pts))
        for d in (0, 1):
            mask = pts[:, d] < lo
            pts[mask, d] = 2 * lo - pts[mask, d]
            sign[mask] *= -1.0
            mask = pts[:, d] > hi
            pts[mask, d] = 2 * hi - pts[mask, d]
            sign[mask] *= -1.0
        return sign * ev(pts)

    return reflected


def _require_lattice(mesh, what):
    if not mesh.is_lattice_mesh:
        raise ValueError(f"{what} is defined on lattice meshes only "
                         f"(pattern {mesh.pattern!r} carries non-lattice nodes)")


def _exact_cell_means(w):
    """Per-cell integral means of an FE function (exact for P1 and Q1)."""
    mesh = w.space.mesh
    return w.coeffs[mesh.cells].mean(axis=1)


class AveragedInterpolant:
    """Box-average quasi-interpolant onto a Q1 or lattice P1 space."""

    def __init__(self, space, degree=6):
        _require_lattice(space.mesh, "the averaged interpolant")
        self.space = space
        self.degree = degree
        h = space.mesh.h
        rule = quadrature_rule("quad", degree)
        # quadrant-wise tensor rule on the averaging box, so inputs that
        # are piecewise polynomial on the half lattice integrate exactly
        pts, wts = [], []
        for qx in (-1.0, 1.0):
            for qy in (-1.0, 1.0):
                pts.append(rule.points * np.array([qx, qy]) * (h / 2))
                wts.append(rule.weights / 4.0)
        self._box_points = np.concatenate(pts)     # offsets from the node
        self._box_weights = np.concatenate(wts)    # sums to 1

    def _check_interior(self, k):
        k1, k2 = k
        n = self.space.mesh.n
        if not (1 <= k1 <= n - 1 and 1 <= k2 <= n - 1):
            raise ValueError(
                f"averaging box at node {k} leaves the domain and no "
                "extension rule is supplied")

    def _node_positions(self, index_pairs):
        mesh = self.space.mesh
        lo, _ = mesh.bounds
        kk = np.asarray(index_pairs, dtype=float)
        return lo + kk * mesh.h

    def _averages_exact(self, w, index_pairs):
        source = w.space.mesh
        mesh = self.space.mesh
        if source.bounds != mesh.bounds or source.n % (2 * mesh.n) != 0:
            raise ValueError(
                "exact box averages need an input mesh nested at double "
                "resolution; pass a callable otherwise")
        centroids = source.nodes[source.cells].mean(axis=1)
        means = _exact_cell_means(w)
        areas = np.abs(source.cell_areas())
        half = mesh.h / 2
        out = np.empty(len(index_pairs))
        for i, pos in enumerate(self._node_positions(index_pairs)):
            inside = (np.abs(centroids[:, 0] - pos[0]) < half) \
                & (np.abs(centroids[:, 1] - pos[1]) < half)
            out[i] = np.sum(areas[inside] * means[inside]) / mesh.h ** 2
        return out

    def _averages_quadrature(self, ev, index_pairs):
        positions = self._node_positions(index_pairs)
        pts = positions[:, None, :] + self._box_points[None, :, :]
        vals = ev(pts.reshape(-1, 2)).reshape(len(positions), -1)
        return vals @ self._box_weights

    def box_average(self, w, k):
        """Mean of the input over the box centered at interior node k."""
        self._check_interior(k)
        if isinstance(w, FeFunction):
            return float(self._averages_exact(w, [k])[0])
        return float(self._averages_quadrature(_point_evaluator(w), [k])[0])

    def apply(self, w):
        """Interpolant with box-average coefficients, zero on the boundary."""
        mesh = self.space.mesh
        pairs = mesh.interior_lattice_indices()
        if isinstance(w, FeFunction):
            averages = self._averages_exact(w, pairs)
        else:
            averages = self._averages_quadrature(_point_evaluator(w), pairs)
        coeffs = np.zeros(self.space.ndofs)
        for (k1, k2), val in zip(pairs, averages):
            coeffs[mesh.lattice_node(k1, k2)] = val
        return FeFunction(self.space, coeffs)


def _p2_shapes(ref_points):
    x, y = ref_points[:, 0], ref_points[:, 1]
    l0, l1, l2 = 1 - x - y, x, y
    return np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                     4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1], axis=1)


def _patch_triangles(h):
    """The eight simplices of the canonical patch, as offsets from the node."""
    tris = []
    for qx in (-1.0, 1.0):
        for qy in (-1.0, 1.0):
            corner = np.array([qx * h / 2, qy * h / 2])
            on_x = np.array([qx * h / 2, 0.0])
            on_y = np.array([0.0, qy * h / 2])
            origin = np.zeros(2)
            tris.append(np.array([origin, on_x, corner]))
            tris.append(np.array([origin, corner, on_y]))
    return np.asarray(tris)  # (8, 3, 2)


def _classify_dual_coeff(offset, h):
    key = tuple(sorted(round(abs(c) / h, 6) for c in offset))
    return _SIMPLICIAL_DUAL_CLASSES[key] / h ** 2


class DualBasisProjector:
    """Projection onto Q1/P1 lattice spaces via a biorthogonal dual basis.

    Parameters
    ----------
    kind : str
        ``"simplicial"`` (piecewise quadratic dual on the half-refined
        Kuhn patch; pairs with both Q1 and P1 targets) or ``"cubic"``
        (piecewise bilinear on the four adjacent squares; Q1 only).
    mesh : StructuredMesh
        Alternating-kuhn triangle mesh (simplicial) or quad mesh
        (cubic); fixes the lattice, spacing, and bounds.
    callable_degree : int
        Gauss degree used for analytic inputs (FE inputs use the exact
        degree-4 rules).
    """

    def __init__(self, kind, mesh, callable_degree=6):
        if kind == "simplicial":
            if mesh.kind != "triangle" or mesh.pattern != "alternating-kuhn":
                raise ValueError("simplicial dual tables need an alternating-kuhn mesh")
        elif kind == "cubic":
            if mesh.kind != "quad":
                raise ValueError("cubic dual tables need a quad mesh")
        else:
            raise ValueError(f"unknown dual table kind {kind!r}")
        _require_lattice(mesh, "the dual-basis projector")
        self.kind = kind
        self.mesh = mesh
        self.callable_degree = callable_degree
        h = mesh.h
        if kind == "simplicial":
            tris = _patch_triangles(h)
            mids = np.stack([(tris[:, 1] + tris[:, 2]) / 2,
                             (tris[:, 2] + tris[:, 0]) / 2,
                             (tris[:, 0] + tris[:, 1]) / 2], axis=1)
            self._tri_nodes = np.concatenate([tris, mids], axis=1)  # (8, 6, 2)
            self.table = np.array([[_classify_dual_coeff(p, h) for p in tri]
                                   for tri in self._tri_nodes])
            self._rules = {}
            for label, degree in (("fe", FE_PAIRING_DEGREE), ("callable", callable_degree)):
                rule = quadrature_rule("triangle", max(degree, FE_PAIRING_DEGREE))
                shapes = _p2_shapes(rule.points)
                pts = (tris[:, None, 0, :]
                       + rule.points[None, :, 0, None] * (tris[:, None, 1, :] - tris[:, None, 0, :])
                       + rule.points[None, :, 1, None] * (tris[:, None, 2, :] - tris[:, None, 0, :]))
                wts = np.broadcast_to(rule.weights * 2 * (h ** 2 / 8), pts.shape[:2])
                dual = np.einsum("qa,ta->tq", shapes, self.table)
                self._rules[label] = (pts.reshape(-1, 2), (wts * dual).ravel())
        else:
            self._rules = {}
            for label, degree in (("fe", FE_PAIRING_DEGREE), ("callable", callable_degree)):
                rule = quadrature_rule("quad", max(degree, FE_PAIRING_DEGREE))
                pts, wd = [], []
                for qx in (-1.0, 1.0):
                    for qy in (-1.0, 1.0):
                        local = rule.points * np.array([qx, qy]) * h
                        dual = ((2 - 3 * rule.points[:, 0])
                                * (2 - 3 * rule.points[:, 1]) / h ** 2)
                        pts.append(local)
                        wd.append(rule.weights * h ** 2 * dual)
                self._rules[label] = (np.concatenate(pts), np.concatenate(wd))
            # corner-value table per adjacent square: node, neighbors, diagonal
            self.table = np.array([4.0, -2.0, -2.0, 1.0]) / h ** 2
        self._validate_against_mass_solve()

    # -- build-time oracle -------------------------------------------------

    def _validate_against_mass_solve(self):
        h = self.mesh.h
        if self.kind == "simplicial":
            tris = _patch_triangles(h)
            node_ids = {}

            def nid(p):
                key = (round(p[0] / h * 8), round(p[1] / h * 8))
                return node_ids.setdefault(key, len(node_ids))

            ids = np.array([[nid(p) for p in tri] for tri in self._tri_nodes])
            rule = quadrature_rule("triangle", 4)
            shapes = _p2_shapes(rule.points)
            mass = np.zeros((len(node_ids), len(node_ids)))
            for tri, tid in zip(tris, ids):
                e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
                area = abs(e1[0] * e2[1] - e1[1] * e2[0]) / 2
                local = np.einsum("q,qa,qb->ab", rule.weights * 2 * area, shapes, shapes)
                mass[np.ix_(tid, tid)] += local
            rhs = np.zeros(len(node_ids))
            rhs[nid(np.zeros(2))] = 1.0
            coeffs = np.linalg.solve(mass, rhs)
            tabulated = self.table
            solved = coeffs[ids]
        else:
            node_ids = {}

            def nid(p):
                key = (round(p[0] / h), round(p[1] / h))
                return node_ids.setdefault(key, len(node_ids))

            quads = []
            for qx in (-1.0, 1.0):
                for qy in (-1.0, 1.0):
                    quads.append(np.array([[0.0, 0.0], [qx * h, 0.0],
                                           [0.0, qy * h], [qx * h, qy * h]]))
            ids = np.array([[nid(p) for p in q] for q in quads])
            x, w = np.polynomial.legendre.leggauss(2)
            x, w = (x + 1) / 2, w / 2
            mass = np.zeros((len(node_ids), len(node_ids)))
            for quad, qid in zip(quads, ids):
                for xi, wx in zip(x, w):
                    for eta, wy in zip(x, w):
                        shape = np.array([(1 - xi) * (1 - eta), xi * (1 - eta),
                                          (1 - xi) * eta, xi * eta])
                        mass[np.ix_(qid, qid)] += wx * wy * h ** 2 * np.outer(shape, shape)
            rhs = np.zeros(len(node_ids))
            rhs[nid(np.zeros(2))] = 1.0
            coeffs = np.linalg.solve(mass, rhs)
            tabulated = np.broadcast_to(self.table, (4, 4))
            solved = coeffs[ids]
        scale = np.abs(tabulated).max()
        if np.abs(solved - tabulated).max() > 1e-9 * scale:
            raise AssertionError(
                "dual coefficient table disagrees with the local mass solve")

    # -- pairings and projection -------------------------------------------

    def _node_position(self, j):
        lo, _ = self.mesh.bounds
        return np.array([lo + j[0] * self.mesh.h, lo + j[1] * self.mesh.h])

    def _pairings(self, w, index_pairs):
        ev = _odd_reflection(_point_evaluator(w), self.mesh.bounds)
        label = "fe" if isinstance(w, FeFunction) else "callable"
        offsets, weighted_dual = self._rules[label]
        positions = np.array([self._node_position(j) for j in index_pairs])
        pts = positions[:, None, :] + offsets[None, :, :]
        vals = ev(pts.reshape(-1, 2)).reshape(len(index_pairs), -1)
        return vals @ weighted_dual

    def pairing(self, w, j):
        """Pairing of the input with the node dual function.

        Boundary nodes are admissible: the input is extended by odd
        reflection, which makes the pairing vanish there.
        """
        n = self.mesh.n
        if not (0 <= j[0] <= n and 0 <= j[1] <= n):
            raise ValueError(f"node index {j} outside the lattice")
        return float(self._pairings(w, [j])[0])

    def apply(self, w, target_space):
        """Project onto the target space; zero trace by construction."""
        target = target_space.mesh
        if target.bounds != self.mesh.bounds or target.n != self.mesh.n:
            raise ValueError("target lattice does not match the projector")
        _require_lattice(target, "the dual-basis projection target")
        if self.kind == "cubic" and target_space.kind != "Q1":
            raise ValueError("cubic dual tables are biorthogonal to Q1 targets only")
        pairs = target.interior_lattice_indices()
        values = self._pairings(w, pairs)
        coeffs = np.zeros(target_space.ndofs)
        for (k1, k2), val in zip(pairs, values):
            coeffs[target.lattice_node(k1, k2)] = val
        return FeFunction(target_space, coeffs)


def build_dual_table(kind, mesh, callable_degree=6):
    """Construct and validate a dual-basis projector for the mesh."""
    return DualBasisProjector(kind, mesh, callable_degree)


def transfer(v, target_space):
    """Copy nodal values between Q1 and P1 spaces on matching lattices."""
    source = v.space.mesh
    target = target_space.mesh
    _require_lattice(source, "transfer")
    _require_lattice(target, "transfer")
    if source.n != target.n or source.bounds != target.bounds:
        raise ValueError("transfer needs matching lattices")
    coeffs = np.zeros(target_space.ndofs)
    for k1 in range(source.n + 1):
        for k2 in range(source.n + 1):
            coeffs[target.lattice_node(k1, k2)] = v.coeffs[source.lattice_node(k1, k2)]
    return FeFunction(target_space, coeffs)
