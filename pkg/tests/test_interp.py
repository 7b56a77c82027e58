import numpy as np
import pytest

from orthofem.fespace import (FeFunction, FeSpace, abs_partial_integral,
                              integrate, interpolate_nodal, locate)
from orthofem.interp import AveragedInterpolant, build_dual_table, transfer
from orthofem.mesh import build_quad, build_tri, element_patch

# stability/locality constants measured once by the deterministic sweeps
# below and frozen; the sweeps reproduce them exactly run to run.
STABILITY_FIXTURES = {
    ("simplicial", "P1"): 2.8700069634135135,
    ("simplicial", "Q1"): 2.1475370259179263,
    ("cubic", "Q1"): 1.4051947899053674,
}
LOCALITY_FIXTURES = {
    ("simplicial", "P1"): 6.776183276081389,
    ("cubic", "Q1"): 5.194969853984732,
}


@pytest.fixture(scope="module")
def fine_source():
    return FeSpace(build_quad(16))


def random_fine(space, rng):
    coeffs = np.zeros(space.ndofs)
    coeffs[space.interior_dofs] = rng.standard_normal(len(space.interior_dofs))
    return FeFunction(space, coeffs)


def cell_integrals(u, mesh):
    out = np.empty((mesh.num_cells, 2))
    polys = mesh.nodes[mesh.cells]
    for c in range(mesh.num_cells):
        for i in (0, 1):
            out[c, i] = abs_partial_integral(u, polys[c], i)
    return out


class TestBoxAverage:
    def test_constant(self):
        interp = AveragedInterpolant(FeSpace(build_quad(4)))
        assert interp.box_average(lambda x: np.full(len(x), 3.25), (2, 2)) \
            == pytest.approx(3.25, rel=1e-14)

    def test_coordinate_average(self):
        interp = AveragedInterpolant(FeSpace(build_quad(4)))
        assert interp.box_average(lambda x: x[:, 0], (2, 2)) \
            == pytest.approx(0.5, abs=1e-15)

    def test_fine_fe_matches_quadrature_oracle(self, fine_source):
        # oracle: map a degree-3 tensor rule over every fine cell in the box
        rng = np.random.default_rng(0)
        w = random_fine(fine_source, rng)
        target = FeSpace(build_quad(8))
        interp = AveragedInterpolant(target)
        k = (3, 5)
        value = interp.box_average(w, k)
        h = target.mesh.h
        center = np.array([k[0] * h, k[1] * h])
        total = 0.0
        centroids = fine_source.mesh.nodes[fine_source.mesh.cells].mean(axis=1)
        inside = np.flatnonzero(
            (np.abs(centroids - center) < h / 2).all(axis=1))
        for c in inside:
            total += integrate(fine_source, int(c), w.evaluate, 3)
        assert value == pytest.approx(total / h ** 2, abs=1e-13)

    def test_boundary_node_rejected(self):
        interp = AveragedInterpolant(FeSpace(build_quad(4)))
        with pytest.raises(ValueError):
            interp.box_average(lambda x: x[:, 0], (0, 2))

    def test_misaligned_fe_source_rejected(self):
        target = FeSpace(build_quad(4))
        other = FeSpace(build_quad(6))
        w = FeFunction(other, np.zeros(other.ndofs))
        with pytest.raises(ValueError):
            AveragedInterpolant(target).box_average(w, (2, 2))

    def test_non_lattice_target_rejected(self):
        with pytest.raises(ValueError):
            AveragedInterpolant(FeSpace(build_tri(4, "unionjack")))


class TestAveragedInterpolant:
    def test_zero_input(self):
        interp = AveragedInterpolant(FeSpace(build_tri(4, "boxslash")))
        out = interp.apply(lambda x: np.zeros(len(x)))
        assert np.all(out.coeffs == 0)

    def test_positivity(self, fine_source):
        rng = np.random.default_rng(1)
        w = random_fine(fine_source, rng)
        w = FeFunction(fine_source, np.abs(w.coeffs))
        for target in (FeSpace(build_quad(8)), FeSpace(build_tri(8, "boxslash"))):
            out = AveragedInterpolant(target).apply(w)
            assert np.all(out.coeffs >= 0)

    def test_vanishes_on_boundary(self, fine_source):
        rng = np.random.default_rng(2)
        w = random_fine(fine_source, rng)
        target = FeSpace(build_quad(8))
        out = AveragedInterpolant(target).apply(w)
        assert np.all(out.coeffs[target.mesh.boundary] == 0)

    @pytest.mark.parametrize("make_target", [
        lambda: FeSpace(build_quad(8)),
        lambda: FeSpace(build_tri(8, "boxslash")),
    ])
    def test_stability_constant_one(self, make_target, fine_source):
        # per cell and direction: int_T |d_i P w| <= int_{N_T} |d_i w|,
        # both sides integrated exactly (clipping + centroid rule)
        target = make_target()
        mesh = target.mesh
        interp = AveragedInterpolant(target)
        patches = [element_patch(mesh, c) for c in range(mesh.num_cells)]
        rng = np.random.default_rng(3)
        for _ in range(8):
            w = random_fine(fine_source, rng)
            pw = interp.apply(w)
            lhs = cell_integrals(pw, mesh)
            rhs = cell_integrals(w, mesh)
            for c in range(mesh.num_cells):
                for i in (0, 1):
                    assert lhs[c, i] <= rhs[patches[c], i].sum() + 1e-12

    def test_boundary_invariance_for_ramp(self):
        # p(x) = q x1 vanishes on {x1 = 0}; on boundary cells away from
        # the corners the interpolant reproduces it exactly because the
        # averaging boxes never touch the boundary
        target = FeSpace(build_quad(8))
        mesh = target.mesh
        q = 1.7
        out = AveragedInterpolant(target).apply(lambda x: q * x[:, 0])
        for l in range(1, mesh.n - 1):
            cell = l * mesh.n + 0  # cells are ordered row-major by (b, a)
            verts = mesh.nodes[mesh.cells[cell]]
            assert np.allclose(verts[:, 0].min(), 0.0)
            vals = out.coeffs[mesh.cells[cell]]
            assert np.allclose(vals, q * verts[:, 0], atol=1e-13)


class TestDualTables:
    def test_simplicial_table_matches_local_mass_solve(self):
        mesh = build_tri(4, "alternating-kuhn")
        proj = build_dual_table("simplicial", mesh)
        proj._validate_against_mass_solve()
        h = mesh.h
        # the tabulated per-triangle coefficients in units of 1/h^2
        classes = sorted(np.unique(np.round(proj.table * h ** 2, 9)))
        assert classes == [-1.5, 6.0, 36.0]

    def test_cubic_pairing_is_one_on_h_half(self):
        mesh = build_quad(2)  # h = 1/2
        proj = build_dual_table("cubic", mesh)
        space = FeSpace(mesh)
        hat = FeFunction(space, np.eye(space.ndofs)[mesh.lattice_node(1, 1)])
        assert proj.pairing(hat, (1, 1)) == pytest.approx(1.0, abs=1e-12)

    def test_kind_mesh_mismatch(self):
        with pytest.raises(ValueError):
            build_dual_table("simplicial", build_quad(4))
        with pytest.raises(ValueError):
            build_dual_table("cubic", build_tri(4, "alternating-kuhn"))
        with pytest.raises(ValueError):
            build_dual_table("simplicial", build_tri(4, "boxslash"))
        with pytest.raises(ValueError):
            build_dual_table("mystery", build_quad(4))


@pytest.fixture(scope="module")
def setup():
    mesh = build_tri(4, "alternating-kuhn")
    quad_mesh = build_quad(4)
    return (build_dual_table("simplicial", mesh), FeSpace(mesh),
            build_dual_table("cubic", quad_mesh), FeSpace(quad_mesh))


class TestDualPairing:
    def test_biorthogonality(self, setup):
        proj, space, projq, spaceq = setup
        pairs = space.mesh.interior_lattice_indices()
        for j in pairs:
            for m in pairs:
                hat = FeFunction(space, np.eye(space.ndofs)[space.mesh.lattice_node(*m)])
                hatq = FeFunction(spaceq, np.eye(spaceq.ndofs)[spaceq.mesh.lattice_node(*m)])
                expected = 1.0 if m == j else 0.0
                assert proj.pairing(hat, j) == pytest.approx(expected, abs=1e-12)
                assert proj.pairing(hatq, j) == pytest.approx(expected, abs=1e-12)
                assert projq.pairing(hatq, j) == pytest.approx(expected, abs=1e-12)

    def test_boundary_pairing_vanishes_by_odd_reflection(self, setup):
        proj, space, projq, spaceq = setup
        rng = np.random.default_rng(4)
        w = FeFunction(spaceq, rng.standard_normal(spaceq.ndofs))
        n = space.mesh.n
        boundary = [(0, 2), (n, 1), (2, 0), (3, n), (0, 0), (n, n)]
        for j in boundary:
            assert abs(proj.pairing(w, j)) < 1e-12
            assert abs(projq.pairing(w, j)) < 1e-12

    def test_out_of_lattice_node_rejected(self, setup):
        proj = setup[0]
        with pytest.raises(ValueError):
            proj.pairing(lambda x: x[:, 0], (9, 1))


class TestProjection:
    def test_idempotent_on_target(self):
        mesh = build_tri(4, "alternating-kuhn")
        proj = build_dual_table("simplicial", mesh)
        rng = np.random.default_rng(5)
        for space in (FeSpace(mesh), FeSpace(build_quad(4))):
            coeffs = np.zeros(space.ndofs)
            coeffs[space.interior_dofs] = rng.standard_normal(len(space.interior_dofs))
            v = FeFunction(space, coeffs)
            assert np.abs(proj.apply(v, space).coeffs - v.coeffs).max() < 1e-12

    def test_zero_input(self):
        mesh = build_quad(4)
        proj = build_dual_table("cubic", mesh)
        out = proj.apply(lambda x: np.zeros(len(x)), FeSpace(mesh))
        assert np.abs(out.coeffs).max() < 1e-15

    def test_linearity(self):
        mesh = build_tri(4, "alternating-kuhn")
        proj = build_dual_table("simplicial", mesh)
        space = FeSpace(mesh)
        f = lambda x: np.sin(x[:, 0] * 3)
        g = lambda x: np.cos(x[:, 1] * 2)
        both = proj.apply(lambda x: 2 * f(x) + 3 * g(x), space)
        separate = 2 * proj.apply(f, space).coeffs + 3 * proj.apply(g, space).coeffs
        assert np.allclose(both.coeffs, separate, atol=1e-13)

    def test_cubic_rejects_p1_target(self):
        proj = build_dual_table("cubic", build_quad(4))
        with pytest.raises(ValueError):
            proj.apply(lambda x: x[:, 0], FeSpace(build_tri(4, "boxslash")))

    def test_lattice_mismatch_rejected(self):
        proj = build_dual_table("simplicial", build_tri(4, "alternating-kuhn"))
        with pytest.raises(ValueError):
            proj.apply(lambda x: x[:, 0], FeSpace(build_quad(8)))

    @pytest.mark.parametrize("kind,target_kind,seed", [
        ("simplicial", "P1", 101),
        ("simplicial", "Q1", 102),
        ("cubic", "Q1", 103),
    ])
    def test_stability_fixture(self, kind, target_kind, seed, fine_source):
        # dashint_T |d_i P w| <= C dashint_{N_T} |d_i w|; C frozen by this
        # very sweep (seeded), asserted stable across runs
        if target_kind == "P1":
            target = FeSpace(build_tri(8, "alternating-kuhn"))
        else:
            target = FeSpace(build_quad(8))
        base = target.mesh if kind == "cubic" else build_tri(8, "alternating-kuhn")
        proj = build_dual_table(kind, base)
        mesh = target.mesh
        areas = np.abs(mesh.cell_areas())
        patches = [element_patch(mesh, c) for c in range(mesh.num_cells)]
        patch_areas = np.array([areas[p].sum() for p in patches])
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(50):
            w = random_fine(fine_source, rng)
            pw = proj.apply(w, target)
            lhs = cell_integrals(pw, mesh)
            rhs_cells = cell_integrals(w, mesh)
            for c in range(mesh.num_cells):
                for i in (0, 1):
                    rhs = rhs_cells[patches[c], i].sum()
                    if rhs > 1e-13:
                        worst = max(worst,
                                    (lhs[c, i] / areas[c]) / (rhs / patch_areas[c]))
        frozen = STABILITY_FIXTURES[(kind, target_kind)]
        assert worst == pytest.approx(frozen, rel=1e-6)

    @pytest.mark.parametrize("kind,target_kind,seed", [
        ("simplicial", "P1", 104),
        ("cubic", "Q1", 105),
    ])
    def test_sup_locality_fixture(self, kind, target_kind, seed, fine_source):
        # sup_S |P w| <= C dashint_{N_S} |w|
        if target_kind == "P1":
            target = FeSpace(build_tri(8, "alternating-kuhn"))
        else:
            target = FeSpace(build_quad(8))
        proj = build_dual_table(kind, target.mesh if kind == "cubic"
                                else build_tri(8, "alternating-kuhn"))
        mesh = target.mesh
        areas = np.abs(mesh.cell_areas())
        patches = [element_patch(mesh, c) for c in range(mesh.num_cells)]
        owner = locate(mesh, fine_source.mesh.nodes[fine_source.mesh.cells].mean(axis=1))
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(10):
            w = random_fine(fine_source, rng)
            pw = proj.apply(w, target)
            absint = np.zeros(mesh.num_cells)
            for k in range(fine_source.mesh.num_cells):
                absint[owner[k]] += integrate(fine_source, k,
                                              lambda pts: np.abs(w.evaluate(pts)), 3)
            for c in range(mesh.num_cells):
                sup = np.abs(pw.coeffs[mesh.cells[c]]).max()
                denom = absint[patches[c]].sum() / areas[patches[c]].sum()
                if denom > 1e-13:
                    worst = max(worst, sup / denom)
        assert worst == pytest.approx(LOCALITY_FIXTURES[(kind, target_kind)], rel=1e-6)


class TestTransfer:
    def test_nodal_copy(self):
        src = FeSpace(build_quad(4))
        dst = FeSpace(build_tri(4, "boxslash"))
        v = interpolate_nodal(src, lambda x: x[:, 0] * x[:, 1])
        out = transfer(v, dst)
        for k1 in range(5):
            for k2 in range(5):
                assert out.coeffs[dst.mesh.lattice_node(k1, k2)] \
                    == v.coeffs[src.mesh.lattice_node(k1, k2)]

    def test_round_trip_identity(self):
        src = FeSpace(build_quad(4))
        dst = FeSpace(build_tri(4, "alternating-kuhn"))
        rng = np.random.default_rng(6)
        v = FeFunction(src, rng.standard_normal(src.ndofs))
        back = transfer(transfer(v, dst), src)
        assert np.array_equal(back.coeffs, v.coeffs)

    def test_commutation_with_projection(self):
        # P-projection equals transfer of the Q-projection
        mesh = build_tri(4, "alternating-kuhn")
        proj = build_dual_table("simplicial", mesh)
        space_p = FeSpace(mesh)
        space_q = FeSpace(build_quad(4))
        rng = np.random.default_rng(7)
        for _ in range(20):
            a, b, c, d = rng.standard_normal(4)
            w = lambda x: np.sin(a + 2 * b * x[:, 0]) * np.cos(c + 2 * d * x[:, 1])
            lhs = proj.apply(w, space_p).coeffs
            rhs = transfer(proj.apply(w, space_q), space_p).coeffs
            assert np.abs(lhs - rhs).max() < 1e-11

    def test_mismatched_lattice_rejected(self):
        v = FeFunction(FeSpace(build_quad(4)), np.zeros(25))
        with pytest.raises(ValueError):
            transfer(v, FeSpace(build_tri(8, "boxslash")))


class TestDegenerateKernelEquivalence:
    def test_zero_and_nonzero_cases(self):
        # d_k of the Q projection vanishes on a cell exactly when d_k of
        # the P projection vanishes on both triangles of that cell
        mesh = build_tri(6, "alternating-kuhn")
        proj = build_dual_table("simplicial", mesh)
        space_p = FeSpace(mesh)
        space_q = FeSpace(build_quad(6))
        inputs = [
            lambda x: np.sin(3 * x[:, 1]) + 0 * x[:, 0],          # d1-degenerate
            lambda x: np.cos(2.2 * x[:, 0]) + 0 * x[:, 1],        # d2-degenerate
            lambda x: np.sin(2 * x[:, 0] + 1) * np.cos(3 * x[:, 1]),
        ]
        saw_zero = saw_nonzero = False
        for w in inputs:
            pq = proj.apply(w, space_q)
            pp = proj.apply(w, space_p)
            mesh_q = space_q.mesh
            tri_cells = mesh.cells
            for c in range(mesh_q.num_cells):
                quad_nodes = mesh_q.cells[c]
                tris = locate(mesh, mesh_q.nodes[quad_nodes].mean(axis=0)[None, :])
                pair = (2 * c, 2 * c + 1)
                for k in (0, 1):
                    gq = pq.gradients_on_rule(2)[c, :, k]
                    q_zero = np.abs(gq).max() < 1e-10
                    p_zero = all(
                        abs(float(np.einsum("a,a->", pp.coeffs[tri_cells[t]],
                                            space_p.cell_basis_grads[t, :, k]))) < 1e-10
                        for t in pair)
                    assert q_zero == p_zero
                    saw_zero |= q_zero
                    saw_nonzero |= not q_zero
        assert saw_zero and saw_nonzero
