import math

import numpy as np
import pytest

from oracles import hyperboloid_point

from lorentz_embed.metric import make_hyperbolic
from lorentz_embed.grid import PolarGrid
from lorentz_embed.solver import DirichletProblem, solve_dirichlet
from lorentz_embed.embed import (
    build_embedding,
    conformal_metric,
    develop,
    export_graph,
    minkowski_inner,
    write_obj,
    _extrapolate_to_segment,
)


class TestConformalMetric:
    def test_model_recovers_chart_metric(self, model_solve_128):
        gbar = conformal_metric(model_solve_128)
        g = model_solve_128.u.grid
        R = g.mesh()[0][: gbar.rows]
        assert np.max(np.abs(gbar.gb11 - 1.0)) <= 1e-12
        assert np.max(np.abs(gbar.gb12)) <= 1e-12
        assert np.max(np.abs(gbar.gb22 - np.sinh(R) ** 2)) <= 1e-9
        assert gbar.max_defect <= 1e-6

    def test_constant_scaling_law(self):
        # u = 1/(2C), K = -C: rescaled metric is C g, so curvature is -1
        sol = solve_dirichlet(DirichletProblem(make_hyperbolic(4.0), PolarGrid(128, 64, 1.5)))
        gbar = conformal_metric(sol)
        assert gbar.max_defect <= 1e-6

    def test_positive_definite(self, pinched_embedding_64):
        gbar = pinched_embedding_64[0]
        det = gbar.gb11 * gbar.gb22 - gbar.gb12**2
        assert np.all(gbar.gb11 > 0) and np.all(det > 0)

    def test_rejects_nonsolution(self, pinched_metric):
        # the constant start is admissible but not a solution: its rescaled
        # metric is not hyperbolic and the certificate must catch that
        from lorentz_embed.grid import ScalarField, covariant_hessian
        from lorentz_embed.solver import AdmissibleField

        g = PolarGrid(48, 48, 3.0)
        b = 1.0 / (2.0 * pinched_metric.bounds.c2_of_radius(3.0))
        u = ScalarField(g, np.full(g.shape, b))
        hess = covariant_hessian(u, pinched_metric)
        fake = AdmissibleField(
            u=u, hessian=hess, min_eigenvalue=1.0, rhs_min=2 * b,
            metric=pinched_metric, boundary_value=b, ball_radius=3.0,
            iterations=0,
        )
        with pytest.raises(ValueError, match="not hyperbolic"):
            conformal_metric(fake, check_tol=1e-2)

    def test_rejects_nonpositive_u(self, model_solve_128):
        from lorentz_embed.grid import ScalarField, covariant_hessian
        from lorentz_embed.solver import AdmissibleField

        g = model_solve_128.u.grid
        bad = model_solve_128.u.values.copy()
        bad[2, 2] = -0.1
        fake = AdmissibleField(
            u=ScalarField(g, bad), hessian=model_solve_128.hessian,
            min_eigenvalue=1.0, rhs_min=1.0, metric=model_solve_128.metric,
            boundary_value=0.5, ball_radius=2.0, iterations=0,
        )
        with pytest.raises(ValueError, match="positive"):
            conformal_metric(fake)


class TestDevelopingMap:
    def test_model_matches_hyperboloid_chart(self, model_embedding, model_solve_128):
        _, dev, _, _ = model_embedding
        g = model_solve_128.u.grid
        R, T = g.mesh()
        expect = hyperboloid_point(R[: dev.rows], T[: dev.rows])
        assert np.max(np.abs(dev.points - expect)) <= 1e-6

    def test_pole_maps_to_apex(self, model_embedding, model_solve_128):
        _, dev, _, _ = model_embedding
        g = model_solve_128.u.grid
        apex = _extrapolate_to_segment(dev.points[:, 0, :], g.q1, [0.0])[0]
        assert np.allclose(apex, [0.0, 0.0, 1.0], atol=1e-9)

    def test_image_on_unit_hyperboloid(self, model_embedding):
        _, dev, _, _ = model_embedding
        norms = minkowski_inner(dev.points, dev.points)
        assert np.max(np.abs(norms + 1.0)) <= 1e-10

    def test_frames_in_isometry_group(self, model_embedding):
        _, dev, _, _ = model_embedding
        assert dev.eta_drift <= 1e-10

    def test_path_independence(self, model_embedding):
        _, dev, _, _ = model_embedding
        assert dev.path_defect <= 1e-5
        assert dev.holonomy_ok

    def test_cell_holonomy_cubic_envelope(self):
        # per-cell transport defect stays under C h^3 across resolutions
        for n in (48, 96):
            sol = solve_dirichlet(DirichletProblem(make_hyperbolic(1.0), PolarGrid(n, n, 2.0)))
            _, dev, _, _ = build_embedding(sol, l_obs=1.5)
            h = sol.u.grid.h1
            assert dev.cell_defect_max <= 1e-2 * h**3
        # and the summed defect stays within the holonomy budget
        assert dev.cell_defect_sum <= 1e-5

    def test_beyond_certified_rows_rejected(self, model_embedding):
        gbar = model_embedding[0]
        with pytest.raises(ValueError, match="certified"):
            develop(gbar, rows=gbar.rows + 1)


class TestAssembledEmbedding:
    def test_model_is_unit_imaginary_sphere(self, model_embedding, model_solve_128):
        _, dev, emb, _ = model_embedding
        g = model_solve_128.u.grid
        R, T = g.mesh()
        expect = hyperboloid_point(R[: emb.rows], T[: emb.rows])
        assert np.max(np.abs(emb.X - expect)) <= 1e-6

    def test_u_recovered_from_position(self, model_embedding, pinched_embedding_64):
        for bundle in (model_embedding, pinched_embedding_64):
            emb = bundle[2]
            err = np.abs(-0.5 * minkowski_inner(emb.X, emb.X) - emb.u_values)
            assert err.max() <= 1e-8

    def test_normal_identity(self, model_embedding):
        audit = model_embedding[3]
        assert audit.normal_identity_err <= 1e-6

    def test_normal_is_future_unit_timelike(self, pinched_embedding_64):
        emb = pinched_embedding_64[2]
        nn = minkowski_inner(emb.normal, emb.normal)
        assert np.max(np.abs(nn + 1.0)) <= 1e-8
        assert np.all(emb.normal[..., 2] > 0)
        assert audit_orthogonality(emb) <= 1e-8


def audit_orthogonality(emb):
    from lorentz_embed.embed import _CartesianCalc

    calc = _CartesianCalc(emb.grid, emb.rows)
    Xa = calc.dx_vec(emb.X)
    Xb = calc.dy_vec(emb.X)
    sl = slice(0, emb.rows - 4)
    return max(
        np.abs(minkowski_inner(Xa, emb.normal))[sl].max(),
        np.abs(minkowski_inner(Xb, emb.normal))[sl].max(),
    )


class TestVerification:
    def test_model_pullback_and_curvature(self, model_embedding):
        audit = model_embedding[3]
        assert audit.pullback_rel_err <= 1e-6
        assert audit.gauss_residual <= 1e-4
        assert audit.codazzi_residual <= 1e-2

    def test_model_umbilic(self, model_embedding):
        emb, audit = model_embedding[2], model_embedding[3]
        h11, h12, h22 = emb.shape
        G11, G12, G22 = emb.pullback
        sl = slice(0, audit.audit_rows)
        assert np.max(np.abs(h11 - G11)[sl]) <= 1e-5
        assert np.max(np.abs(h12 - G12)[sl]) <= 1e-5
        assert np.max(np.abs(h22 - G22)[sl]) <= 1e-5
        assert audit.a_norm_max == pytest.approx(math.sqrt(2.0), abs=1e-6)

    def test_model_pinching_saturated(self, model_embedding):
        audit = model_embedding[3]
        assert audit.pinching_saturation <= 1e-4
        assert audit.pinching_margin_cone > 0.0

    def test_pinched_margins_and_bounds(self, pinched_embedding_64):
        audit = pinched_embedding_64[3]
        assert audit.pullback_rel_err <= 1e-2
        assert audit.pinching_margin_cone >= -1e-6
        assert audit.pinching_margin_lower >= -1e-6
        assert audit.pinching_margin_upper >= -1e-6
        assert audit.gauss_residual <= 1e-2
        assert audit.codazzi_residual <= 1e-2
        assert np.isfinite(audit.a_norm_max)

    def test_shape_form_stable_under_refinement(self, pinched_embedding_64,
                                                pinched_embedding_128):
        a64 = pinched_embedding_64[3].a_norm_max
        a128 = pinched_embedding_128[3].a_norm_max
        assert abs(a64 - a128) / a128 <= 0.02


class TestPerturbedConformal:
    def test_nonradial_chart_pipeline(self):
        # exercises the genuinely angle-dependent code paths: nonzero
        # off-diagonal coframe, nonzero radial connection coefficient,
        # conformal-chart distances in the localized audits
        from lorentz_embed.metric import make_poincare_perturbed
        from lorentz_embed.grid import DiscGrid

        metric = make_poincare_perturbed(1.0, 0.9, eps=0.2)
        sol = solve_dirichlet(DirichletProblem(metric, DiscGrid(48, 48, 0.7)))
        osc = (sol.u.values.max(axis=1) - sol.u.values.min(axis=1)).max()
        assert osc > 1e-3  # genuinely non-radial
        gbar, dev, emb, audit = build_embedding(sol, l_obs=0.5)
        assert gbar.max_defect <= 1e-2
        assert audit.pullback_rel_err <= 1e-2
        assert audit.pinching_margin_cone >= -1e-6
        assert audit.pinching_margin_lower >= -1e-6
        assert audit.pinching_margin_upper >= -1e-6
        assert np.isfinite(audit.a_norm_max)


class TestEquivariance:
    def test_grid_rotation_conjugates_to_ambient_rotation(self, pinched_metric):
        n = 64
        sol0 = solve_dirichlet(DirichletProblem(pinched_metric, PolarGrid(n, n, 2.0)))
        gr = PolarGrid(n, n, 2.0, theta0=2 * math.pi / n)
        sol1 = solve_dirichlet(DirichletProblem(pinched_metric, gr))
        _, _, emb0, _ = build_embedding(sol0, l_obs=1.0)
        _, _, emb1, _ = build_embedding(sol1, l_obs=1.0)
        a = 2 * math.pi / n
        rot = np.array([
            [math.cos(a), -math.sin(a), 0.0],
            [math.sin(a), math.cos(a), 0.0],
            [0.0, 0.0, 1.0],
        ])
        expect = emb0.X @ rot.T
        assert np.max(np.abs(emb1.X - expect)) <= 1e-6


class TestExport:
    def test_model_cap_heights(self, model_embedding, model_solve_128):
        emb = model_embedding[2]
        g = model_solve_128.u.grid
        rows = int(np.searchsorted(g.q1, 1.0 + 1e-12))
        mesh = export_graph(emb, rows=rows)
        assert mesh.vertices.shape[0] == rows * g.n2 + 1
        expect = np.sqrt(1.0 + mesh.vertices[:, 0] ** 2 + mesh.vertices[:, 1] ** 2)
        assert np.max(np.abs(mesh.vertices[:, 2] - expect)) <= 1e-4

    def test_faces_consistently_oriented(self, model_embedding):
        mesh = export_graph(model_embedding[2])
        v = mesh.vertices
        for f in mesh.faces[:: max(1, len(mesh.faces) // 200)]:
            a, b, c = v[f[0]], v[f[1]], v[f[2]]
            area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            assert area2 > 0.0  # counterclockwise seen from +x3

    def test_single_ring_rejected(self, model_embedding):
        with pytest.raises(ValueError, match="too few rings"):
            export_graph(model_embedding[2], rows=1)

    def test_obj_format(self, tmp_path, model_embedding):
        mesh = export_graph(model_embedding[2], rows=3)
        path = tmp_path / "cap.obj"
        write_obj(mesh, path)
        lines = path.read_text().splitlines()
        n_v = sum(1 for ln in lines if ln.startswith("v "))
        n_f = sum(1 for ln in lines if ln.startswith("f "))
        assert n_v == mesh.vertices.shape[0]
        assert n_f == mesh.faces.shape[0]
        first_face = next(ln for ln in lines if ln.startswith("f "))
        assert min(int(t) for t in first_face.split()[1:]) >= 1
