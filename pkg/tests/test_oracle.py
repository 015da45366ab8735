import numpy as np
import pytest

from hypolap import sphere
from hypolap.bundle import BundleSampleSet, KernelConfig
from hypolap.oracle import (
    LIOUVILLE_VOLUME,
    UtmGrid,
    empirical_operator_apply,
    liouville_volume,
    loglog_slope,
    quadrature_node_density,
    quadrature_operator_apply,
    reference_multiplicities,
    sphere_spectrum,
    transport_taylor_residual,
)


def proportional_fit(y, x):
    """R^2 and slope of the least-squares fit y = m*x through the origin."""
    m = float(x @ y) / float(x @ x)
    ssr = float(np.sum((y - m * x) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - ssr / sst, m


def eval_angles(n, seed=0, theta_margin=0.35):
    rng = np.random.default_rng(seed)
    theta = np.arccos(rng.uniform(-np.cos(theta_margin), np.cos(theta_margin), n))
    phi = rng.uniform(0, 2 * np.pi, n)
    psi = rng.uniform(0, 2 * np.pi, n)
    return np.stack([theta, phi, psi], axis=1)


class TestReferenceData:
    def test_multiplicities(self):
        assert reference_multiplicities("horizontal") == [1, 6, 13]
        assert reference_multiplicities("total") == [1, 9, 25]
        assert reference_multiplicities("base") == [1, 3, 5]

    def test_unknown_regime(self):
        with pytest.raises(ValueError):
            reference_multiplicities("sideways")

    def test_sphere_spectrum_values(self):
        spec = sphere_spectrum(2)
        assert spec.entries == [(0.0, 1), (2.0, 3), (6.0, 5)]

    def test_sphere_spectrum_matches_base_multiplicities(self):
        assert sphere_spectrum(2).multiplicities.tolist() == reference_multiplicities("base")

    def test_sphere_spectrum_ratios(self):
        vals = sphere_spectrum(2).eigenvalues
        nz = vals[vals > 0]
        assert np.allclose(nz / nz[0], [1, 3])

    def test_sphere_spectrum_symbolic(self):
        # independently verify l(l+1) by symbolic Laplace-Beltrami on
        # representative harmonics of degrees 0..2
        import sympy as sp

        th, ph = sp.symbols("theta phi", positive=True)
        harmonics = {
            0: sp.Integer(1),
            1: sp.cos(th),
            2: 3 * sp.cos(th) ** 2 - 1,
        }
        harmonics_phi = {1: sp.sin(th) * sp.cos(ph), 2: sp.sin(th) * sp.cos(th) * sp.sin(ph)}

        def lap(f):
            out = sp.diff(sp.sin(th) * sp.diff(f, th), th) / sp.sin(th)
            out += sp.diff(f, ph, 2) / sp.sin(th) ** 2
            return sp.simplify(out)

        for l, f in harmonics.items():
            assert sp.simplify(lap(f) + l * (l + 1) * f) == 0
        for l, f in harmonics_phi.items():
            assert sp.simplify(lap(f) + l * (l + 1) * f) == 0

    def test_negative_l_max(self):
        with pytest.raises(ValueError):
            sphere_spectrum(-1)


class TestGrid:
    def test_volume_exact_with_cell_rule(self):
        grid = UtmGrid.build((64, 128, 64))
        assert abs(liouville_volume(grid) - LIOUVILLE_VOLUME) <= 1e-6

    def test_weights_positive(self):
        grid = UtmGrid.build((16, 32, 16))
        assert np.all(grid.theta_weights > 0)

    def test_midpoint_rule_second_order(self):
        errs = []
        for nt in (8, 16, 32):
            grid = UtmGrid.build((nt, 2 * nt, nt), theta_rule="midpoint")
            errs.append(abs(liouville_volume(grid) - LIOUVILLE_VOLUME))
        rate1 = np.log2(errs[0] / errs[1])
        rate2 = np.log2(errs[1] / errs[2])
        assert 1.7 <= rate1 <= 2.3
        assert 1.7 <= rate2 <= 2.3


BASE_CFG = KernelConfig(
    eps=0.2, delta=20.0, k_base=1, k_fibre=1, alpha=0.0,
    base_metric="geodesic", fibre_metric="geodesic",
)
VERT_CFG = KernelConfig(
    eps=0.16, delta=16.0, k_base=1, k_fibre=1, alpha=0.0,
    base_metric="geodesic", fibre_metric="geodesic",
)


class TestQuadratureOperator:
    def test_constant_function_fixed(self):
        grid = UtmGrid.build((24, 48, 24))
        cfg = KernelConfig(eps=1.2, delta=12.0, k_base=1, k_fibre=1, alpha=0.0)
        out = quadrature_operator_apply(
            lambda th, ph, ps: np.ones(np.broadcast_shapes(th.shape, ps.shape)),
            cfg,
            grid,
            eval_angles(10, seed=1),
        )
        assert np.max(np.abs(out - 1.0)) <= 1e-13

    def test_base_function_eigen_response(self):
        # base-only f: fibre factor integrates out, response is the sphere
        # Laplacian acting on cos(theta) = -2 cos(theta)
        grid = UtmGrid.build((64, 128, 64))
        ev = eval_angles(50, seed=2)
        out = quadrature_operator_apply(lambda th, ph, ps: np.cos(th) * np.ones_like(ps), BASE_CFG, grid, ev)
        y = (out - np.cos(ev[:, 0])) / BASE_CFG.eps
        r2, m = proportional_fit(y, -2.0 * np.cos(ev[:, 0]))
        assert r2 > 0.98
        assert m > 0

    def test_fibre_function_eigen_response(self):
        # fibre-only f in the vertical-dominant regime: response proportional
        # to the fibre-circle second derivative of cos(psi)
        grid = UtmGrid.build((64, 128, 64))
        ev = eval_angles(50, seed=3)
        out = quadrature_operator_apply(lambda th, ph, ps: np.cos(ps) * np.ones_like(th), VERT_CFG, grid, ev)
        y = (out - np.cos(ev[:, 2])) / VERT_CFG.delta
        r2, m = proportional_fit(y, -np.cos(ev[:, 2]))
        assert r2 > 0.98
        assert m > 0

    def test_alpha_inert_for_uniform_density(self):
        grid = UtmGrid.build((20, 40, 20))
        cfg = KernelConfig(eps=1.6, delta=12.0, k_base=1, k_fibre=1, alpha=0.0)
        ev = eval_angles(8, seed=4)
        f = lambda th, ph, ps: np.cos(th) * np.ones_like(ps)
        outs = []
        dens = quadrature_node_density(cfg, grid)
        for alpha in (0.0, 0.5, 1.0):
            outs.append(
                quadrature_operator_apply(f, cfg, grid, ev, alpha=alpha, theta_density=dens)
            )
        spread = max(np.max(np.abs(outs[0] - o)) for o in outs[1:])
        # the density is position-independent up to quadrature error, so the
        # alpha variants may differ only at that scale
        assert spread <= 5e-3

    def test_under_resolved_raises(self):
        grid = UtmGrid.build((16, 32, 16))
        cfg = KernelConfig(eps=0.01, delta=12.0, k_base=1, k_fibre=1)
        with pytest.raises(ValueError, match="under-resolved"):
            quadrature_operator_apply(
                lambda th, ph, ps: np.ones_like(th + ps), cfg, grid, eval_angles(2)
            )
        cfg = KernelConfig(eps=1.0, delta=0.01, k_base=1, k_fibre=1)
        with pytest.raises(ValueError, match="under-resolved"):
            quadrature_operator_apply(
                lambda th, ph, ps: np.ones_like(th + ps), cfg, grid, eval_angles(2)
            )


class TestEmpiricalOperator:
    def make_samples(self, nb, nf, seed):
        base = sphere.sample_sphere_uniform(nb, seed)
        rng = np.random.default_rng(seed + 1)
        fibres = [
            sphere.sample_fibre_circle(base[j], nf, seed=rng) for j in range(nb)
        ]
        return BundleSampleSet(base, fibres, kind="exact")

    def test_constant_fixed(self):
        samples = self.make_samples(30, 4, 0)
        cfg = KernelConfig(eps=0.5, delta=0.5, k_base=1, k_fibre=1, alpha=0.0)
        out = empirical_operator_apply(samples, np.ones(samples.total), cfg, [(0, 0), (3, 2)])
        assert np.allclose(out, 1.0, atol=1e-12)

    def test_tracks_quadrature_on_base_function(self):
        samples = self.make_samples(700, 28, 3)
        cfg = KernelConfig(eps=0.2, delta=20.0, k_base=1, k_fibre=1, alpha=0.0)
        theta, _ = sphere.spherical_angles(samples.base_points)
        f_values = np.concatenate(
            [np.full(samples.fibre_sizes[j], np.cos(theta[j])) for j in range(samples.n_base)]
        )
        probes = [(j, 0) for j in range(0, 700, 70)]
        out = empirical_operator_apply(samples, f_values, cfg, probes)
        grid = UtmGrid.build((64, 128, 64))
        ev = []
        for j, s in probes:
            th, ph = sphere.spherical_angles(samples.base_points[j])
            ps = sphere.tangent_angle(samples.base_points[j], samples.fibres[j][s])
            ev.append([th, ph, ps])
        qcfg = KernelConfig(
            eps=cfg.eps, delta=cfg.delta, k_base=1, k_fibre=1, alpha=0.0,
            base_metric="euclidean", fibre_metric="chordal",
        )
        ref = quadrature_operator_apply(
            lambda th, ph, ps: np.cos(th) * np.ones_like(ps), qcfg, grid, np.array(ev)
        )
        assert np.median(np.abs(out - ref)) < 0.05

    def test_alpha_weighting_keeps_constants_fixed(self):
        samples = self.make_samples(25, 4, 2)
        cfg = KernelConfig(eps=0.6, delta=0.6, k_base=1, k_fibre=1, alpha=0.0)
        out = empirical_operator_apply(
            samples, np.ones(samples.total), cfg, [(1, 1), (4, 0)], alpha=1.0
        )
        assert np.allclose(out, 1.0, atol=1e-12)

    def test_rejects_coefficient_mode(self):
        samples = BundleSampleSet(
            sphere.sample_sphere_uniform(3, 1),
            [np.array([[1.0, 0.0]])] * 3,
            kind="coeff",
        )
        cfg = KernelConfig(eps=1.0, delta=1.0, k_base=1, k_fibre=1)
        with pytest.raises(ValueError):
            empirical_operator_apply(samples, np.ones(3), cfg, [(0, 0)])


class TestTransportExpansion:
    def setup_method(self):
        rng = np.random.default_rng(17)
        self.x = sphere.sample_sphere_uniform(1, rng)[0]
        self.theta = sphere.sample_fibre_circle(self.x, 1, seed=rng)[0]
        ang = rng.uniform(0, 2 * np.pi)
        n = np.cross(self.x, self.theta)
        self.v = np.cos(ang) * self.theta + np.sin(ang) * n

    def test_residual_vanishes_at_zero(self):
        ts = np.array([0.2, 0.1, 0.05, 0.025, 0.0125])
        res = transport_taylor_residual(self.x, self.theta, self.v, ts)
        assert np.all(np.diff(res) < 0)  # decreasing with decreasing t
        assert res[-1] < 1e-8

    def test_fourth_order_on_the_sphere(self):
        # the sphere is a symmetric space: the cubic term of the expansion
        # vanishes identically and the residual decays at fourth order,
        # (7/360) t^4 |v_perp| to leading order
        ts = np.array([0.04, 0.08, 0.16, 0.32])
        res = transport_taylor_residual(self.x, self.theta, self.v, ts)
        slope = loglog_slope(ts, res)
        assert 3.7 <= slope <= 4.3
        b = np.linalg.norm(self.v - (self.v @ self.theta) * self.theta)
        assert np.allclose(res, (7.0 / 360.0) * ts**4 * b, rtol=0.05)

    def test_third_order_bound_holds(self):
        # the advertised O(t^3) remainder bound is satisfied (with room)
        ts = np.array([0.04, 0.08, 0.16, 0.32])
        res = transport_taylor_residual(self.x, self.theta, self.v, ts)
        assert np.all(res <= ts**3)

    def test_normal_vector_case(self):
        # v orthogonal to the geodesic plane: ambient transport is the
        # identity, yet the coordinate expansion error behaves the same way
        n = np.cross(self.x, self.theta)
        ts = np.array([0.04, 0.08, 0.16, 0.32])
        res = transport_taylor_residual(self.x, self.theta, n, ts)
        assert np.all(res <= ts**3)
        assert 3.7 <= loglog_slope(ts, res) <= 4.3

    def test_rejects_bad_t(self):
        with pytest.raises(ValueError):
            transport_taylor_residual(self.x, self.theta, self.v, [0.0, 0.1])
        with pytest.raises(ValueError):
            transport_taylor_residual(self.x, self.theta, self.v, [0.7])


class TestReportFile:
    def test_write_report(self, tmp_path):
        import json

        from hypolap.oracle import write_report

        grid = UtmGrid.build((8, 16, 8))
        path = tmp_path / "oracle.json"
        out = write_report(
            path, "base", grid, slopes={"transport": 4.0}, r_squared={"cos_theta": 0.999}
        )
        back = json.loads(path.read_text())
        assert back == out
        assert back["grid_resolution"] == [8, 16, 8]
        assert back["regime"] == "base"
