"""Cell geometry: closed forms vs the ray-tracing oracle."""

import math

import numpy as np
import pytest

from billiardflow import geometry as geo
from billiardflow.geometry import (
    CellFamily,
    CellGeometry,
    EntryState,
    GeometryError,
    OnDiscontinuityError,
    cell_symmetry_conjugate,
    middle_wall_exit,
    semicircle_discontinuities,
    semicircle_exit_closed_form,
    semicircle_map,
    shallow_kernel_density,
    trace_batch,
    trace_cell,
)
from billiardflow.rng import stream

SEMI = CellGeometry(CellFamily.SEMICIRCLE)


def sample_entries(n, rng, phi_lo=1e-3, phi_hi=math.pi - 1e-3, min_disc_dist=1e-6):
    """Random entries at least min_disc_dist from the discontinuity set."""
    out = []
    while len(out) < n:
        phi = rng.uniform(phi_lo, phi_hi)
        r = rng.random()
        th, rr = (math.pi - phi, 1.0 - r) if phi > math.pi / 2 else (phi, r)
        nb = geo.semicircle_bounce_count(th, rr)
        if geo._disc_distance(th, rr, nb) > min_disc_dist:
            out.append((phi, r))
    return out


class TestClosedForm:
    def test_normal_incidence_center(self):
        rec = semicircle_exit_closed_form(math.pi / 2, 0.5)
        assert rec.bounces == 1
        assert rec.psi == pytest.approx(math.pi / 2, abs=1e-14)

    def test_center_entry_pi_third(self):
        rec = semicircle_exit_closed_form(math.pi / 3, 0.5)
        assert rec.bounces == 1
        assert rec.psi == pytest.approx(2 * math.pi / 3, abs=1e-14)

    def test_against_tracer_single(self):
        rec = semicircle_exit_closed_form(math.pi / 6, 0.3)
        trc = trace_cell(SEMI, EntryState(r=0.3, phi=math.pi / 6))
        assert rec.psi == pytest.approx(trc.psi, abs=1e-9)
        assert rec.bounces == trc.bounces

    def test_domain_errors(self):
        with pytest.raises(GeometryError):
            semicircle_exit_closed_form(2.0, 0.5)  # phi > pi/2
        with pytest.raises(GeometryError):
            semicircle_exit_closed_form(1.0, 1.5)

    def test_discontinuity_rejected(self):
        phi = math.pi / 6
        (rp,) = semicircle_discontinuities(phi)
        with pytest.raises(OnDiscontinuityError):
            semicircle_exit_closed_form(phi, rp)

    def test_n_hint_mismatch(self):
        with pytest.raises(GeometryError):
            semicircle_exit_closed_form(math.pi / 3, 0.5, n_hint=2)


class TestDiscontinuities:
    def test_shallow_single_point(self):
        phi = math.pi / 6
        pts = semicircle_discontinuities(phi)
        expect = 0.5 + math.sin(phi / 3) / (2 * math.sin(phi))
        assert pts == [pytest.approx(expect)]
        assert expect == pytest.approx(0.67365, abs=5e-6)

    def test_small_angle_limit(self):
        # r' -> 1/2 + (1/3)/2 = 2/3 as phi -> 0
        pts = semicircle_discontinuities(1e-6)
        assert pts[0] == pytest.approx(2.0 / 3.0, abs=1e-9)

    def test_steep_first_point(self):
        phi = math.pi / 3
        pts = semicircle_discontinuities(phi)
        r0_1 = 0.5 - math.sin((math.pi - phi) / 3) / (2 * math.sin(phi))
        assert r0_1 == pytest.approx(0.1288, abs=1e-4)
        assert min(pts) == pytest.approx(r0_1)

    def test_domain(self):
        with pytest.raises(GeometryError):
            semicircle_discontinuities(2.0)

    def test_bounce_partition_shallow(self):
        # phi < pi/4: bounces in {1,2}, split at r'
        rng = stream(3, purpose="partition")
        for _ in range(200):
            phi = rng.uniform(1e-3, math.pi / 4 - 1e-3)
            (rp,) = semicircle_discontinuities(phi)
            r = rng.random()
            if abs(r - rp) < 1e-9:
                continue
            rec = semicircle_exit_closed_form(phi, r)
            assert rec.bounces == (1 if r < rp else 2)


class TestSymmetry:
    def test_conjugate_formula(self):
        assert cell_symmetry_conjugate(math.pi / 3, 0.2) == pytest.approx(
            (2 * math.pi / 3, 0.8))

    def test_involution(self):
        phi, r = cell_symmetry_conjugate(*cell_symmetry_conjugate(1.0, 0.3))
        assert (phi, r) == pytest.approx((1.0, 0.3))

    def test_exit_symmetry_closed_form(self):
        # Psi_phi(r) + Psi_{pi-phi}(1-r) = pi exactly
        rng = stream(4, purpose="symmetry")
        entries = sample_entries(500, rng)
        phi = np.array([p for p, _ in entries])
        r = np.array([x for _, x in entries])
        a, _ = semicircle_map(phi, r)
        b, _ = semicircle_map(math.pi - phi, 1.0 - r)
        np.testing.assert_allclose(a + b, math.pi, atol=1e-9)

    def test_exit_symmetry_tracer_families(self):
        rng = stream(5, purpose="symmetry-tracer")
        for cell in (SEMI, CellGeometry(CellFamily.FLAT_BOTTOM, 0.4),
                     CellGeometry(CellFamily.FLAT_TOP, 0.3)):
            phi = rng.uniform(0.05, math.pi - 0.05, size=200)
            r = rng.random(200)
            a, _ = trace_batch(cell, phi, r)
            b, _ = trace_batch(cell, math.pi - phi, 1.0 - r)
            ok = np.isfinite(a) & np.isfinite(b)
            assert ok.mean() > 0.99
            np.testing.assert_allclose(a[ok] + b[ok], math.pi, atol=1e-9)


class TestOracleEquivalence:
    def test_closed_form_vs_tracer_sweep(self):
        # the headline geometry invariant: 1e-9 agreement off the discontinuity set
        rng = stream(6, purpose="oracle")
        entries = sample_entries(2000, rng)
        for phi, r in entries:
            psi, nb = semicircle_map(phi, r)
            rec = trace_cell(SEMI, EntryState(r=r, phi=phi))
            assert abs(float(psi) - rec.psi) < 1e-9, (phi, r)
            assert int(nb) == rec.bounces, (phi, r)

    def test_batch_tracer_matches_scalar(self):
        rng = stream(7, purpose="batch")
        for cell in (SEMI,
                     CellGeometry(CellFamily.FLAT_BOTTOM, 0.5),
                     CellGeometry(CellFamily.MIDDLE_WALL, 0.5),
                     CellGeometry(CellFamily.FLAT_TOP, 0.25)):
            phi = rng.uniform(0.05, math.pi - 0.05, size=300)
            r = rng.random(300)
            psi_b, nb_b = trace_batch(cell, phi, r)
            for i in range(300):
                if not np.isfinite(psi_b[i]):
                    continue
                rec = trace_cell(cell, EntryState(r=float(r[i]), phi=float(phi[i])))
                assert abs(psi_b[i] - rec.psi) < 1e-10
                assert nb_b[i] == rec.bounces

    def test_flat_bottom_h0_equals_semicircle(self):
        rng = stream(8, purpose="fb0")
        cell = CellGeometry(CellFamily.FLAT_BOTTOM, 0.0)
        entries = sample_entries(300, rng)
        phi = np.array([p for p, _ in entries])
        r = np.array([x for _, x in entries])
        psi_fb, _ = trace_batch(cell, phi, r)
        psi_sc, _ = semicircle_map(phi, r)
        np.testing.assert_allclose(psi_fb, psi_sc, atol=1e-9)


class TestMiddleWall:
    def test_h0_equals_semicircle(self):
        rng = stream(9, purpose="mw0")
        cell = CellGeometry(CellFamily.MIDDLE_WALL, 0.0)
        for phi, r in sample_entries(200, rng):
            rec = middle_wall_exit(cell, EntryState(r=r, phi=phi))
            psi, _ = semicircle_map(phi, r)
            assert rec.psi == pytest.approx(float(psi), abs=1e-12)

    @pytest.mark.parametrize("h", [0.2, 0.5])
    def test_parity_dispatch_vs_tracer(self, h):
        rng = stream(10, purpose=f"mw{h}")
        cell = CellGeometry(CellFamily.MIDDLE_WALL, h)
        checked = 0
        for phi, r in sample_entries(600, rng):
            try:
                rec = middle_wall_exit(cell, EntryState(r=r, phi=phi))
            except OnDiscontinuityError:
                continue
            trc = trace_cell(cell, EntryState(r=r, phi=phi))
            assert abs(rec.psi - trc.psi) < 1e-9, (phi, r)
            assert rec.bounces == trc.bounces, (phi, r)
            checked += 1
        assert checked > 550

    def test_shallow_never_sees_wall(self):
        # below the wall top the shallow chords pass above it
        cell = CellGeometry(CellFamily.MIDDLE_WALL, 0.4)
        rng = stream(11, purpose="mw-shallow")
        for _ in range(100):
            phi = rng.uniform(1e-3, 0.05)
            r = rng.random()
            rec = middle_wall_exit(cell, EntryState(r=r, phi=phi))
            psi, _ = semicircle_map(phi, r)
            assert rec.psi == pytest.approx(float(psi), abs=1e-12)

    def test_requires_middle_wall_cell(self):
        with pytest.raises(GeometryError):
            middle_wall_exit(SEMI, EntryState(r=0.3, phi=1.0))


class TestFlatBottomEndpoint:
    def test_endpoint_slope_richardson(self):
        # Psi^h_phi(0) = pi - (3+h)/(1-h) phi + O(phi^3)
        h = 0.4
        cell = CellGeometry(CellFamily.FLAT_BOTTOM, h)
        slopes = []
        for phi in (2e-3, 1e-3):
            rec = trace_cell(cell, EntryState(r=0.0, phi=phi))
            slopes.append((math.pi - rec.psi) / phi)
        # Richardson in phi^2: s(phi) = s0 + c phi^2
        s0 = (4 * slopes[1] - slopes[0]) / 3
        assert s0 == pytest.approx((3 + h) / (1 - h), rel=1e-6)


class TestShallowDensity:
    def test_normalization_exact_semicircle(self):
        phi = 0.01
        psi = np.linspace(1e-9, math.pi - 1e-9, 2_000_001)
        dens = shallow_kernel_density(SEMI, phi, psi)
        total = np.trapezoid(dens, psi)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_arc_masses_two_thirds_one_third(self):
        phi = 1e-4
        st = math.sin(phi)
        # closed-form piece masses
        m1 = (math.sin(phi / 3) + math.sin(phi)) / (2 * st)
        m2 = (math.sin(phi) - math.sin(phi / 3)) / (2 * st)
        assert m1 == pytest.approx(2.0 / 3.0, abs=1e-8)
        assert m2 == pytest.approx(1.0 / 3.0, abs=1e-8)

    def test_histogram_matches_density(self):
        from scipy import stats
        phi = 0.01
        rng = stream(12, purpose="shallow-hist")
        psi, _ = semicircle_map(np.full(1_000_000, phi), rng.random(1_000_000))
        # KS against the closed-form CDF via numerical integration
        grid = np.linspace(0, math.pi, 200_001)
        pdf = shallow_kernel_density(SEMI, phi, grid)
        cdf = np.cumsum(pdf) * (grid[1] - grid[0])
        cdf /= cdf[-1]
        res = stats.ks_1samp(psi, lambda x: np.interp(x, grid, cdf))
        assert res.pvalue > 0.01

    def test_threshold_enforced(self):
        with pytest.raises(GeometryError):
            shallow_kernel_density(SEMI, 0.5, np.array([1.0]))

    def test_flat_bottom_normalization(self):
        cell = CellGeometry(CellFamily.FLAT_BOTTOM, 0.5)
        phi = 0.005
        psi = np.linspace(1e-9, math.pi - 1e-9, 2_000_001)
        total = np.trapezoid(shallow_kernel_density(cell, phi, psi), psi)
        assert total == pytest.approx(1.0, abs=1e-3)


class TestSpeedAndValidation:
    def test_cell_validation(self):
        with pytest.raises(GeometryError):
            CellGeometry(CellFamily.MIDDLE_WALL, 0.7)
        with pytest.raises(GeometryError):
            CellGeometry(CellFamily.FLAT_TOP, 1.0)
        with pytest.raises(GeometryError):
            CellGeometry(CellFamily.SEMICIRCLE, 0.2)

    def test_entry_validation(self):
        with pytest.raises(GeometryError):
            EntryState(r=1.2, phi=1.0)
        with pytest.raises(GeometryError):
            EntryState(r=0.5, phi=0.0)

    def test_trace_exit_angle_in_range(self):
        rng = stream(13, purpose="range")
        for cell in (SEMI, CellGeometry(CellFamily.FLAT_BOTTOM, 0.3),
                     CellGeometry(CellFamily.MIDDLE_WALL, 0.3)):
            phi = rng.uniform(0.01, math.pi - 0.01, size=500)
            r = rng.random(500)
            psi, nb = trace_batch(cell, phi, r)
            ok = np.isfinite(psi)
            assert ok.mean() > 0.99
            assert np.all(psi[ok] > 0) and np.all(psi[ok] < math.pi)
            assert np.all(nb[ok & (np.arange(500) >= 0)] >= 0)

    def test_trace_dump_json_roundtrip(self):
        import json
        rec = trace_cell(SEMI, EntryState(r=0.3, phi=1.0), record_trace=True)
        blob = json.dumps(rec.trace)
        pts = json.loads(blob)
        assert len(pts) == rec.bounces + 2  # entry + bounces + exit
