"""Records, quadrature probes, and the blow-up monitor."""

import math

import numpy as np
import pytest

from hallmhd.cyltensor import MultiIndexM
from hallmhd.diagnostics import (
    COROLLARY_PRESETS, CSV_COLUMNS, THETA_TEST_FAMILIES, DiagnosticsRecord,
    LaurentPoly, ManufacturedField3D, SeparablePreset, blowup_monitor,
    corollary_theta_average_check, format_csv, sample,
    theta_cancellation_check, write_svg_lineplot,
)
from hallmhd.grid import AnnulusGrid, State
from hallmhd.solver import Solver, SolverConfig, initial_state


def make_state(seed=0, scale=0.1):
    g = AnnulusGrid(0.5, 1.5, 2 * np.pi, 16, 16)
    rng = np.random.default_rng(seed)
    return State(g, scale * rng.standard_normal(g.shape),
                 scale * rng.standard_normal(g.shape),
                 scale * rng.standard_normal(g.shape),
                 scale * rng.standard_normal(g.shape), time=0.25)


class TestSample:
    def test_zero_state(self):
        g = AnnulusGrid(0.5, 1.5, 2 * np.pi, 16, 16)
        rec = sample(State(g, g.zeros(), g.zeros(), g.zeros(), g.zeros()))
        for col in CSV_COLUMNS[1:]:
            assert getattr(rec, col) == 0.0

    def test_unit_H_l2_matches_quadrature(self):
        g = AnnulusGrid(0.5, 1.5, 1.0, 32, 32)
        rec = sample(State(g, g.zeros(), g.zeros(), g.zeros(),
                           np.ones(g.shape)))
        # integral of r over [1/2, 3/2] is 1, times 2 pi and Lz = 1
        assert rec.l2 == pytest.approx(math.sqrt(2 * math.pi), abs=1e-12)
        assert rec.linf == 1.0

    def test_energy_includes_all_fields(self):
        g = AnnulusGrid(0.5, 1.5, 2 * np.pi, 16, 16)
        ones = np.ones(g.shape)
        rec = sample(State(g, ones, ones, ones, g.zeros()))
        assert rec.energy == pytest.approx(3 * g.lp_norm(ones, 2) ** 2)
        rec2 = sample(State(g, g.zeros(), g.zeros(), g.zeros(), ones))
        assert rec2.energy == pytest.approx(g.lp_norm(g.rc * ones, 2) ** 2)

    def test_bit_for_bit_purity(self):
        a, b = make_state(3), make_state(3)
        assert sample(a).row() == sample(b).row()

    def test_l1_invariant_after_transport_step(self):
        g = AnnulusGrid(0.5, 1.5, 2 * np.pi, 32, 64)
        cfg = SolverConfig(mode="transport", t_end=0.1, hall_on=False,
                           stream_function="cellular", stream_amplitude=1.0)
        solver = Solver(g, cfg)
        st0 = initial_state(g, "cos_z", amplitude=0.4, offset=1.0)
        st0 = solver.transport_velocity_state(st0)
        st1 = solver.step_transport(st0, solver.allowed_dt(st0))
        r0, r1 = sample(st0), sample(st1)
        assert r1.l1 == pytest.approx(r0.l1, rel=1e-13)

    def test_csv_format(self):
        rec = sample(make_state())
        text = format_csv([rec])
        lines = text.splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 2
        assert lines[1].split(",")[0] == repr(0.25)


class TestThetaCancellation:
    @pytest.mark.parametrize("family", THETA_TEST_FAMILIES,
                             ids=lambda f: f.name)
    def test_all_families_vanish(self, family):
        probe = theta_cancellation_check(family)
        assert probe.passed
        assert abs(probe.integral) <= 1e-10 * probe.scale

    def test_axisymmetric_integrand_identically_zero(self):
        fam = next(f for f in THETA_TEST_FAMILIES if f.name == "axisymmetric")
        probe = theta_cancellation_check(fam)
        assert probe.integral == 0.0

    def test_minimum_theta_nodes(self):
        with pytest.raises(ValueError):
            theta_cancellation_check(THETA_TEST_FAMILIES[0], n_theta=8)

    def test_nonzero_integrand_detected(self):
        # sanity: a non-derivative angular factor does not cancel
        bad = ManufacturedField3D("notderiv", lambda r, z: np.ones_like(r),
                                  np.cos, lambda t: np.cos(t) ** 2)
        probe = theta_cancellation_check(bad)
        assert not probe.passed


class TestLaurentPoly:
    def test_eval_and_derivative(self):
        p = LaurentPoly({2: 1.0, -1: 3.0})
        assert p(2.0) == pytest.approx(4.0 + 1.5)
        dp = p.ddr()
        assert dp(2.0) == pytest.approx(2 * 2.0 - 3.0 / 4.0)

    def test_times_rpow(self):
        p = LaurentPoly({1: 2.0}).times_rpow(-2)
        assert p(2.0) == pytest.approx(1.0)

    def test_compound_derivative_matches_finite_difference(self):
        preset = SeparablePreset("t", LaurentPoly({3: 1.0}), k_z=2.0, k_t=1.0)
        m = MultiIndexM(1, 0, 0)
        der = preset.apply_D(m)
        r, z, th = 1.1, 0.7, 0.3
        h = 1e-5
        fd = (preset.value(r + h, z, th) - preset.value(r - h, z, th)) / (2 * h) / r
        assert der.value(r, z, th) == pytest.approx(fd, rel=1e-8)


class TestCorollaryCheck:
    @pytest.mark.parametrize("preset", COROLLARY_PRESETS,
                             ids=lambda p: p.name)
    @pytest.mark.parametrize("m", [MultiIndexM(0, 1, 0), MultiIndexM(1, 0, 0),
                                   MultiIndexM(0, 1, 1), MultiIndexM(1, 1, 0),
                                   MultiIndexM(1, 0, 1), MultiIndexM(0, 3, 0)],
                             ids=lambda m: m.label())
    def test_theta_average_below_tolerance(self, preset, m):
        verdict = corollary_theta_average_check(preset, m, samples=2)
        assert verdict.passed, verdict.as_dict()

    def test_axisymmetric_remainder_pointwise_zero(self):
        preset = COROLLARY_PRESETS[0]  # no theta dependence
        m = MultiIndexM(1, 0, 0)
        from hallmhd.diagnostics import _fd_component
        main = preset.apply_D(m)
        r, z = 1.0, 0.5
        for th in (0.0, 1.0, 2.5):
            comp = _fd_component(preset, r, z, th, m, 1e-3)
            assert comp == pytest.approx(float(main.value(r, z, th)), abs=1e-7)

    def test_weight_cap(self):
        with pytest.raises(ValueError):
            corollary_theta_average_check(COROLLARY_PRESETS[0],
                                          MultiIndexM(2, 0, 0))


class TestBlowupMonitor:
    def _series(self, fn, times):
        out = []
        for t in times:
            rec = DiagnosticsRecord(time=t, l1=0, l2=0, l4=0, linf=0, energy=0,
                                    max_dzH=fn(t), h1=0, h2=0, h3=0,
                                    div_residual=0)
            out.append(rec)
        return out

    def test_synthetic_hyperbola(self):
        hist = self._series(lambda t: 1.0 / (1.0 - t), np.linspace(0, 0.9, 12))
        est = blowup_monitor(hist)
        assert est.reliable
        assert est.t_blowup == pytest.approx(1.0, abs=0.01)

    def test_constant_series_flags_no_blowup(self):
        hist = self._series(lambda t: 2.0, np.linspace(0, 1, 10))
        est = blowup_monitor(hist)
        assert est.t_blowup == math.inf
        assert not est.reliable

    def test_needs_eight_samples(self):
        hist = self._series(lambda t: 1.0 / (1.0 - t), np.linspace(0, 0.5, 5))
        with pytest.raises(ValueError):
            blowup_monitor(hist)

    def test_burgers_run_estimate_matches_prediction(self):
        from hallmhd.solver import predict_blowup
        g = AnnulusGrid(0.5, 1.5, 2 * np.pi, 4, 512)
        zz = g.z[None, :] * np.ones(g.shape)
        H0 = 0.5 * np.sin(zz)
        predicted = predict_blowup(g, H0).crossing_time
        solver = Solver(g, SolverConfig(mode="burgers", t_end=2.0,
                                        flux="muscl", sample_every=2))
        records = []
        res = solver.run(State(g, g.zeros(), g.zeros(), g.zeros(), H0),
                         on_sample=lambda step, s: records.append(sample(s)))
        assert res.status == "blowup"
        est = blowup_monitor(records)
        assert est.t_blowup == pytest.approx(predicted, rel=0.05)


class TestSvg:
    def test_writes_polylines(self, tmp_path):
        path = tmp_path / "plot.svg"
        write_svg_lineplot(path, [0.0, 0.5, 1.0],
                           {"l2": [1.0, 0.9, 0.8], "l1": [2.0, 2.0, 2.0]},
                           title="norms")
        text = path.read_text()
        assert text.startswith("<svg")
        assert text.count("<polyline") == 2
        assert "norms" in text

    def test_deterministic_bytes(self, tmp_path):
        p1, p2 = tmp_path / "a.svg", tmp_path / "b.svg"
        for p in (p1, p2):
            write_svg_lineplot(p, [0, 1], {"x": [3.0, 4.0]})
        assert p1.read_bytes() == p2.read_bytes()
