"""Acceptance gate: every headline claim at its pinned tolerance.

Each test prints one PASS/FAIL line (run with ``pytest -v -s`` to see them
inline).  Tolerances are fixed here, not calibrated elsewhere.
"""

import hashlib
import math
import subprocess
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from hallmhd.cyltensor import (
    MultiIndexM, check_closed_form, check_commutators, check_odd_vanish,
    check_remark_m1, commutator_transport, multi_indices_m,
)
from hallmhd.diagnostics import (
    COROLLARY_PRESETS, THETA_TEST_FAMILIES, blowup_monitor,
    corollary_theta_average_check, sample, theta_cancellation_check,
)
from hallmhd.grid import AnnulusGrid, State
from hallmhd.solver import Solver, SolverConfig, initial_state, predict_blowup
from hallmhd.symexpr import (
    R, THETA, Z, divergence_free, field, rpow, sym,
)

PKG_ROOT = Path(__file__).resolve().parents[1]


def report(criterion: int, passed: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion:2d} {'PASS' if passed else 'FAIL'}  {detail}")


def energy_of(g, s):
    return (g.lp_norm(s.v_r, 2) ** 2 + g.lp_norm(s.v_theta, 2) ** 2
            + g.lp_norm(s.v_z, 2) ** 2 + g.lp_norm(s.h_theta, 2) ** 2)


def test_criterion_1_tensor_parity():
    """All 1092 components through order 6 vanish exactly iff chi_theta is odd."""
    t0 = time.time()
    rep = check_odd_vanish(6)
    elapsed = time.time() - t0
    ok = rep.passed and rep.checked == 1092 and elapsed <= 120
    report(1, ok, f"{rep.checked} components, {len(rep.failures)} "
                  f"counterexamples, {elapsed:.1f}s")
    assert rep.checked == sum(3 ** n for n in range(1, 7))
    assert rep.passed, rep.failures[:3]
    assert elapsed <= 120


def test_criterion_2_closed_form():
    """Recursion equals the double-factorial closed form, |M| <= 6, exact."""
    rep = check_closed_form(6)
    report(2, rep.passed, f"{rep.checked} ordered components, exact rational")
    assert rep.passed, rep.failures[:3]


def test_criterion_3_commutators():
    """Both commutator expansions close with integer coefficients, |M| <= 4."""
    rep, tables = check_commutators(4)
    n_m = len(multi_indices_m(4))
    base_ok = rep.passed and len(tables["dz"]) == n_m \
        and len(tables["transport"]) == n_m

    # the base compound index must reproduce the divergence-substituted
    # expansion term for term
    u = divergence_free(field("u_r", True), field("u_theta", True),
                        field("u_z", True))
    f = field("f")
    res = commutator_transport(MultiIndexM(1, 0, 0), u, f)
    expected = rpow(-1) * sym(u.u_z).diff(R) * sym(f).diff(Z) \
        - (rpow(-1) * sym(u.u_theta).diff(THETA) + sym(u.u_z).diff(Z)) \
        * (rpow(-1) * sym(f).diff(R))
    term_ok = res.expression == expected \
        and res.coefficients == {"uz N=(1,0,0)": 1, "div N=(0,0,0)": -1}

    integer_ok = all(Fraction(v).denominator == 1
                     for kind in tables.values()
                     for tbl in kind.values()
                     for v in tbl.values())
    ok = base_ok and term_ok and integer_ok
    report(3, ok, f"{rep.checked} expansions, residuals zero, "
                  f"coefficients integral, base case matches term-for-term")
    assert base_ok, rep.failures[:3]
    assert term_ok
    assert integer_ok


def test_criterion_4_remark_cancellation():
    """The i-summed planar integrand cancels; each single-i term does not."""
    rep = check_remark_m1(field("v_theta", True), field("H"))
    ok = (rep.passed and rep.sum_average_zero
          and rep.single_i_nonzero == (True, True))
    report(4, ok, "sum reduces to an exact theta divergence; "
                  "single-i obstructions nonzero")
    assert rep.sum_matches_reduced_form
    assert rep.sum_average_zero
    assert rep.single_i_nonzero == (True, True)
    assert rep.radial_parts_identity
    assert rep.named_check_zero


def test_criterion_5_theta_cancellation_quadrature():
    """|integral of dt(f) g| <= 1e-10 relative for every trig-poly preset."""
    worst = 0.0
    for fam in THETA_TEST_FAMILIES:
        probe = theta_cancellation_check(fam)
        worst = max(worst, abs(probe.integral) / probe.scale)
        assert probe.passed, fam.name
    report(5, True, f"{len(THETA_TEST_FAMILIES)} presets, worst relative "
                    f"integral {worst:.2e} <= 1e-10")


def test_criterion_6_lp_conservation():
    """Transport preset, t_end = 1: L^p drift bounds and refinement."""
    drifts = {}
    elapsed = {}
    for Nr, Nz in ((128, 256), (256, 512)):
        g = AnnulusGrid(0.5, 1.5, 2 * math.pi, Nr, Nz)
        st0 = initial_state(g, "cos_z", amplitude=0.4, offset=1.0, phase=1.0)
        cfg = SolverConfig(mode="transport", t_end=1.0, hall_on=False,
                           flux="muscl", stream_function="cellular",
                           stream_amplitude=1.0)
        solver = Solver(g, cfg)
        t0 = time.time()
        res = solver.run(st0)
        elapsed[(Nr, Nz)] = time.time() - t0
        assert res.status == "completed"
        d = {}
        for p in (1, 2, math.inf):
            n0, n1 = g.lp_norm(st0.H, p), g.lp_norm(res.state.H, p)
            d[p] = abs(n1 - n0) / n0
        drifts[(Nr, Nz)] = d

    base = drifts[(128, 256)]
    fine = drifts[(256, 512)]
    ok = (all(base[p] <= 1e-3 for p in (1, 2, math.inf))
          and base[1] <= 1e-12
          and fine[2] < base[2] and fine[math.inf] < base[math.inf]
          and fine[1] <= 1e-12
          and elapsed[(128, 256)] <= 60)
    report(6, ok,
           f"drift@128x256 l1={base[1]:.2e} l2={base[2]:.2e} "
           f"linf={base[math.inf]:.2e} ({elapsed[(128, 256)]:.0f}s); "
           f"drift@256x512 l2={fine[2]:.2e} linf={fine[math.inf]:.2e}")
    assert base[1] <= 1e-12, "exact telescoping"
    assert base[2] <= 1e-3 and base[math.inf] <= 1e-3
    assert fine[2] < base[2] and fine[math.inf] < base[math.inf]
    assert fine[1] <= 1e-12
    assert elapsed[(128, 256)] <= 60


def test_criterion_7_energy():
    """Coupled preset, t_end = 1: energy non-increasing, defect <= 1%."""
    defects = {}
    increases = {}
    for Nr, Nz in ((128, 256), (256, 512)):
        g = AnnulusGrid(0.5, 1.5, 2 * math.pi, Nr, Nz)
        st0 = initial_state(g, "random_smooth", amplitude=0.1,
                            vtheta_amplitude=0.1, seed=11,
                            stream="cellular", stream_amplitude=0.05)
        cfg = SolverConfig(mode="coupled", t_end=1.0, hall_on=True,
                           flux="rusanov")
        solver = Solver(g, cfg)
        energies = [energy_of(g, st0)]
        solver.run(st0, on_sample=lambda step, s: energies.append(
            energy_of(g, s)))
        increases[(Nr, Nz)] = sum(
            1 for a, b in zip(energies, energies[1:]) if b > a * (1 + 1e-12))
        defects[(Nr, Nz)] = abs(energies[-1] - energies[0]) / energies[0]

    base, fine = defects[(128, 256)], defects[(256, 512)]
    ok = (increases[(128, 256)] == 0 and increases[(256, 512)] == 0
          and base <= 0.01 and fine < base)
    report(7, ok, f"defect@128x256 {base:.2%}, @256x512 {fine:.2%}, "
                  f"0 increasing steps")
    assert increases[(128, 256)] == 0
    assert increases[(256, 512)] == 0
    assert base <= 0.01
    assert fine < base


def test_criterion_8_kmc_blowup():
    """Sine preset: T* = 1, monitor within 5% at Nz = 1024, order >= 1.9."""
    A, Lz = 0.5, 2 * math.pi
    t_star = Lz / (4 * math.pi * A)
    assert t_star == 1.0

    # prediction from the initial profile
    g1024 = AnnulusGrid(0.5, 1.5, Lz, 4, 1024)
    zz = g1024.z[None, :] * np.ones(g1024.shape)
    H0 = A * np.sin(2 * math.pi * zz / Lz)
    predicted = predict_blowup(g1024, H0).crossing_time
    pred_ok = abs(predicted - t_star) <= 1e-3

    # monitor estimate from a run past the crossing time
    cfg = SolverConfig(mode="burgers", t_end=1.5, flux="muscl", sample_every=2)
    solver = Solver(g1024, cfg)
    records = []
    res = solver.run(State(g1024, g1024.zeros(), g1024.zeros(), g1024.zeros(),
                           H0), on_sample=lambda step, s: records.append(
                               sample(s)))
    est = blowup_monitor(records)
    mon_ok = res.status == "blowup" and abs(est.t_blowup - t_star) <= 0.05

    # pre-shock convergence against the characteristics oracle (L1)
    from conftest import characteristics_solution
    errs = []
    for Nz in (512, 1024):
        g = AnnulusGrid(0.5, 1.5, Lz, 4, Nz)
        zzg = g.z[None, :] * np.ones(g.shape)
        run_cfg = SolverConfig(mode="burgers", t_end=0.5, flux="muscl")
        out = Solver(g, run_cfg).run(
            State(g, g.zeros(), g.zeros(), g.zeros(),
                  A * np.sin(2 * math.pi * zzg / Lz)))
        exact = characteristics_solution(
            lambda z: A * math.sin(2 * math.pi * z / Lz), g.z, 0.5)
        errs.append(float(np.sum(np.abs(out.state.H[0] - exact)) * g.dz))
    order = math.log2(errs[0] / errs[1])
    order_ok = order >= 1.9

    ok = pred_ok and mon_ok and order_ok
    report(8, ok, f"T* predicted {predicted:.4f}, monitor {est.t_blowup:.4f} "
                  f"(|err| {abs(est.t_blowup - t_star):.3f} <= 0.05), "
                  f"pre-shock L1 order {order:.2f}")
    assert pred_ok
    assert mon_ok, (res.status, est.as_dict())
    assert order_ok, errs


def test_criterion_9_corollary_remainder():
    """Theta-averaged remainder <= 1e-6 for all presets, |M| <= 3."""
    worst = 0.0
    count = 0
    for preset in COROLLARY_PRESETS:
        for m in multi_indices_m(3):
            verdict = corollary_theta_average_check(preset, m, samples=2)
            worst = max(worst, verdict.max_abs_average)
            count += 1
            assert verdict.passed, verdict.as_dict()
    report(9, True, f"{count} preset/index pairs, worst averaged remainder "
                    f"{worst:.2e} <= 1e-6")


CONFIG_TEMPLATES = {
    "burgers_sine": """\
[grid]
r0 = 0.5
r1 = 1.5
Lz = 6.283185307179586
Nr = 4
Nz = 128
[solver]
mode = "burgers"
t_end = 0.4
flux = "muscl"
snapshot_every = 25
sample_every = 5
[initial]
preset = "sine_z"
amplitude = 0.5
[output]
directory = "{out}"
""",
    "transport_cellular": """\
[grid]
r0 = 0.5
r1 = 1.5
Lz = 6.283185307179586
Nr = 24
Nz = 48
[solver]
mode = "transport"
t_end = 0.2
hall_on = false
flux = "muscl"
stream_function = "cellular"
stream_amplitude = 1.0
snapshot_every = 20
sample_every = 5
[initial]
preset = "cos_z"
amplitude = 0.4
offset = 1.0
phase = 1.0
[output]
directory = "{out}"
""",
    "coupled_random": """\
[grid]
r0 = 0.5
r1 = 1.5
Lz = 6.283185307179586
Nr = 24
Nz = 48
[solver]
mode = "coupled"
t_end = 0.2
hall_on = true
flux = "rusanov"
snapshot_every = 10
sample_every = 5
[initial]
preset = "random_smooth"
amplitude = 0.1
vtheta_amplitude = 0.1
seed = 11
stream = "cellular"
stream_amplitude = 0.05
[output]
directory = "{out}"
""",
}


def _run_cli(*args):
    return subprocess.run([sys.executable, "-m", "hallmhd.cli", *args],
                          capture_output=True, text=True, cwd=PKG_ROOT)


def _digest(rundir: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(rundir.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            h.update(path.relative_to(rundir).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()


def test_criterion_10_determinism(tmp_path):
    """diagnose replays every preset cleanly; reruns are byte-identical."""
    for name, template in CONFIG_TEMPLATES.items():
        out = tmp_path / name
        cfg = tmp_path / f"{name}.toml"
        cfg.write_text(template.format(out=out))
        res = _run_cli("simulate", "--config", str(cfg))
        assert res.returncode in (0, 3), (name, res.stderr)
        diag = _run_cli("diagnose", "--run-dir", str(out))
        assert diag.returncode == 0, (name, diag.stderr)

    digests = []
    for tag in ("first", "second"):
        out = tmp_path / f"repeat_{tag}"
        cfg = tmp_path / f"repeat_{tag}.toml"
        cfg.write_text(CONFIG_TEMPLATES["transport_cellular"].format(out=out))
        res = _run_cli("simulate", "--config", str(cfg))
        assert res.returncode == 0
        digests.append(_digest(out))
    ok = digests[0] == digests[1]
    report(10, ok, f"{len(CONFIG_TEMPLATES)} preset replays clean; "
                   f"identical config -> identical output bytes")
    assert ok
