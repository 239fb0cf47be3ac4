"""Command line entry points: verify-tensors, simulate, diagnose, print-defaults.

Exit codes are a stable contract:

* 0 -- success
* 1 -- usage or configuration error
* 2 -- a symbolic identity check failed
* 3 -- simulation tripped the blow-up monitor (the expected outcome for the
  shock presets; distinguishable success, not an error)
* 4 -- numerical abort (non-finite values)
* 5 -- diagnose found a mismatch between logs and recomputation
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import tomli

from . import __version__, diagnostics
from .cyltensor import verify_all
from .grid import (AnnulusGrid, State, load_field_cylf, load_field_csv,
                   save_field_csv, save_field_cylf)
from .solver import Solver, SolverConfig, SolverError, initial_state

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IDENTITY = 2
EXIT_BLOWUP = 3
EXIT_NUMERICAL = 4
EXIT_MISMATCH = 5

DOMAIN_NOTE = ("solver domain is an annulus r in [r0, r1] with z-periodicity "
               "and slip walls; the axis and the unbounded setting are "
               "deliberately excluded")

SCHEME_NOTE = ("shock capturing past the gradient crossing time relies on the "
               "entropy-consistent local Lax-Friedrichs flux; the post-shock "
               "weak-solution selection is a solver choice")

DEFAULT_CONFIG = """\
# hallmhd run configuration (TOML)

[grid]
r0 = 0.5
r1 = 1.5
Lz = 6.283185307179586
Nr = 128
Nz = 256

[solver]
mode = "transport"          # burgers | transport | coupled
cfl = 0.4
t_end = 1.0
integrator = "ssprk3"       # ssprk2 | ssprk3
hall_on = false
flux = "muscl"              # rusanov (monotone) | muscl (second order)
advection = "fv"            # fv | spectral_z (axial streams only)
stream_function = "cellular"  # none | uniform_z | cellular
stream_amplitude = 1.0
snapshot_every = 100
sample_every = 1
blowup_gradient_factor = 0.2

[initial]
preset = "cos_z"            # zero | sine_z | cos_z | gauss_r | vortex | random_smooth
amplitude = 0.4
offset = 1.0
wavenumber = 1
phase = 1.0
seed = 0
vtheta_amplitude = 0.0
stream = "none"             # stamp an initial velocity from a stream preset
stream_amplitude = 0.0

[output]
directory = "runs/out"
snapshot_format = "cylf"    # cylf | csv
"""


class ConfigError(Exception):
    pass


def _load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}")


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return sec


def _build_grid(cfg: dict) -> AnnulusGrid:
    sec = _section(cfg, "grid")
    try:
        return AnnulusGrid(
            r0=float(sec.get("r0", 0.5)), r1=float(sec.get("r1", 1.5)),
            Lz=float(sec.get("Lz", 2 * math.pi)),
            Nr=int(sec.get("Nr", 128)), Nz=int(sec.get("Nz", 256)))
    except ValueError as exc:
        raise ConfigError(f"bad [grid]: {exc}")


def _build_solver_config(cfg: dict) -> SolverConfig:
    sec = _section(cfg, "solver")
    known = {f.name for f in SolverConfig.__dataclass_fields__.values()}
    unknown = set(sec) - known
    if unknown:
        raise ConfigError(f"unknown [solver] keys: {sorted(unknown)}")
    try:
        return SolverConfig(**sec).validate()
    except (TypeError, SolverError) as exc:
        raise ConfigError(f"bad [solver]: {exc}")


def _build_initial(cfg: dict, grid: AnnulusGrid) -> State:
    sec = dict(_section(cfg, "initial"))
    preset = sec.pop("preset", "zero")
    try:
        return initial_state(grid, preset, **sec)
    except (TypeError, SolverError) as exc:
        raise ConfigError(f"bad [initial]: {exc}")


# -- verify-tensors ------------------------------------------------------------------


def cmd_verify_tensors(args) -> int:
    if args.max_order < 1 or args.max_commutator < 1:
        print("error: --max-order and --max-commutator must be >= 1",
              file=sys.stderr)
        return EXIT_USAGE
    if args.max_order < 2:
        print("error: --max-order must be >= 2 for the closed-form check",
              file=sys.stderr)
        return EXIT_USAGE
    t0 = time.time()
    result = verify_all(max_order=args.max_order,
                        max_commutator=args.max_commutator)
    result["elapsed_s"] = time.time() - t0
    result["tool_version"] = __version__
    result["domain_note"] = DOMAIN_NOTE
    result["coefficient_tables_note"] = (
        "tables are derived data: the theory asserts existence and "
        "integrality of the coefficients, not their values")
    for check in result["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        extra = f" ({check['checked']} components)" if "checked" in check else ""
        print(f"[{status}] {check['name']}{extra}")
        if not check["passed"]:
            for failure in check.get("failures", [])[:3]:
                print(f"    counterexample: {failure}")
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        with open(args.report, "w") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
        print(f"report written to {args.report}")
    return EXIT_OK if result["passed"] else EXIT_IDENTITY


# -- simulate --------------------------------------------------------------------------


FIELD_NAMES = ("v_r", "v_theta", "v_z", "H")


def _write_snapshot(outdir: Path, fmt: str, step: int, state: State) -> dict:
    entry = {"step": step, "time": repr(float(state.time)), "fields": {}}
    for name in FIELD_NAMES:
        fname = f"step_{step:06d}_{name}.{fmt}"
        path = outdir / fname
        if fmt == "cylf":
            save_field_cylf(path, state.grid, getattr(state, name))
        else:
            save_field_csv(path, state.grid, getattr(state, name))
        entry["fields"][name] = fname
    return entry


def cmd_simulate(args) -> int:
    t_start = time.time()
    manifest = {"tool_version": __version__, "domain_note": DOMAIN_NOTE,
                "scheme_note": SCHEME_NOTE, "started_unix": t_start}
    outdir = None
    try:
        cfg = _load_config(args.config)
        manifest["config"] = cfg
        out_sec = _section(cfg, "output")
        outdir = Path(out_sec.get("directory", "runs/out"))
        fmt = out_sec.get("snapshot_format", "cylf")
        if fmt not in ("cylf", "csv"):
            raise ConfigError(f"unknown snapshot_format {fmt!r}")
        grid = _build_grid(cfg)
        solver_cfg = _build_solver_config(cfg)
        state = _build_initial(cfg, grid)
        manifest["grid"] = grid.describe()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if outdir is not None:
            _finish_manifest(outdir, manifest, status="config-error",
                             error=str(exc), t_start=t_start)
        return EXIT_USAGE

    outdir.mkdir(parents=True, exist_ok=True)
    snapdir = outdir / "snapshots"
    snapdir.mkdir(exist_ok=True)
    solver = Solver(grid, solver_cfg)

    records = []
    steps_of_records = []
    snap_index = []

    def on_sample(step, st):
        records.append(diagnostics.sample(st))
        steps_of_records.append(step)

    def on_snapshot(step, st):
        entry = _write_snapshot(snapdir, fmt, step, st)
        entry["record_index"] = len(records) - 1
        snap_index.append(entry)

    try:
        result = solver.run(state, on_sample=on_sample, on_snapshot=on_snapshot)
    except SolverError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        _write_records(outdir, records)
        _finish_manifest(outdir, manifest, status="numerical-abort",
                         error=str(exc), t_start=t_start)
        return EXIT_NUMERICAL

    # align snapshot entries with the record written at the same step
    for entry in snap_index:
        entry["record_index"] = steps_of_records.index(entry["step"]) \
            if entry["step"] in steps_of_records else -1
    _write_records(outdir, records)
    with open(snapdir / "index.json", "w") as fh:
        json.dump({"format": fmt, "snapshots": snap_index}, fh,
                  indent=2, sort_keys=True)

    estimate = None
    if result.status == "blowup" and len(records) >= 8:
        estimate = diagnostics.blowup_monitor(records).as_dict()
    _finish_manifest(
        outdir, manifest, status=result.status, t_start=t_start,
        steps=result.steps, final_time=result.state.time,
        tripped_time=result.tripped_time, blowup_estimate=estimate,
        verdicts={"records": len(records), "snapshots": len(snap_index)})
    print(f"{result.status}: {result.steps} steps to t = {result.state.time:g}"
          + (f", estimated blow-up T = {estimate['t_blowup']:.6g}" if estimate else ""))
    return EXIT_BLOWUP if result.status == "blowup" else EXIT_OK


def _write_records(outdir: Path, records) -> None:
    with open(outdir / "diagnostics.csv", "w") as fh:
        fh.write(diagnostics.format_csv(records))


def _finish_manifest(outdir: Path, manifest: dict, status: str, t_start: float,
                     error: str | None = None, **extra) -> None:
    manifest["status"] = status
    manifest["wall_time_s"] = time.time() - t_start
    if error is not None:
        manifest["error"] = error
    manifest.update({k: v for k, v in extra.items() if v is not None})
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)


# -- diagnose --------------------------------------------------------------------------


def cmd_diagnose(args) -> int:
    rundir = Path(args.run_dir)
    try:
        with open(rundir / "manifest.json") as fh:
            manifest = json.load(fh)
        with open(rundir / "diagnostics.csv") as fh:
            csv_lines = fh.read().splitlines()
        with open(rundir / "snapshots" / "index.json") as fh:
            index = json.load(fh)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    header = ",".join(diagnostics.CSV_COLUMNS)
    if not csv_lines or csv_lines[0] != header:
        print("mismatch: diagnostics.csv header differs", file=sys.stderr)
        return EXIT_MISMATCH

    gsec = manifest.get("grid", {})
    try:
        grid = AnnulusGrid(gsec["r0"], gsec["r1"], gsec["Lz"],
                           gsec["Nr"], gsec["Nz"])
    except (KeyError, ValueError) as exc:
        print(f"error: manifest grid unusable: {exc}", file=sys.stderr)
        return EXIT_USAGE

    fmt = index.get("format", "cylf")
    mismatches = 0
    checked = 0
    for entry in index.get("snapshots", []):
        row_idx = entry.get("record_index", -1)
        if row_idx < 0:
            continue
        line_no = 1 + row_idx
        if line_no >= len(csv_lines):
            print(f"mismatch: missing CSV row {row_idx}", file=sys.stderr)
            mismatches += 1
            continue
        fields = {}
        try:
            for name, fname in entry["fields"].items():
                path = rundir / "snapshots" / fname
                if fmt == "cylf":
                    _, fields[name] = load_field_cylf(path, grid)
                else:
                    fields[name] = load_field_csv(path, grid)
        except Exception as exc:
            print(f"mismatch: unreadable snapshot at step {entry['step']}: {exc}",
                  file=sys.stderr)
            mismatches += 1
            continue
        st = State(grid, fields["v_r"], fields["v_theta"], fields["v_z"],
                   fields["H"], time=float(entry["time"]))
        rec = diagnostics.sample(st)
        expected = ",".join(rec.row())
        got = csv_lines[line_no]
        checked += 1
        if expected != got:
            mismatches += 1
            print(f"mismatch at step {entry['step']}:\n  logged:     {got}"
                  f"\n  recomputed: {expected}", file=sys.stderr)

    plotdir = rundir / "plots"
    plotdir.mkdir(exist_ok=True)
    if len(csv_lines) > 1:
        rows = [line.split(",") for line in csv_lines[1:]]
        times = [float(r[0]) for r in rows]
        for ci, col in enumerate(diagnostics.CSV_COLUMNS[1:], start=1):
            vals = [float(r[ci]) for r in rows]
            diagnostics.write_svg_lineplot(
                plotdir / f"{col}.svg", times, {col: vals},
                title=f"{col} vs time")

    print(f"diagnose: {checked} snapshot rows checked, {mismatches} mismatches; "
          f"plots in {plotdir}")
    return EXIT_OK if mismatches == 0 else EXIT_MISMATCH


# -- entry point -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hallmhd",
        description="Cylindrical tensor verification and azimuthal Hall-MHD runs")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify-tensors",
                       help="run the exhaustive symbolic identity checks")
    v.add_argument("--max-order", type=int, default=6,
                   help="tensor order bound for the exhaustive checks")
    v.add_argument("--max-commutator", type=int, default=4,
                   help="weight bound for the commutator expansions")
    v.add_argument("--report", type=str, default=None,
                   help="write a machine-readable JSON report here")
    v.set_defaults(fn=cmd_verify_tensors)

    s = sub.add_parser("simulate", help="run a configured simulation")
    s.add_argument("--config", type=str, required=True,
                   help="TOML run configuration")
    s.set_defaults(fn=cmd_simulate)

    d = sub.add_parser("diagnose",
                       help="replay a run directory and verify the logs")
    d.add_argument("--run-dir", type=str, required=True)
    d.set_defaults(fn=cmd_diagnose)

    pd = sub.add_parser("print-defaults", help="print the default configuration")
    pd.set_defaults(fn=lambda args: (print(DEFAULT_CONFIG, end=""), EXIT_OK)[1])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
