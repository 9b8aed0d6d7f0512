"""Config-driven experiment runner.

Subcommands reproduce the scaling and extinction claims at desk scale:

    capacitance     equilibrium solve + refinement study
    oracle-compare  BEM vs the analytic sphere oracle (frequency and time)
    sweep           frequency tables per obstacle scale (CSV)
    synthesize      time series from the tables (CSV)
    theorem1        field-magnitude scaling O(eps) + Huygens tail check
    theorem2        model-error scaling O(eps^2) + tail check
    checks          dilation / projection / density / kernel-difference
    all             everything above

Exit code 0 iff every executed acceptance check passes.  Each run writes a
MANIFEST listing emitted files, stage wall-clock times, and check results.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bem, metrics
from .asymptotic import PointScattererModel, point_scatterer_time
from .config import ConfigError, ExperimentConfig, default_config, parse_config_file
from .geometry import StarShape, build_surface_grid, shell_quadrature
from .metrics import ScalingFit, fit_power_law
from .sphere_oracle import SphereScenario, sphere_scattered_frequency, sphere_scattered_time
from .synthesis import FrequencyTable, ScatteringScenario, frequency_sweep, inverse_transform

logger = logging.getLogger(__name__)

SHELL_N_R = 8
SHELL_N_ANG = 4
CAPACITANCE_STUDY = ((6, 12), (8, 16), (12, 24), (16, 32), (24, 48))
ORACLE_RESOLUTIONS = ((12, 24), (16, 32), (20, 40))
ORACLE_FREQUENCIES = (0.0, 1j, 4j)
ORACLE_RADIUS = 2.5
ORACLE_EPS = 0.1

TOL_CAPACITANCE = 1e-4
TOL_ORACLE_FREQ = 1e-4
TOL_ORACLE_TIME = 1e-2
TOL_DILATION = 1e-10
TAIL_RATIO_LIMIT = 1e-3
# (target slope, slope window, max log-residual); the residual guard keeps
# fits through curved data from passing on slope alone
SLOPE_WINDOWS = {
    "theorem1_slope": (1.0, 0.10, 0.05),
    "theorem2_slope": (2.0, 0.15, 0.05),
    "projection_mean_slope": (1.0, 0.15, 0.05),
    "projection_fluctuation_slope": (2.0, 0.20, 0.05),
    "density_expansion_slope": (1.0, 0.20, 0.05),
    "kernel_difference_slope": (2.0, 0.20, 0.05),
}


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class RunManifest:
    config_hash: str
    command: str
    files: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    def add_file(self, path: Path):
        self.files.append(str(path))

    def add_timing(self, stage: str, seconds: float):
        self.timings.append((stage, seconds))

    def add_check(self, check: CheckResult):
        self.checks.append(check)
        logger.info("check %s: %s (%s)", check.name,
                    "PASS" if check.passed else "FAIL", check.detail)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def write(self, out_dir: Path):
        path = out_dir / "MANIFEST"
        with open(path, "w") as fh:
            fh.write(f"config_hash: {self.config_hash}\n")
            fh.write(f"command: {self.command}\n")
            fh.write("files:\n")
            for f in self.files:
                fh.write(f"  - {f}\n")
            fh.write("wall_clock_seconds:\n")
            for stage, sec in self.timings:
                fh.write(f"  {stage}: {sec:.2f}\n")
            fh.write("checks:\n")
            for c in self.checks:
                fh.write(f"  {c.name}: {'PASS' if c.passed else 'FAIL'} ({c.detail})\n")
            fh.write(f"overall: {'PASS' if self.all_passed else 'FAIL'}\n")
        return path


def _write_csv(path: Path, header: str, rows, provenance: str = "") -> None:
    with open(path, "w") as fh:
        if provenance:
            fh.write(f"# config={provenance}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _fit_check(manifest: RunManifest, name: str, fit: ScalingFit) -> None:
    target, slope_tol, resid_tol = SLOPE_WINDOWS[name]
    ok = abs(fit.slope - target) <= slope_tol and fit.max_residual <= resid_tol
    manifest.add_check(CheckResult(
        name, ok,
        f"slope={fit.slope:.4f} target={target}+-{slope_tol} residual={fit.max_residual:.4f}"))


def _fits_csv_rows(named_fits) -> list:
    rows = []
    for name, fit, passed in named_fits:
        rows.append((name, fit.slope, fit.intercept, fit.max_residual,
                     "pass" if passed else "fail"))
    return rows


# ---------------------------------------------------------------------------
# capacitance
# ---------------------------------------------------------------------------
def cmd_capacitance(config: ExperimentConfig, out_dir: Path, manifest: RunManifest):
    is_sphere = config.shape.is_sphere
    reference = None
    if is_sphere:
        reference = 4.0 * math.pi * config.shape.constant
    rows = []
    results = []
    start = time.time()
    for (nt, np_) in CAPACITANCE_STUDY:
        t0 = time.time()
        cap = bem.capacitance(config.shape, nt, np_)
        dt = time.time() - t0
        results.append(cap)
        rows.append([nt, np_, cap.c1, float(np.min(cap.sigma1)), float(np.max(cap.sigma1)), dt])
        manifest.add_timing(f"capacitance_{nt}x{np_}", dt)
    if reference is None:
        reference = results[-1].c1      # self-convergence reference for bumpy shapes
    errors = [abs(r.c1 - reference) / abs(reference) for r in results]
    for row, err in zip(rows, errors):
        row.append(err)
    _write_csv(out_dir / "capacitance.csv",
               "n_theta,n_phi,c1,sigma_min,sigma_max,seconds,rel_error", rows,
               provenance=manifest.config_hash)
    manifest.add_file(out_dir / "capacitance.csv")

    final_err = errors[-1]
    runtime = rows[-1][5]
    manifest.add_check(CheckResult(
        "capacitance_value", bool(final_err <= TOL_CAPACITANCE),
        f"c1={results[-1].c1:.8f} rel_err={final_err:.3e} tol={TOL_CAPACITANCE}"))
    manifest.add_check(CheckResult(
        "capacitance_runtime", bool(runtime < 5.0), f"{runtime:.2f}s at 24x48 (< 5 s)"))
    # the singular scheme is spectrally exact for the shipped smooth shapes:
    # errors sit at a ~1e-9 roundoff floor, so decrease is only required
    # above it
    floor = 5e-9
    monotone = all(errors[i + 1] <= max(1.05 * errors[i], floor) for i in range(len(errors) - 1))
    manifest.add_check(CheckResult(
        "capacitance_refinement", bool(monotone),
        "errors " + " ".join(f"{e:.2e}" for e in errors) + f" (non-increasing above {floor:.0e} floor)"))
    logger.info("capacitance study finished in %.1fs", time.time() - start)
    return results


# ---------------------------------------------------------------------------
# oracle comparison
# ---------------------------------------------------------------------------
def cmd_oracle_compare(config: ExperimentConfig, out_dir: Path, manifest: RunManifest):
    pulse = config.pulse
    if pulse.origin_distance != 0.0:
        raise ConfigError("oracle-compare requires an origin-centered pulse")
    scn = SphereScenario(ORACLE_EPS, pulse)
    shape = StarShape.sphere()
    point = np.array([[ORACLE_RADIUS, 0.0, 0.0]])

    rows = []
    worst_final = 0.0
    for (nt, np_) in ORACLE_RESOLUTIONS:
        grid = build_surface_grid(shape, ORACLE_EPS, nt, np_)
        for s in ORACLE_FREQUENCIES:
            val = bem.scattered_frequency(shape, ORACLE_EPS, pulse, s, point, grid=grid)[0]
            ref = sphere_scattered_frequency(scn, s, ORACLE_RADIUS)
            rel = abs(val - ref) / abs(ref)
            rows.append([nt, np_, complex(s).imag, val.real, val.imag, ref.real, ref.imag, rel])
            if (nt, np_) == ORACLE_RESOLUTIONS[-1]:
                worst_final = max(worst_final, rel)
    _write_csv(out_dir / "oracle_compare_frequency.csv",
               "n_theta,n_phi,omega,bem_re,bem_im,oracle_re,oracle_im,rel_error", rows,
               provenance=manifest.config_hash)
    manifest.add_file(out_dir / "oracle_compare_frequency.csv")
    manifest.add_check(CheckResult(
        "oracle_frequency", bool(worst_final <= TOL_ORACLE_FREQ),
        f"worst rel error {worst_final:.3e} at {ORACLE_RESOLUTIONS[-1]} (tol {TOL_ORACLE_FREQ})"))

    t0 = time.time()
    scenario = ScatteringScenario(shape, ORACLE_EPS, pulse,
                                  n_theta=config.n_theta, n_phi=config.n_phi)
    table = frequency_sweep(scenario, point, config.omega_max, config.n_omega,
                            workers=config.workers)
    times = np.linspace(0.0, config.t_max, config.n_t)
    series = inverse_transform(table, times)
    exact = np.array([sphere_scattered_time(scn, t, ORACLE_RADIUS) for t in times])
    peak = float(np.max(np.abs(exact)))
    err = float(np.max(np.abs(series.values[:, 0] - exact)))
    manifest.add_timing("oracle_time_domain", time.time() - t0)
    _write_csv(out_dir / "oracle_compare_time.csv", "t,synthesized,exact",
               [[t, v, e] for t, v, e in zip(times, series.values[:, 0], exact)],
               provenance=manifest.config_hash)
    manifest.add_file(out_dir / "oracle_compare_time.csv")
    manifest.add_check(CheckResult(
        "oracle_time_domain", bool(err <= TOL_ORACLE_TIME * peak),
        f"max-in-time error {err:.3e} vs {TOL_ORACLE_TIME} x peak {peak:.3e}"))


# ---------------------------------------------------------------------------
# sweep / synthesize
# ---------------------------------------------------------------------------
def _observation_rule(config: ExperimentConfig):
    return shell_quadrature(config.shell, SHELL_N_R, SHELL_N_ANG)


def _table_path(out_dir: Path, eps: float) -> Path:
    return out_dir / f"freq_table_eps{eps:g}.csv"


def _sweep_tables(config: ExperimentConfig, out_dir: Path, manifest: RunManifest,
                  write: bool = True) -> dict:
    """One frequency table per scale; reuses an on-disk table when its
    scenario hash matches the configuration."""
    pts, _ = _observation_rule(config)
    tables = {}
    for eps in config.epsilons:
        scenario = ScatteringScenario(config.shape, eps, config.pulse,
                                      n_theta=config.n_theta, n_phi=config.n_phi)
        path = _table_path(out_dir, eps)
        if path.exists():
            try:
                cached = FrequencyTable.load_csv(path, pts)
            except ValueError as exc:
                logger.info("stale table %s (%s); recomputing", path.name, exc)
                cached = None
            if cached is not None and cached.scenario_hash == scenario.content_hash():
                logger.info("reusing table %s (scenario %s)", path.name, cached.scenario_hash)
                tables[eps] = cached
                continue
            if cached is not None:
                logger.info("stale table %s: scenario hash mismatch, recomputing", path.name)
        t0 = time.time()
        table = frequency_sweep(scenario, pts, config.omega_max, config.n_omega,
                                workers=config.workers)
        manifest.add_timing(f"sweep_eps_{eps:g}", time.time() - t0)
        if write:
            table.save_csv(path)
            manifest.add_file(path)
        tables[eps] = table
    return tables


def cmd_sweep(config: ExperimentConfig, out_dir: Path, manifest: RunManifest):
    return _sweep_tables(config, out_dir, manifest)


def cmd_synthesize(config: ExperimentConfig, out_dir: Path, manifest: RunManifest,
                   tables: dict | None = None):
    if tables is None:
        tables = _sweep_tables(config, out_dir, manifest)
    times = np.union1d(np.linspace(0.0, config.t_max, config.n_t), [config.t0])
    series = {}
    for eps, table in tables.items():
        ts = inverse_transform(table, times)
        path = out_dir / f"timeseries_eps{eps:g}.csv"
        ts.save_csv(path)
        manifest.add_file(path)
        series[eps] = ts
    return tables, series


# ---------------------------------------------------------------------------
# theorem commands
# ---------------------------------------------------------------------------
def _norm_history(series_values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return np.sqrt(np.abs(series_values) ** 2 @ weights)


def cmd_theorem1(config: ExperimentConfig, out_dir: Path, manifest: RunManifest,
                 prepared=None):
    """Field scaling ||u_sc(t0)|| ~ eps and tail extinction after t*."""
    _, weights = _observation_rule(config)
    if prepared is None:
        prepared = cmd_synthesize(config, out_dir, manifest)
    _, series = prepared
    times = next(iter(series.values())).times
    i_t0 = int(np.argmin(np.abs(times - config.t0)))
    pre = times <= config.t_star
    post = times >= config.t_star + 0.5

    rows, points, tail_ratios = [], [], []
    for eps in config.epsilons:
        norms = _norm_history(series[eps].values, weights)
        peak, tail = float(np.max(norms[pre])), float(np.max(norms[post]))
        rows.append([eps, float(norms[i_t0]), peak, tail, tail / peak])
        points.append((eps, float(norms[i_t0])))
        tail_ratios.append(tail / peak)
    fit = fit_power_law(points)
    _write_csv(out_dir / "theorem1.csv", "eps,norm_t0,pre_peak,post_tail,tail_ratio", rows,
               provenance=manifest.config_hash)
    manifest.add_file(out_dir / "theorem1.csv")
    _fit_check(manifest, "theorem1_slope", fit)
    worst = max(tail_ratios)
    manifest.add_check(CheckResult(
        "huygens_tail", bool(worst < TAIL_RATIO_LIMIT),
        f"worst post-t* tail/peak {worst:.2e} (< {TAIL_RATIO_LIMIT})"))
    return fit, rows


def cmd_theorem2(config: ExperimentConfig, out_dir: Path, manifest: RunManifest,
                 prepared=None, c1: float | None = None):
    """Model-error scaling ||u_app - u_sc||(t0) ~ eps^2 and the same tail check."""
    pts, weights = _observation_rule(config)
    if prepared is None:
        prepared = cmd_synthesize(config, out_dir, manifest)
    _, series = prepared
    if c1 is None:
        c1 = bem.capacitance(config.shape).c1
    times = next(iter(series.values())).times
    i_t0 = int(np.argmin(np.abs(times - config.t0)))
    pre = times <= config.t_star
    post = times >= config.t_star + 0.5

    rows, points, tail_ratios = [], [], []
    for eps in config.epsilons:
        model = PointScattererModel(c_eps=eps * c1, pulse=config.pulse)
        u_app = np.stack([point_scatterer_time(model, t, pts) for t in times])
        err = u_app - series[eps].values
        norms = _norm_history(err, weights)
        field_norms = _norm_history(series[eps].values, weights)
        peak, tail = float(np.max(field_norms[pre])), float(np.max(norms[post]))
        rows.append([eps, float(norms[i_t0]), peak, tail, tail / peak])
        points.append((eps, float(norms[i_t0])))
        tail_ratios.append(tail / peak)
    fit = fit_power_law(points)
    _write_csv(out_dir / "theorem2.csv", "eps,error_norm_t0,field_pre_peak,post_tail,tail_ratio", rows,
               provenance=manifest.config_hash)
    manifest.add_file(out_dir / "theorem2.csv")
    _fit_check(manifest, "theorem2_slope", fit)
    worst = max(tail_ratios)
    manifest.add_check(CheckResult(
        "theorem2_tail", bool(worst < TAIL_RATIO_LIMIT),
        f"worst post-t* error tail/field peak {worst:.2e} (< {TAIL_RATIO_LIMIT})"))
    return fit, rows


# ---------------------------------------------------------------------------
# proposition checks
# ---------------------------------------------------------------------------
def cmd_checks(config: ExperimentConfig, out_dir: Path, manifest: RunManifest):
    eps_list = list(config.epsilons)
    bumpy = StarShape.bumpy_sphere()
    offset_bumpy = StarShape.offset_bumpy_sphere()
    named_fits = []

    t0 = time.time()
    worst = 0.0
    for shape, label in ((StarShape.sphere(), "sphere"), (bumpy, "bumpy")):
        for eps in (0.1, 0.25):
            for s in (1.0, 2j):
                worst = max(worst, metrics.check_dilation_identity(shape, eps, s))
    manifest.add_timing("check_dilation", time.time() - t0)
    manifest.add_check(CheckResult(
        "dilation_identity", bool(worst < TOL_DILATION),
        f"max relative mismatch {worst:.2e} (< {TOL_DILATION})"))

    t0 = time.time()
    mean_fit, fluct_fit = metrics.check_projection_scaling(
        bumpy, config.pulse, 1j, eps_list, config.n_theta, config.n_phi)
    manifest.add_timing("check_projection", time.time() - t0)
    _fit_check(manifest, "projection_mean_slope", mean_fit)
    _fit_check(manifest, "projection_fluctuation_slope", fluct_fit)
    named_fits += [("projection_mean", mean_fit, manifest.checks[-2].passed),
                   ("projection_fluctuation", fluct_fit, manifest.checks[-1].passed)]

    t0 = time.time()
    dens_fit = metrics.check_density_expansion(
        bumpy, config.pulse, 1j, eps_list, config.n_theta, config.n_phi)
    manifest.add_timing("check_density", time.time() - t0)
    _fit_check(manifest, "density_expansion_slope", dens_fit)
    named_fits.append(("density_expansion", dens_fit, manifest.checks[-1].passed))

    t0 = time.time()
    kern_fit = metrics.check_kernel_difference(
        offset_bumpy, eps_list, 1j, config.shell, config.n_theta, config.n_phi)
    manifest.add_timing("check_kernel", time.time() - t0)
    _fit_check(manifest, "kernel_difference_slope", kern_fit)
    named_fits.append(("kernel_difference", kern_fit, manifest.checks[-1].passed))

    _write_csv(out_dir / "checks.csv", "check_name,slope,intercept,max_residual,pass",
               _fits_csv_rows(named_fits), provenance=manifest.config_hash)
    manifest.add_file(out_dir / "checks.csv")


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------
_PLOT_STUB = """\
# Plot stub for smallscat outputs: loads the CSVs next to this script.
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).parent
for name in ("theorem1", "theorem2"):
    path = here / f"{name}.csv"
    if not path.exists():
        continue
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    eps = [float(r["eps"]) for r in rows]
    key = "norm_t0" if name == "theorem1" else "error_norm_t0"
    plt.loglog(eps, [float(r[key]) for r in rows], "o-", label=name)
plt.xlabel("eps"); plt.ylabel("shell L2 norm at t0"); plt.legend(); plt.grid(True)
plt.savefig(here / "scalings.png", dpi=150)
"""


def cmd_all(config: ExperimentConfig, out_dir: Path, manifest: RunManifest):
    caps = cmd_capacitance(config, out_dir, manifest)
    cmd_oracle_compare(config, out_dir, manifest)
    cmd_checks(config, out_dir, manifest)
    prepared = cmd_synthesize(config, out_dir, manifest)
    c1 = caps[-1].c1 if config.shape.is_sphere else bem.capacitance(config.shape).c1
    cmd_theorem1(config, out_dir, manifest, prepared=prepared)
    cmd_theorem2(config, out_dir, manifest, prepared=prepared, c1=c1)


COMMANDS = {
    "capacitance": cmd_capacitance,
    "oracle-compare": cmd_oracle_compare,
    "sweep": cmd_sweep,
    "synthesize": cmd_synthesize,
    "theorem1": cmd_theorem1,
    "theorem2": cmd_theorem2,
    "checks": cmd_checks,
    "all": cmd_all,
}


def run_command(name: str, config: ExperimentConfig, out_dir) -> RunManifest:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config_hash=config.config_hash(), command=name)
    t0 = time.time()
    COMMANDS[name](config, out_dir, manifest)
    manifest.add_timing("total", time.time() - t0)
    stub = out_dir / "plot_results.py"
    stub.write_text(_PLOT_STUB)
    manifest.add_file(stub)
    manifest_path = manifest.write(out_dir)
    logger.info("manifest written to %s (overall %s)", manifest_path,
                "PASS" if manifest.all_passed else "FAIL")
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="smallscat",
        description="Desk-scale verification of point-scatterer asymptotics "
                    "for sound-soft wave scattering by a small obstacle.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=str, default=None, help="config file path")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--workers", type=int, default=None, help="parallel workers")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(stream=sys.stderr,
                        level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = parse_config_file(args.config) if args.config else default_config()
        if args.workers is not None:
            import dataclasses
            config = dataclasses.replace(config, workers=args.workers)
        out_dir = args.out if args.out else config.output_dir
        manifest = run_command(args.command, config, out_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    for check in manifest.checks:
        print(f"{check.name}: {'PASS' if check.passed else 'FAIL'} ({check.detail})")
    return 0 if manifest.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
