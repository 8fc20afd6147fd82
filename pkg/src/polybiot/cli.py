"""Command line entry points for the benchmark drivers.

Subcommands:

* ``converge``: smooth-solution convergence study over a mesh ladder,
  with per-level error and conservation columns written to CSV.
* ``barry-mercer``: point-source consolidation run, writing diagonal
  pressure profiles and, in robustness mode, an oscillation count.
* ``mesh-info``: mesh statistics for a generated or loaded mesh, with
  optional conversion between the native JSON and FVCA5 text formats.

All subcommands accept defaults from a versioned JSON config file via
``--config``; explicit command line options win.  With ``--check`` the
process exits nonzero when the run violates its quality thresholds.
"""

from __future__ import annotations

import json
import math
import os
import sys

import click

from . import harness
from . import mesh as pmesh
from . import cases
from .system import BiotSystem, StepOperator, dump_matrix

CONFIG_VERSION = 1


def _load_config(ctx, param, value):
    if value is None:
        return None
    with open(value) as fh:
        cfg = json.load(fh)
    if cfg.get("version") != CONFIG_VERSION:
        raise click.BadParameter(
            f"config version {cfg.get('version')!r} is not supported; "
            f"expected {CONFIG_VERSION}")
    ctx.default_map = {k: v for k, v in cfg.items() if k != "version"}
    return value


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              callback=_load_config, expose_value=False, is_eager=True,
              help="JSON file with per-subcommand option defaults; must "
                   "contain a top-level \"version\" field.")
def main():
    """Polygonal-mesh poroelasticity benchmark harness."""


def _fail(msg: str):
    click.echo(f"CHECK FAILED: {msg}", err=True)
    sys.exit(1)


@main.command()
@click.option("--k", type=click.IntRange(1), default=1, show_default=True,
              help="Polynomial degree of the face and pressure spaces.")
@click.option("--family", type=click.Choice(harness.MESH_FAMILIES),
              default="triangular", show_default=True)
@click.option("--levels", type=click.IntRange(1), default=3,
              show_default=True, help="Number of mesh refinement levels.")
@click.option("--scheme", type=click.Choice(["euler", "bdf2"]),
              default="bdf2", show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=".",
              show_default=True)
@click.option("--flux-csv/--no-flux-csv", default=True, show_default=True,
              help="Track per-step conservation residuals.")
@click.option("--dump-matrix", "dump_matrix_path", type=click.Path(),
              default=None, help="Write the finest-level condensed step "
                                 "matrix in Matrix Market format.")
@click.option("--check", is_flag=True,
              help="Exit nonzero unless the finest-pair convergence "
                   "order reaches k + 0.75 and conservation residuals "
                   "stay below 1e-10.")
def converge(k, family, levels, scheme, out_dir, flux_csv,
             dump_matrix_path, check):
    """Run a manufactured-solution convergence study."""
    rows = harness.run_convergence(k, family, levels, scheme=scheme,
                                   check_fluxes=flux_csv)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"convergence_{family}_k{k}.csv")
    harness.write_convergence_csv(path, rows)
    click.echo("  ".join(harness.ConvergenceRow.HEADER[:10]))
    for r in rows:
        click.echo(f"{r.family}  {r.level}  {r.h:.5f}  {r.n_elements}  "
                   f"{r.tau:.5g}  {r.n_steps}  {r.err_p:.4e}  "
                   f"{r.err_u:.4e}  {r.eoc_p:.3f}  {r.eoc_u:.3f}")
    click.echo(f"wrote {path}")

    if dump_matrix_path is not None:
        case = cases.manufactured_case()
        mesh = harness.build_mesh(family, levels - 1)
        sysm = BiotSystem(mesh, k, mu=case.mu, lam=case.lam,
                          kappa=case.kappa, c0=case.c0)
        tau = rows[-1].tau
        theta = 1.0 if scheme == "euler" else 1.5
        op = StepOperator(sysm, tau, theta)
        dump_matrix(op, dump_matrix_path)
        click.echo(f"wrote {dump_matrix_path}")

    if check:
        last = rows[-1]
        target = k + 0.75
        if not (last.eoc_p >= target and last.eoc_u >= target):
            _fail(f"finest-pair orders p={last.eoc_p:.3f} "
                  f"u={last.eoc_u:.3f} below target {target}")
        if flux_csv:
            worst = max(r.max_traction_mismatch for r in rows)
            worst = max(worst, max(r.max_mass_mismatch for r in rows))
            worst = max(worst,
                        max(r.max_equilibrium_residual for r in rows))
            worst = max(worst,
                        max(r.max_mass_balance_residual for r in rows))
            if worst > 1e-10:
                _fail(f"conservation residual {worst:.3e} above 1e-10")
        click.echo("CHECK PASSED")


@main.command("barry-mercer")
@click.option("--kappa", type=float, default=1.0e-2, show_default=True)
@click.option("--steps", type=click.IntRange(2), default=100,
              show_default=True, help="Time steps per source period.")
@click.option("--rows", type=click.IntRange(2), default=32,
              show_default=True)
@click.option("--cols", type=click.IntRange(2), default=34,
              show_default=True)
@click.option("--scheme", type=click.Choice(["euler", "bdf2"]),
              default="bdf2", show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=".",
              show_default=True)
@click.option("--robustness", is_flag=True,
              help="Two-step low-permeability run on a fine mesh with an "
                   "oscillation count instead of the full period.")
@click.option("--fields/--no-fields", default=False, show_default=True,
              help="Export final cell-averaged fields to CSV.")
@click.option("--reference", type=click.Path(exists=True, dir_okay=False),
              default=None, help="CSV reference profile (columns s, p); "
                                 "reports the relative L2 distance of the "
                                 "quarter-period profile to it.")
@click.option("--check", is_flag=True,
              help="Exit nonzero unless the run is qualitatively correct "
                   "(single dominant peak, profile anti-symmetry; in "
                   "robustness mode zero spurious extrema).")
def barry_mercer(kappa, steps, rows, cols, scheme, out_dir, robustness,
                 fields, reference, check):
    """Run the point-source consolidation problem."""
    os.makedirs(out_dir, exist_ok=True)
    if robustness:
        res = harness.run_barry_mercer_robustness(rows=max(rows, 4),
                                                  cols=max(cols, 4),
                                                  kappa=kappa)
        path = os.path.join(out_dir, "robustness_profiles.csv")
        harness.write_profile_csv(path, res)
        click.echo(f"{res.n_elements} elements, h = {res.mesh_h:.5f}")
        click.echo(f"spurious extrema outside 2h of the source: "
                   f"{res.spurious_extrema}")
        click.echo(f"wrote {path}")
        if check:
            if res.spurious_extrema != 0:
                _fail(f"{res.spurious_extrema} spurious extrema")
            click.echo("CHECK PASSED")
        return

    res = harness.run_barry_mercer(rows=rows, cols=cols, kappa=kappa,
                                   n_steps=steps, scheme=scheme)
    path = os.path.join(out_dir, "diagonal_profiles.csv")
    harness.write_profile_csv(path, res)
    diag = harness.profile_diagnostics(res)
    click.echo(f"{res.n_elements} elements, h = {res.mesh_h:.5f}")
    click.echo(f"quarter-period peak {diag['peak_value']:.4f} at "
               f"s = {diag['peak_location']:.4f}")
    click.echo(f"early/late profile correlation "
               f"{diag['correlation']:.6f}")
    click.echo(f"wrote {path}")
    if fields:
        fpath = os.path.join(out_dir, "final_fields.csv")
        harness.export_fields(fpath, res.system, res.final_state.U,
                              res.final_state.P)
        click.echo(f"wrote {fpath}")
    if reference is not None:
        err = harness.reference_profile_error(res, reference)
        click.echo(f"relative L2 distance to reference: {err:.4e}")
    if check:
        if abs(diag["peak_location"] - 0.25) > 2.0 * res.mesh_h:
            _fail(f"peak at s = {diag['peak_location']:.4f}, expected "
                  f"near 0.25")
        if diag["secondary_peak"] > 0.2 * diag["peak_value"]:
            _fail("secondary positive peak above 20% of the main peak")
        if diag["correlation"] > -0.95:
            _fail(f"profile correlation {diag['correlation']:.4f} above "
                  f"-0.95")
        click.echo("CHECK PASSED")


@main.command("mesh-info")
@click.option("--family", type=click.Choice(harness.MESH_FAMILIES),
              default=None, help="Generate a mesh from a named family.")
@click.option("--level", type=click.IntRange(0), default=0,
              show_default=True)
@click.option("--file", "mesh_file",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="Load a mesh instead of generating one.")
@click.option("--format", "fmt",
              type=click.Choice(["native-json", "fvca5"]),
              default="native-json", show_default=True,
              help="Format of the loaded mesh file.")
@click.option("--save", type=click.Path(), default=None,
              help="Write the mesh out again (.json for the native "
                   "format, anything else for FVCA5 text).")
@click.option("--stats-csv", type=click.Path(), default=None,
              help="Write the statistics as a one-row CSV.")
def mesh_info(family, level, mesh_file, fmt, save, stats_csv):
    """Report mesh statistics; optionally convert between formats."""
    if (family is None) == (mesh_file is None):
        raise click.UsageError("pass exactly one of --family or --file")
    if family is not None:
        mesh = harness.build_mesh(family, level)
    else:
        mesh = pmesh.load_mesh(mesh_file, fmt=fmt)
    rep = pmesh.regularity_report(mesh)
    for key in sorted(rep):
        click.echo(f"{key}: {rep[key]}")
    if save is not None:
        if save.endswith(".json"):
            pmesh.save_mesh(mesh, save)
        else:
            pmesh.save_fvca5(mesh, save)
        click.echo(f"wrote {save}")
    if stats_csv is not None:
        pmesh.write_statistics_csv(mesh, stats_csv)
        click.echo(f"wrote {stats_csv}")


if __name__ == "__main__":
    main()
