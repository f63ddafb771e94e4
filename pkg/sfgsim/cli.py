import dataclasses
import functools
import logging
import os

import click
from flask import current_app
from flask.cli import AppGroup, with_appcontext

from . import donors, harness, lattice, scenario as scenarios
from .constants import DIAMOND_DIELECTRIC_CONSTANT, DIAMOND_LATTICE_CONSTANT
from .configure import ScanMap, infer_adjacency
from .errors import NoCleanGateError, PreconditionError, SfgError, StageError
from .spins import SpinSystem, sfg_gate
from .utils import ResultUtils

logger = logging.getLogger(__name__)

lattice_cli = AppGroup("lattice", help="Site counts and neighbour shells of the diamond lattice.")
dope_cli = AppGroup("dope", help="Random doping statistics.")
exchange_cli = AppGroup("exchange", help="Control-qubit exchange curves.")
splitting_cli = AppGroup("splitting", help="Control-control transfer splitting curves.")
gate_cli = AppGroup("gate", help="SFG gate search for one control.")
configure_cli = AppGroup("configure", help="Configuration scans and adjacency inference.")
feasibility_cli = AppGroup("feasibility", help="Full pipeline runs.")
presets_cli = AppGroup("presets", help="Built-in scenarios and donor species.")


def output_options(fn):
    """--seed, --out and --format, shared by every command."""
    fn = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="json", show_default=True)(fn)
    fn = click.option(
        "--out", default=None, help="Output file; 'auto' writes a unique file under RESULTS_FOLDER; stdout if omitted."
    )(fn)
    fn = click.option("--seed", type=int, default=None, help="Seed; defaults to the scenario's or DEFAULT_SEED.")(fn)
    return fn


def stage_errors(stage):
    """Report SfgError as a click error prefixed with the failing stage."""

    def decorator(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError as exc:
                raise click.ClickException(str(exc)) from exc
            except SfgError as exc:
                raise click.ClickException(f"[{stage}] {exc}") from exc

        return wrapper

    return decorator


def _seed(seed):
    return current_app.config["DEFAULT_SEED"] if seed is None else seed


def _emit(text, out, stem, fmt):
    if out is None or out == "-":
        click.echo(text, nl=False)
        return None
    if out == "auto":
        out = os.path.join(current_app.config["RESULTS_FOLDER"], ResultUtils.generate_unique_filename(stem, fmt))
    path = ResultUtils.write_text(text, out)
    logger.info("wrote %s", path)
    click.echo(path, err=True)
    return path


def _load(source, seed):
    loaded = scenarios.load_scenario(source)
    if seed is not None:
        loaded = loaded.with_random_seed(seed) if loaded.random is not None else dataclasses.replace(loaded, seed=seed)
    return loaded


@lattice_cli.command("count")
@click.option("--radius", "radii", type=float, multiple=True, required=True, help="Sphere radius in Å; repeatable.")
@click.option("--lattice-constant", type=float, default=DIAMOND_LATTICE_CONSTANT, show_default=True)
@click.option("--concentration", type=float, default=None, help="Adds the expected dopant count per sphere.")
@output_options
@stage_errors("lattice")
def lattice_count(radii, lattice_constant, concentration, seed, out, fmt):
    rows = lattice.sphere_count_table(radii, lattice_constant, concentration)
    columns = ["radius_angstrom", "sites_with_center", "sites_without_center", "continuum_sites", "convention"]
    if concentration is not None:
        columns.append("expected_dopants")
    _emit(ResultUtils.render(rows, columns, rows, fmt), out, "lattice_count", fmt)


@lattice_cli.command("shells")
@click.option("--n-shells", type=int, default=8, show_default=True)
@click.option("--lattice-constant", type=float, default=DIAMOND_LATTICE_CONSTANT, show_default=True)
@output_options
@stage_errors("lattice")
def lattice_shells(n_shells, lattice_constant, seed, out, fmt):
    if n_shells < 1:
        raise click.BadParameter("must be >= 1", param_hint="--n-shells")
    table = lattice.neighbor_shells(lattice_constant, n_shells)
    rows = [
        {"shell": i + 1, "radius_angstrom": r, "sites": n, "cumulative_sites": total}
        for i, ((r, n), (_, total)) in enumerate(zip(table.shells, table.cumulative()))
    ]
    columns = ["shell", "radius_angstrom", "sites", "cumulative_sites"]
    _emit(ResultUtils.render(rows, columns, rows, fmt), out, "lattice_shells", fmt)


@dope_cli.command("stats")
@click.option("--cells", type=int, default=20, show_default=True, help="Periodic supercell edge in conventional cells.")
@click.option("--concentration", type=float, required=True)
@click.option("--n-shells", type=int, default=5, show_default=True)
@output_options
@stage_errors("lattice")
def dope_stats(cells, concentration, n_shells, seed, out, fmt):
    seed = _seed(seed)
    spec = lattice.LatticeSpec(periodic_cells=cells)
    region = lattice.place_dopants(spec, concentration, {"dopant": 1.0}, seed)
    stats = lattice.neighbor_statistics(region, n_shells)
    rows = [
        {
            "neighbors": k,
            "count": int(stats.counts[k]),
            "empirical": float(stats.empirical[k]),
            "binomial": float(stats.analytic[k]),
            "sigma": float(stats.sigma[k]),
        }
        for k in range(len(stats.analytic))
    ]
    payload = {
        "seed": seed,
        "n_sites": region.n_sites,
        "n_dopants": region.n_dopants,
        "concentration": region.concentration,
        "shell_sites": stats.shell_sites,
        "n_samples": stats.n_samples,
        "binned": {"empirical": stats.binned("empirical"), "binomial": stats.binned("analytic")},
        "rows": rows,
    }
    columns = ["neighbors", "count", "empirical", "binomial", "sigma"]
    _emit(ResultUtils.render(payload, columns, rows, fmt), out, "dope_stats", fmt)


def _model_payload(model):
    out = donors.model_to_dict(model)
    out.update(
        coulombic_binding_eV=model.coulombic_binding,
        effective_mass_ratio=model.effective_mass_ratio,
        orbital_radius_angstrom=model.orbital_radius,
        transition_energy_meV=model.transition_energy,
    )
    return out


@click.command("emt", help="Effective-mass donor model from a preset or a binding energy.")
@with_appcontext
@click.option("--preset", default=None, help="Donor preset name.")
@click.option("--binding-energy", type=float, default=None, help="Ionization energy, eV.")
@click.option("--exciton-binding", type=float, default=None, help="Bound-exciton binding, eV (Haynes rule).")
@click.option("--central-cell", type=float, default=0.0, show_default=True, help="Central-cell part, eV.")
@click.option("--dielectric", type=float, default=DIAMOND_DIELECTRIC_CONSTANT, show_default=True)
@click.option("--g-factor", type=float, default=2.0, show_default=True)
@click.option("--field", type=float, default=None, help="Magnetic field, T; adds the Zeeman/thermal check.")
@click.option("--temperature", type=float, default=None, help="Temperature, K.")
@output_options
@stage_errors("donors")
def emt(preset, binding_energy, exciton_binding, central_cell, dielectric, g_factor, field, temperature, seed, out, fmt):
    if preset:
        model = donors.get_preset(preset)
    elif binding_energy is not None:
        model = donors.model_from_ionization(binding_energy, dielectric, central_cell)
    elif exciton_binding is not None:
        model = donors.model_from_exciton(exciton_binding, dielectric_constant=dielectric, central_cell_split=central_cell)
    else:
        raise click.UsageError("give --preset, --binding-energy or --exciton-binding")
    payload = _model_payload(model)
    if field is not None and temperature is not None:
        payload["zeeman"] = dataclasses.asdict(donors.zeeman_check(g_factor, field, temperature))
    rows = [{"quantity": k, "value": v} for k, v in payload.items() if not isinstance(v, dict)]
    _emit(ResultUtils.render(payload, ["quantity", "value"], rows, fmt), out, "emt", fmt)


def _curve(source, seed, kind, workers, out, fmt):
    loaded = _load(source, seed)
    if loaded.curve is None or loaded.curve.get("kind", "exchange") != kind:
        raise PreconditionError(f"scenario {loaded.name} has no {kind} curve")
    result = harness.run_curve(loaded, workers=workers)
    _emit(ResultUtils.render(result.to_dict(), result.columns, result.rows, fmt), out, f"{loaded.name}_{kind}", fmt)


@exchange_cli.command("curve")
@click.argument("source")
@click.option("--workers", type=int, default=None)
@output_options
@stage_errors("integrals")
def exchange_curve(source, workers, seed, out, fmt):
    """Exchange versus separation for a scenario file or preset name."""
    _curve(source, seed, "exchange", workers, out, fmt)


@splitting_cli.command("curve")
@click.argument("source")
@click.option("--workers", type=int, default=None)
@output_options
@stage_errors("integrals")
def splitting_curve(source, workers, seed, out, fmt):
    """Transfer splitting of two controls versus separation."""
    _curve(source, seed, "splitting", workers, out, fmt)


def _couplings(values):
    couplings = {}
    for item in values:
        label, sep, value = item.partition("=")
        if not sep:
            raise click.BadParameter(f"expected LABEL=meV, got {item!r}", param_hint="--coupling")
        couplings[label.strip()] = float(value)
    return couplings


@gate_cli.command("run")
@click.option("--coupling", "couplings", multiple=True, required=True, help="QUBIT=J_meV; repeat per qubit.")
@click.option("--control", "control_label", default="C", show_default=True)
@click.option("--threshold", type=float, default=None, help="Clean-gate limit, bits.")
@click.option("--allow-dirty", is_flag=True, help="Report the best candidate when no gate is clean.")
@output_options
@stage_errors("spins")
def gate_run(couplings, control_label, threshold, allow_dirty, seed, out, fmt):
    values = _couplings(couplings)
    qubits = list(values)
    system = SpinSystem(
        [control_label] + qubits,
        ["control"] + ["qubit"] * len(qubits),
        {(control_label, q): j for q, j in values.items()},
    )
    threshold = current_app.config["CLEAN_GATE_THRESHOLD_BITS"] if threshold is None else threshold
    try:
        report = sfg_gate(system, control_label, threshold=threshold, require_clean=not allow_dirty)
    except NoCleanGateError as exc:
        best = exc.best.duration if exc.best is not None else float("nan")
        raise click.ClickException(f"[spins] {exc} (best tau {best:.6g} ps; rerun with --allow-dirty)") from exc
    payload = report.to_dict()
    payload["qubit_unitary"] = {"real": report.qubit_unitary.real.tolist(), "imag": report.qubit_unitary.imag.tolist()}
    columns = ["duration_ps", "control_residual_entanglement_bits", "entangling_power", "status"]
    _emit(ResultUtils.render(payload, columns, [payload], fmt), out, "gate", fmt)


@configure_cli.command("scan")
@click.argument("source")
@output_options
@stage_errors("configure")
def configure_scan(source, seed, out, fmt):
    """Simulated configuration scan of a scenario; CSV carries the qubit lines in comment rows."""
    loaded = _load(source, seed)
    state = harness.prepare(loaded)
    with harness.stage("configure"):
        scan = harness.scenario_scan(state)
    text = scan.csv_text() if fmt == "csv" else ResultUtils.json_text(scan.to_dict())
    _emit(text, out, f"{loaded.name}_scan", fmt)


@configure_cli.command("infer")
@click.argument("scan_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--threshold", type=float, default=None, help="Detection threshold, meV.")
@output_options
@stage_errors("configure")
def configure_infer(scan_csv, threshold, seed, out, fmt):
    """Adjacency hypothesis from a scan written by 'configure scan --format csv'."""
    threshold = current_app.config["DETECTION_THRESHOLD_MEV"] if threshold is None else threshold
    hypothesis = infer_adjacency(ScanMap.from_csv(scan_csv), threshold)
    rows = [
        {
            "optical_energy_meV": e.optical_energy,
            "qubits": ";".join(e.qubits),
            "couplings_meV": ";".join(f"{q}={j!r}" for q, j in e.couplings.items()),
            "flags": ";".join(e.flags),
        }
        for e in hypothesis.entries
    ]
    payload = {
        "detection_threshold": hypothesis.detection_threshold,
        "entries": [dataclasses.asdict(e) for e in hypothesis.entries],
    }
    _emit(ResultUtils.render(payload, list(rows[0]) if rows else None, rows, fmt), out, "adjacency", fmt)


@feasibility_cli.command("run")
@click.argument("source")
@click.option("--workers", type=int, default=None)
@click.option("--record", is_flag=True, help="Store the run in the run database.")
@click.option("--no-timestamp", is_flag=True, help="Omit generated_at so reports diff cleanly.")
@output_options
@stage_errors("harness")
def feasibility_run(source, workers, record, no_timestamp, seed, out, fmt):
    """Feasibility report for a scenario file or preset name."""
    loaded = _load(source, seed)
    report = harness.run_feasibility(loaded, workers=workers)
    payload = report.to_dict(include_timestamp=not no_timestamp)
    if record:
        from .models import record_run

        saved = record_run("feasibility", loaded, loaded.seed, payload, report.digest)
        click.echo(f"recorded run {saved.rr_unique_id}", err=True)
    columns = ["control", "qubit", "separation", "exchange_meV", "overlap"]
    _emit(ResultUtils.render(payload, columns, report.exchange_table, fmt), out, f"{loaded.name}_report", fmt)


@feasibility_cli.command("patches")
@click.argument("source")
@click.option("--n-patches", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--target", type=int, default=None, help="Gates a patch must offer.")
@click.option("--record", is_flag=True)
@output_options
@stage_errors("harness")
def feasibility_patches(source, n_patches, workers, target, record, seed, out, fmt):
    """Usable-gate statistics over random patches of a template scenario."""
    loaded = scenarios.load_scenario(source)
    workers = current_app.config["PATCH_WORKERS"] if workers is None else workers
    stats = harness.patch_statistics(loaded, n_patches=n_patches, seed=seed, workers=workers, gate_target=target)
    payload = stats.to_dict()
    if record:
        from .models import record_run

        saved = record_run("patches", loaded, stats.seed, payload)
        click.echo(f"recorded run {saved.rr_unique_id}", err=True)
    rows = [{"usable_gates": k, "fraction": v} for k, v in payload["distribution"].items()]
    _emit(ResultUtils.render(payload, ["usable_gates", "fraction"], rows, fmt), out, f"{loaded.name}_patches", fmt)


@presets_cli.command("list")
@output_options
@stage_errors("presets")
def presets_list(seed, out, fmt):
    notes = donors.preset_notes()
    rows = [{"kind": "scenario", "name": name, "notes": ""} for name in scenarios.list_presets()]
    rows += [{"kind": "species", "name": name, "notes": notes.get(name, "")} for name in sorted(donors.load_presets())]
    _emit(ResultUtils.render(rows, ["kind", "name", "notes"], rows, fmt), out, "presets", fmt)


def register_commands(app):
    for group in (
        lattice_cli, dope_cli, exchange_cli, splitting_cli, gate_cli, configure_cli, feasibility_cli, presets_cli
    ):
        app.cli.add_command(group)
    app.cli.add_command(emt)
