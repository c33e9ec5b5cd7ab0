"""Command-line front end.

Subcommands cover the whole pipeline: coefficient tables, effective
Hamiltonians, diagram listings, resonance solving, perturbative and exact
evolution, amplitude sweeps, pulse design and the reference-figure presets.
Every output file is accompanied by a run manifest; rerunning a command with
the same inputs reproduces the delimited outputs byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import click
import numpy as np

from . import __version__, evolve, figures, model, modelfile, opalg, oracle, pert, pulse
from .errors import FloqpertError, NumericalError, ValidationError

TWO_PI = 2.0 * np.pi

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _fail(exc: FloqpertError):
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_VALIDATION if isinstance(exc, ValidationError) else EXIT_NUMERICAL)


def _guarded(fn):
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except FloqpertError as exc:
            _fail(exc)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _sha256(path) -> str:
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()


def _write_manifest(out_path, outputs, model_path=None, orders=None, truncations=None):
    manifest = {
        "tool_version": __version__,
        "command": sys.argv[1:],
        "model_file": str(model_path) if model_path else None,
        "model_sha256": _sha256(model_path) if model_path else None,
        "orders": orders or {},
        "truncations": truncations or {},
        "outputs": [str(o) for o in outputs],
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    modelfile.validate(manifest, "manifest")
    path = Path(f"{out_path}.manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _emit_json(payload: dict, out, schema: str) -> None:
    modelfile.validate(payload, schema)
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


def _load(model_path, threshold=None):
    system, hints = modelfile.load_model(model_path)
    decomposition = modelfile.decomposition_for(system, hints, threshold)
    return system, decomposition


def _complex_matrix(matrix) -> dict:
    matrix = np.asarray(matrix)
    return {"re": matrix.real.tolist(), "im": matrix.imag.tolist()}


@click.group()
@click.version_option(__version__)
def main():
    """Multi-photon perturbation theory for periodically driven systems."""


@main.command()
@click.option("--kind", type=click.Choice(["heff", "w"]), required=True)
@click.option("--order", type=int, required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--out", type=click.Path(), default=None)
@_guarded
def coeffs(kind, order, fmt, out):
    """Multiplicity-coefficient table of one perturbative order."""
    if order < 1:
        raise ValidationError("order must be at least 1")
    table = opalg.heff_table(order) if kind == "heff" else opalg.w_table(order)
    slots = order - 1 if kind == "heff" else order
    rows = sorted(table.entries.items())
    if fmt == "csv":
        target = open(out, "w", newline="") if out else sys.stdout
        writer = csv.writer(target)
        writer.writerow([f"m{slots - i}" for i in range(slots)] + ["numerator", "denominator"])
        for tup, coeff in rows:
            writer.writerow(list(tup) + [coeff.numerator, coeff.denominator])
        if out:
            target.close()
            _write_manifest(out, [out], orders={"table": order})
    else:
        payload = {
            "kind": kind,
            "order": order,
            "entries": [
                {"exponents": list(tup), "numerator": c.numerator, "denominator": c.denominator}
                for tup, c in rows
            ],
        }
        text = json.dumps(payload, indent=2) + "\n"
        if out:
            Path(out).write_text(text)
            _write_manifest(out, [out], orders={"table": order})
        else:
            click.echo(text, nl=False)


model_option = click.option("--model", "model_path", type=click.Path(exists=True), required=True)
out_option = click.option("--out", type=click.Path(), default=None)
near_res_option = click.option("--allow-near-resonance", is_flag=True, default=False)


@main.command()
@model_option
@click.option("--order", type=int, default=3, show_default=True)
@out_option
@near_res_option
@click.option("--sensitivity", is_flag=True, default=False,
              help="Report the change of every entry when one more level is kept.")
@_guarded
def heff(model_path, order, out, allow_near_resonance, sensitivity):
    """Effective Hamiltonian on the degenerate set, order by order (GHz)."""
    system, dec = _load(model_path)
    result = pert.effective_hamiltonian(
        system, dec, order, allow_near_resonance=allow_near_resonance
    )
    levels = result.levels
    cumulative = result.total
    payload = {
        "order": order,
        "degenerate_levels": list(levels),
        "drive_frequency": system.drive_frequency / TWO_PI,
        "dimension": result.metadata["dimension"],
        "p_max": result.metadata["p_max"],
        "orders": [_complex_matrix(m / TWO_PI) for m in result.orders],
        "cumulative": _complex_matrix(cumulative / TWO_PI),
        "stark_shifts": {
            str(k): float(cumulative[i, i].real) / TWO_PI for i, k in enumerate(levels)
        },
        "couplings": {
            f"{levels[i]},{levels[j]}": [
                cumulative[i, j].real / TWO_PI, cumulative[i, j].imag / TWO_PI
            ]
            for i in range(len(levels))
            for j in range(len(levels))
            if i != j
        },
        "level_sensitivity": None,
        "units": "GHz",
    }
    if sensitivity:
        payload["level_sensitivity"] = _level_sensitivity(model_path, order, cumulative)
    _emit_json(payload, out, "heff")
    if out:
        _write_manifest(out, [out], model_path, {"r_H": order},
                        {"p_max": result.metadata["p_max"]})


def _level_sensitivity(model_path, order, cumulative):
    with open(model_path) as fh:
        data = json.load(fh)
    params = data.get("parameters", {})
    if "levels" not in params and data["type"] not in ("fluxonium", "transmon"):
        return None
    params = dict(params)
    params["levels"] = params.get("levels", 5) + 1
    data = dict(data, parameters=params)
    system, hints = modelfile.build_model(data)
    dec = modelfile.decomposition_for(system, hints)
    bigger = pert.effective_hamiltonian(system, dec, order).total
    delta = np.abs(bigger - cumulative) / TWO_PI
    return {"max_entry_change": float(np.max(delta)), "frobenius_change": float(np.linalg.norm(delta))}


@main.command()
@model_option
@click.option("--order", type=int, default=3, show_default=True)
@click.option("--from", "from_level", type=int, default=0, show_default=True)
@click.option("--to", "to_level", type=int, default=1, show_default=True)
@out_option
@_guarded
def processes(model_path, order, from_level, to_level, out):
    """Diagram listing of one effective matrix element (GHz)."""
    system, dec = _load(model_path)
    terms = pert.enumerate_processes(system, dec, to_level, from_level, order)
    total = sum(t.amplitude for t in terms)
    space = pert.build_space(dec, order, system.max_harmonic)
    scaled = []
    for t in terms:
        entry = t.as_dict()
        entry["denominators"] = [d / TWO_PI for d in entry["denominators"]]
        entry["amplitude"] = [v / TWO_PI for v in entry["amplitude"]]
        scaled.append(entry)
    payload = {
        "order": order,
        "from_level": from_level,
        "to_level": to_level,
        "total": [total.real / TWO_PI, total.imag / TWO_PI],
        "dimension": space.dim,
        "p_max": space.p_max,
        "units": "GHz",
        "terms": scaled,
    }
    _emit_json(payload, out, "processes")
    if out:
        _write_manifest(out, [out], model_path, {"r_H": order})


@main.command()
@model_option
@click.option("--order", type=int, default=3, show_default=True)
@click.option("--bracket", type=float, nargs=2, default=None,
              help="Drive-frequency bracket in GHz; defaults to a band around the n-photon guess.")
@out_option
@near_res_option
@_guarded
def resonance(model_path, order, bracket, out, allow_near_resonance):
    """Drive frequency balancing the Stark shifts of the degenerate pair."""
    system, dec = _load(model_path)
    with open(model_path) as fh:
        data = json.load(fh)
    hints = {
        "degenerate_set": data.get("degenerate_set"),
        "photon_sectors": {int(k): int(v) for k, v in data.get("photon_sectors", {}).items()} or None,
    }

    def build(wd):
        fresh, _ = modelfile.build_model(dict(data, drive_frequency=wd / TWO_PI))
        return fresh

    if len(dec.degenerate) != 2:
        raise ValidationError("resonance solving needs a two-level degenerate set")
    k0, k1 = dec.degenerate
    n1 = int(dec.photon_numbers[k1] - dec.photon_numbers[k0])
    gap = float(system.energies[k1] - system.energies[k0])
    if bracket:
        lo, hi = TWO_PI * bracket[0], TWO_PI * bracket[1]
    else:
        guess = gap / max(n1, 1)
        lo, hi = guess * 0.95, guess * 1.55
    result = pert.resonance_frequency(
        build, (lo, hi), order,
        explicit_D=list(hints["degenerate_set"]) if hints["degenerate_set"] else None,
        explicit_photons=hints["photon_sectors"],
        allow_near_resonance=allow_near_resonance,
    )
    space = pert.build_space(dec, order, system.max_harmonic)
    payload = {
        "order": order,
        "omega_d": result.omega_d / TWO_PI,
        "detuning": (n1 * result.omega_d - gap) / TWO_PI,
        "roots": [r / TWO_PI for r in result.roots],
        "residual": result.residual / TWO_PI,
        "flagged": result.flagged,
        "dimension": space.dim,
        "p_max": space.p_max,
        "units": "GHz",
    }
    _emit_json(payload, out, "resonance")
    if out:
        _write_manifest(out, [out], model_path, {"r_H": order})


def _evolution_csv(out, result: evolve.EvolutionResult):
    target = open(out, "w", newline="") if out else sys.stdout
    writer = csv.writer(target)
    n_lev = result.amplitudes.shape[0]
    header = ["t"]
    for k in range(n_lev):
        header += [f"re_c{k}", f"im_c{k}"]
    header += [f"p{k}" for k in range(n_lev)] + ["leakage"]
    writer.writerow(header)
    pops = result.populations
    leak = result.leakage
    for i, t in enumerate(result.times):
        row = [repr(float(t))]
        for k in range(n_lev):
            c = result.amplitudes[k, i]
            row += [repr(float(c.real)), repr(float(c.imag))]
        row += [repr(float(pops[k, i])) for k in range(n_lev)]
        row.append(repr(float(leak[i])))
        writer.writerow(row)
    if out:
        target.close()


common_evolve_options = [
    click.option("--t-max", type=float, required=True, help="Evolution span in ns."),
    click.option("--samples-per-period", type=int, default=64, show_default=True),
    click.option("--initial", type=str, default=None,
                 help="Comma-separated amplitudes on the degenerate set."),
]


def add_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn

    return wrap


def _times(system, t_max, samples_per_period):
    period = TWO_PI / system.drive_frequency
    n = max(2, int(np.ceil(t_max / period * samples_per_period)))
    return np.linspace(0.0, t_max, n)


def _initial_vector(spec: str | None, d: int):
    if spec is None:
        c0 = np.zeros(d, dtype=complex)
        c0[0] = 1.0
        return c0
    values = [complex(x) for x in spec.split(",")]
    if len(values) != d:
        raise ValidationError(f"initial state needs {d} amplitudes, got {len(values)}")
    return np.asarray(values, dtype=complex)


@main.command(name="evolve")
@model_option
@click.option("--order", type=int, default=3, show_default=True, help="Effective-Hamiltonian order.")
@click.option("--w-order", type=int, default=1, show_default=True, help="Transformation order.")
@add_options(common_evolve_options)
@out_option
@near_res_option
@_guarded
def evolve_cmd(model_path, order, w_order, t_max, samples_per_period, initial, out,
               allow_near_resonance):
    """Perturbative evolution in the bare basis (CSV time series)."""
    system, dec = _load(model_path)
    heff = pert.effective_hamiltonian(system, dec, order, allow_near_resonance=allow_near_resonance)
    w_op = pert.w_operator(system, dec, w_order, allow_near_resonance=allow_near_resonance)
    c0 = _initial_vector(initial, len(dec.degenerate))
    times = _times(system, t_max, samples_per_period)
    result = evolve.amplitudes(system, dec, heff, w_op, c0, times)
    _evolution_csv(out, result)
    if out:
        _write_manifest(out, [out], model_path, {"r_H": order, "r_W": w_order})


@main.command(name="oracle")
@model_option
@add_options(common_evolve_options)
@click.option("--steps-per-period", type=int, default=256, show_default=True)
@click.option("--tolerance", type=float, default=1e-8, show_default=True)
@out_option
@_guarded
def oracle_cmd(model_path, t_max, samples_per_period, initial, steps_per_period, tolerance, out):
    """Exact lab-frame evolution (CSV time series)."""
    system, dec = _load(model_path)
    psi0 = np.zeros(system.dim, dtype=complex)
    if initial is None:
        psi0[0] = 1.0
    else:
        values = [complex(x) for x in initial.split(",")]
        if len(values) == len(dec.degenerate):
            psi0[list(dec.degenerate)] = values
        elif len(values) == system.dim:
            psi0[:] = values
        else:
            raise ValidationError("initial state length matches neither d nor N")
    config = oracle.IntegratorConfig(steps_per_period=steps_per_period, tolerance=tolerance)
    times = _times(system, t_max, samples_per_period)
    result = oracle.integrate(system, psi0, times, config)
    result = evolve.EvolutionResult(
        times=result.times, amplitudes=result.amplitudes,
        degenerate=dec.degenerate, metadata=result.metadata,
    )
    _evolution_csv(out, result)
    if out:
        _write_manifest(out, [out], model_path, {})


@main.command()
@model_option
@click.option("--amplitudes", type=str, required=True,
              help="Comma-separated drive amplitudes (fluxonium A/2pi or GHz).")
@click.option("--order", type=int, default=7, show_default=True,
              help="Order used to seed the search window.")
@click.option("--threads", type=int, default=1, show_default=True)
@out_option
@_guarded
def sweep(model_path, amplitudes, order, threads, out):
    """Numerically optimized transfer across drive amplitudes (CSV)."""
    with open(model_path) as fh:
        data = json.load(fh)
    if data["type"] not in ("fluxonium", "transmon"):
        raise ValidationError("amplitude sweeps are defined for circuit models")
    amp_list = [float(a) for a in amplitudes.split(",")]
    rows = figures._parallel(
        _sweep_point, [(json.dumps(data), a, order) for a in amp_list], threads
    )
    target = open(out, "w", newline="") if out else sys.stdout
    writer = csv.writer(target)
    writer.writerow(["A", "omega_d_num", "eps_num", "OmegaR_num", "F_max", "t_op"])
    for row in rows:
        writer.writerow([repr(float(v)) for v in row])
    if out:
        target.close()
        _write_manifest(out, [out], model_path, {"r_H": order})


def _sweep_point(data_json: str, amplitude: float, order: int):
    data = json.loads(data_json)
    data["parameters"] = dict(data["parameters"], amplitude=amplitude)

    def build(wd):
        fresh, _ = modelfile.build_model(dict(data, drive_frequency=wd / TWO_PI))
        return fresh

    hints_system, hints = modelfile.build_model(data)
    dec = modelfile.decomposition_for(hints_system, hints)
    if len(dec.degenerate) != 2:
        raise ValidationError("sweeps need a two-level degenerate set")
    k0, k1 = dec.degenerate
    n1 = int(dec.photon_numbers[k1] - dec.photon_numbers[k0])
    gap = float(hints_system.energies[k1] - hints_system.energies[k0])
    guess = gap / n1
    res = pert.resonance_frequency(
        build, (guess * 0.95, guess * 1.55), order,
        explicit_D=list(hints["degenerate_set"]) if hints["degenerate_set"] else [k0, k1],
        explicit_photons=hints["photon_sectors"] or {k1: n1},
    )
    system = build(res.omega_d)
    dec = model.decompose(system, explicit_D=[k0, k1], explicit_photons={k1: n1})
    om = pert.rabi_frequency(pert.effective_hamiltonian(system, dec, order)).omega_r
    window = (res.omega_d - 4 * om / 6, res.omega_d + 4 * om / 6)
    opt = oracle.optimize_transfer(build, window, t_max=1.4 * np.pi / om * 2,
                                   source=k0, target=k1)
    return (
        amplitude,
        opt.omega_d / TWO_PI,
        (n1 * opt.omega_d - gap) / TWO_PI,
        np.pi / opt.t_op / TWO_PI,
        opt.fidelity,
        opt.t_op,
    )


@main.command(name="pulse")
@model_option
@click.option("--amplitude", type=float, required=True, help="Design amplitude (A/2pi).")
@click.option("--sigma", type=float, default=4.0, show_default=True)
@click.option("--t0", "rise", type=float, default=18.0, show_default=True)
@click.option("--orders", type=str, default="7,4,2", show_default=True,
              help="r_H, r_W, and ramp-series order (the last two are reporting only).")
@click.option("--sweep-amplitudes", type=str, default=None,
              help="Optional comma-separated amplitudes for a fidelity sweep CSV.")
@out_option
@_guarded
def pulse_cmd(model_path, amplitude, sigma, rise, orders, sweep_amplitudes, out):
    """Flat-top pulse design (JSON) plus an optional fidelity sweep (CSV)."""
    with open(model_path) as fh:
        data = json.load(fh)
    if data["type"] != "fluxonium":
        raise ValidationError("pulse design currently targets the flux-driven circuit model")
    order = int(orders.split(",")[0])
    params = data["parameters"]

    def build(amp, wd):
        spec = model.FluxoniumSpec(
            ej=params["ej"], el=params["el"], ec=params["ec"], amplitude=amp,
            basis_size=params.get("basis_size", 60), levels=params.get("levels", 5),
        )
        return model.fluxonium(spec, wd)

    design = pulse.solve_pulse(build, TWO_PI * amplitude, order, rise, sigma, n_photons=3)
    payload = {
        "amplitude": amplitude,
        "order": order,
        "n_photons": 3,
        "epsilon": design.epsilon / TWO_PI,
        "omega_d": design.omega_d / TWO_PI,
        "total": design.total,
        "rise": rise,
        "sigma": sigma,
        "delta_m": design.delta_m / TWO_PI,
        "omega_mx": design.omega_mx / TWO_PI,
        "omega_my": design.omega_my / TWO_PI,
        "omega_m": design.omega_m / TWO_PI,
        "ramp_angle": design.ramp_angle,
        "shaped_ramp_angle": design.metadata["shaped_ramp_angle"],
        "adiabatic_ratio": design.metadata["adiabatic_ratio"],
        "residuals": list(design.residuals),
        "flagged": design.flagged,
        "units": "GHz, ns",
    }
    _emit_json(payload, out, "design")
    outputs = [out] if out else []
    if sweep_amplitudes and out:
        sweep_rows = []
        for amp in (float(a) for a in sweep_amplitudes.split(",")):
            try:
                d = pulse.solve_pulse(build, TWO_PI * amp, order, rise, sigma, n_photons=3)
                system = build(TWO_PI * amp, d.omega_d)
                fid = pulse.evaluate_pulse(d, system)
                sweep_rows.append((amp, 1, d.epsilon / TWO_PI, d.total, fid))
            except NumericalError:
                sweep_rows.append((amp, 0, float("nan"), float("nan"), float("nan")))
        sweep_path = Path(out).with_suffix(".sweep.csv")
        with open(sweep_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["A", "converged", "epsilon", "total", "fidelity"])
            for row in sweep_rows:
                writer.writerow([repr(float(v)) for v in row])
        outputs.append(sweep_path)
    if out:
        _write_manifest(out, outputs, model_path, {"r_H": order})


@main.command(name="figure")
@click.argument("preset", type=click.Choice(sorted(figures.PRESETS)))
@click.option("--out-dir", type=click.Path(), default=".", show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--amplitudes", type=str, default=None,
              help="Override the preset's amplitude grid (comma separated).")
@click.option("--orders", type=str, default=None,
              help="Override the preset's order list (comma separated).")
@_guarded
def figure(preset, out_dir, threads, amplitudes, orders):
    """Reference-figure dataset: CSV series plus a rendered PNG."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = out_dir / preset
    overrides = {}
    if amplitudes:
        overrides["amplitudes"] = tuple(float(a) for a in amplitudes.split(","))
    if orders:
        overrides["orders"] = tuple(int(o) for o in orders.split(","))
    meta = figures.run_preset(preset, str(base), threads=threads, **overrides)
    _write_manifest(str(base), [f"{base}.csv", f"{base}.png"], orders={"preset": preset})
    click.echo(json.dumps({"preset": preset, "meta": _jsonable(meta)}, indent=2))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Fraction):
        return [obj.numerator, obj.denominator]
    return obj


if __name__ == "__main__":
    main()
