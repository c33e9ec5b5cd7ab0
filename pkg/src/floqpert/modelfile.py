"""Model-file ingestion: JSON descriptions of driven systems.

All frequencies and energies in model files are linear (E/h) in GHz and are
converted to angular rad/ns internally; times are in ns throughout.  The
fluxonium flux-drive amplitude is the dimensionless A/(2 pi).  Unknown fields
are rejected.
"""

from __future__ import annotations

import json
import math
from importlib import resources

import jsonschema
import numpy as np

from . import model
from .errors import ValidationError

TWO_PI = 2.0 * math.pi


def load_schema(name: str) -> dict:
    """One of the JSON schemas shipped with the package."""
    path = resources.files("floqpert").joinpath("schemas", f"{name}.schema.json")
    return json.loads(path.read_text())


def validate(instance: dict, schema_name: str) -> None:
    try:
        jsonschema.validate(instance, load_schema(schema_name))
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"{schema_name} schema violation: {exc.message}") from exc


def load_model(path) -> tuple[model.DrivenSystem, dict]:
    """Build the driven system described by a model file.

    Returns the system plus the decomposition hints from the file (explicit
    degenerate set and pinned photon sectors, when given).
    """
    with open(path) as fh:
        data = json.load(fh)
    return build_model(data)


def build_model(data: dict) -> tuple[model.DrivenSystem, dict]:
    validate(data, "model")
    kind = data["type"]
    wd = TWO_PI * data["drive_frequency"]
    params = data.get("parameters", {})
    hints = {
        "degenerate_set": data.get("degenerate_set"),
        "photon_sectors": {
            int(k): int(v) for k, v in data.get("photon_sectors", {}).items()
        }
        or None,
    }

    if kind == "xz":
        system = model.xz_model(
            TWO_PI * params["omega01"],
            TWO_PI * params["omega_x"],
            TWO_PI * params["omega_z"],
            wd,
        )
    elif kind == "rabi":
        system = model.rabi_model(
            TWO_PI * params["omega01"], TWO_PI * params["omega_x"], wd
        )
    elif kind == "fluxonium":
        spec = model.FluxoniumSpec(
            ej=params["ej"],
            el=params["el"],
            ec=params["ec"],
            amplitude=TWO_PI * params["amplitude"],
            basis_size=params.get("basis_size", 60),
            levels=params.get("levels", 5),
        )
        system = model.fluxonium(spec, wd)
    elif kind == "transmon":
        system = model.transmon(
            TWO_PI * params["omega_q"],
            TWO_PI * params["anharmonicity"],
            TWO_PI * params["amplitude"],
            wd,
            levels=params.get("levels", 5),
            basis_size=params.get("basis_size", 56),
        )
    elif kind == "custom":
        energies = TWO_PI * np.asarray(params["energies"], dtype=float)
        harmonics = {}
        for entry in params["harmonics"]:
            p = int(entry["p"])
            if p < 0:
                raise ValidationError("custom harmonics are given for p >= 0 only")
            re = np.asarray(entry["re"], dtype=float)
            im = np.asarray(entry.get("im", np.zeros_like(re)), dtype=float)
            harmonics[p] = TWO_PI * (re + 1j * im)
        system = model.system_from_positive_harmonics(
            energies, harmonics, wd, {"model": "custom"}
        )
    else:  # pragma: no cover - schema forbids it
        raise ValidationError(f"unknown model type {kind!r}")
    return system, hints


def decomposition_for(system: model.DrivenSystem, hints: dict, threshold=None):
    kwargs = {}
    if hints.get("degenerate_set") is not None:
        kwargs["explicit_D"] = list(hints["degenerate_set"])
    if hints.get("photon_sectors"):
        kwargs["explicit_photons"] = hints["photon_sectors"]
    if threshold is not None:
        kwargs["threshold"] = threshold
    return model.decompose(system, **kwargs)
