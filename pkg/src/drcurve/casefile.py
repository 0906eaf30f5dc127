"""Case file ingestion: YAML descriptions of a problem instance.

The schema mirrors the model types field by field. Unknown keys are rejected
so typos fail loudly instead of silently running a different study.
"""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .idc import (
    EssParams,
    FlexibleWorkload,
    IdcCase,
    IdcParams,
    ModelInputError,
    TimeGrid,
)
from .uncertainty import QUANTITIES, QuantityBand, UncertaintyModel


class CaseFileError(ValueError):
    """Unreadable or invalid case file; message carries the offending key."""


def _require_mapping(node, where: str) -> dict:
    if not isinstance(node, dict):
        raise CaseFileError(f"{where}: expected a mapping, got {type(node).__name__}")
    return node


def _take(node: dict, where: str, required: dict, optional: dict | None = None):
    """Pull typed fields out of a mapping, rejecting unknown keys."""
    optional = optional or {}
    unknown = set(node) - set(required) - set(optional)
    if unknown:
        raise CaseFileError(f"{where}: unknown key(s) {sorted(unknown)}")
    out = {}
    for key, conv in required.items():
        if key not in node:
            raise CaseFileError(f"{where}: missing required key {key!r}")
        out[key] = conv(node[key])
    for key, conv in optional.items():
        if key in node:
            out[key] = conv(node[key])
    return out


def _slot_list(value) -> list[float]:
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, list) and all(isinstance(v, (int, float)) for v in value):
        return [float(v) for v in value]
    raise CaseFileError(f"expected number or list of numbers, got {value!r}")


def load_case(path: str | Path) -> IdcCase:
    """Parse a case file into a problem instance."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CaseFileError(f"cannot read case file {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise CaseFileError(f"{path}: not valid YAML: {exc}") from exc
    return case_from_dict(doc, where=str(path))


def case_from_dict(doc, where: str = "case") -> IdcCase:
    doc = _require_mapping(doc, where)
    top = _take(
        doc, where,
        required={
            "time_grid": dict, "idcs": list, "uncertainty": dict,
        },
        optional={"name": str, "workloads": list, "dr_price": dict},
    )

    tg = _take(_require_mapping(top["time_grid"], f"{where}.time_grid"),
               f"{where}.time_grid",
               required={"slots": int}, optional={"slot_hours": float})
    grid = TimeGrid(n_slots=tg["slots"], slot_hours=tg.get("slot_hours", 0.25))

    idcs = []
    for k, node in enumerate(top["idcs"]):
        w = f"{where}.idcs[{k}]"
        fields = _take(
            _require_mapping(node, w), w,
            required={
                "name": str, "pue": _slot_list, "nominal_power": _slot_list,
                "ess": dict, "it_interactive": _slot_list,
                "dg_output": _slot_list, "elec_price": _slot_list,
            },
        )
        ess = _take(_require_mapping(fields["ess"], f"{w}.ess"), f"{w}.ess",
                    required={"energy_max": float, "energy_initial": float,
                              "power_max": float})
        try:
            idcs.append(IdcParams(
                name=fields["name"],
                pue=_expand(fields["pue"], grid.n_slots, f"{w}.pue"),
                nominal_power=_expand(fields["nominal_power"], grid.n_slots, f"{w}.nominal_power"),
                ess=EssParams(**ess),
                it_interactive=_expand(fields["it_interactive"], grid.n_slots, f"{w}.it_interactive"),
                dg_output=_expand(fields["dg_output"], grid.n_slots, f"{w}.dg_output"),
                elec_price=_expand(fields["elec_price"], grid.n_slots, f"{w}.elec_price"),
            ))
        except ModelInputError as exc:
            raise CaseFileError(f"{w}: {exc}") from exc

    workloads = []
    for k, node in enumerate(top.get("workloads", [])):
        w = f"{where}.workloads[{k}]"
        fields = _take(
            _require_mapping(node, w), w,
            required={"name": str, "host": str, "it_power": _slot_list,
                      "termination_price": float},
        )
        try:
            workloads.append(FlexibleWorkload(
                name=fields["name"], host=fields["host"],
                it_power=_expand(fields["it_power"], grid.n_slots, f"{w}.it_power"),
                termination_price=fields["termination_price"],
            ))
        except ModelInputError as exc:
            raise CaseFileError(f"{w}: {exc}") from exc

    unc_node = _require_mapping(top["uncertainty"], f"{where}.uncertainty")
    unknown = set(unc_node) - set(QUANTITIES)
    if unknown:
        raise CaseFileError(f"{where}.uncertainty: unknown key(s) {sorted(unknown)}")
    bands = {}
    nominal_of = {
        "price": np.vstack([i.elec_price for i in idcs]),
        "dg_output": np.vstack([i.dg_output for i in idcs]),
        "it_power": np.vstack([i.it_interactive for i in idcs]),
    }
    for q in QUANTITIES:
        w = f"{where}.uncertainty.{q}"
        if q not in unc_node:
            raise CaseFileError(f"{w}: missing")
        fields = _take(_require_mapping(unc_node[q], w), w,
                       required={"sigma0": float, "growth": float,
                                 "box_halfwidth": float})
        bands[q] = QuantityBand.from_scalars(
            nominal_of[q], fields["sigma0"], fields["growth"], fields["box_halfwidth"]
        )

    dr = {"low": 0.0, "high": 0.5}
    if "dr_price" in top:
        dr.update(_take(_require_mapping(top["dr_price"], f"{where}.dr_price"),
                        f"{where}.dr_price",
                        required={}, optional={"low": float, "high": float}))

    try:
        return IdcCase(
            grid=grid, idcs=tuple(idcs), workloads=tuple(workloads),
            uncertainty=UncertaintyModel(**bands),
            dr_price_low=dr["low"], dr_price_high=dr["high"],
        )
    except (ModelInputError, ValueError) as exc:
        raise CaseFileError(f"{where}: {exc}") from exc


def _expand(values: list[float], T: int, where: str) -> np.ndarray:
    if len(values) == 1:
        return np.full(T, values[0])
    if len(values) != T:
        raise CaseFileError(f"{where}: expected 1 or {T} values, got {len(values)}")
    return np.asarray(values)


def case_digest(case: IdcCase) -> str:
    """Stable content hash of a problem instance."""

    def arr(a):
        return np.asarray(a).tolist()

    doc = {
        "grid": [case.grid.n_slots, case.grid.slot_hours],
        "idcs": [
            {
                "name": i.name, "pue": arr(i.pue), "nominal": arr(i.nominal_power),
                "ess": [i.ess.energy_max, i.ess.energy_initial, i.ess.power_max],
                "it": arr(i.it_interactive), "dg": arr(i.dg_output),
                "price": arr(i.elec_price),
            }
            for i in case.idcs
        ],
        "workloads": [
            {"name": w.name, "host": w.host, "power": arr(w.it_power),
             "price": w.termination_price}
            for w in case.workloads
        ],
        "uncertainty": {
            q: {
                "nominal": arr(case.uncertainty.band(q).nominal),
                "sigma0": arr(case.uncertainty.band(q).sigma0),
                "growth": arr(case.uncertainty.band(q).growth),
                "lower": arr(case.uncertainty.band(q).lower),
                "upper": arr(case.uncertainty.band(q).upper),
            }
            for q in QUANTITIES
        },
        "dr_price": [case.dr_price_low, case.dr_price_high],
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def reference_case_path() -> Path:
    """Path of the bundled two-IDC, four-slot reference case."""
    return Path(resources.files("drcurve.cases") / "reference.yaml")
