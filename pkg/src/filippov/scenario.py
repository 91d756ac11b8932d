"""Scenario files: JSON descriptions of systems plus diagnostic budgets.

Schema documented in docs/scenario_schema.md; shipped scenarios live in the
package's ``scenarios/`` directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .diagnostics import DiagnosticsConfig
from .errors import ConfigurationError, ExpressionError
from .expr import PlanarField, ScalarField
from .integrate import IntegratorOptions
from .system import Domain, FilippovSystem, RegionSpec, SwitchingCurve

SCHEMA = "filippov.scenario/1"


@dataclass
class Scenario:
    name: str
    domain: Domain
    parameters: dict
    curve_defs: list
    region_defs: list
    config: DiagnosticsConfig
    integrator: IntegratorOptions = field(default_factory=IntegratorOptions)
    source_path: str | None = None
    _system: FilippovSystem | None = None

    def build_system(self, validate=True) -> FilippovSystem:
        if self._system is not None:
            return self._system
        curves = []
        for cd in self.curve_defs:
            h = ScalarField(cd["h"], parameters=self.parameters)
            curves.append(SwitchingCurve(cd["id"], h, cd["positive_region"], cd["negative_region"]))
        regions = []
        for rd in self.region_defs:
            fx, fy = rd["field"]
            planar = PlanarField(
                ScalarField(fx, parameters=self.parameters),
                ScalarField(fy, parameters=self.parameters),
            )
            conditions = [(c["curve"], +1 if c["sign"] in ("+", 1, "+1") else -1)
                          for c in rd["where"]]
            regions.append(RegionSpec(rd["id"], planar, conditions))
        self._system = FilippovSystem(
            self.domain, curves, regions, self.parameters, validate=validate
        )
        return self._system


def _require(data, key, path, kind=None):
    if key not in data:
        raise ConfigurationError(f"{path}: missing required field {key!r}")
    value = data[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigurationError(f"{path}.{key}: expected {kind.__name__}")
    return value


def load_scenario(path) -> Scenario:
    """Load and validate a scenario file; failures report their field path."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"scenario file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from None
    return scenario_from_dict(data, source=str(path))


def scenario_from_dict(data, source=None) -> Scenario:
    if data.get("schema", SCHEMA) != SCHEMA:
        raise ConfigurationError(f"schema: unsupported value {data.get('schema')!r}")
    name = data.get("name", "unnamed")
    dom = _require(data, "domain", "scenario", dict)
    kind = _require(dom, "kind", "domain", str)
    bounds = _require(dom, "bounds", "domain", list)
    if len(bounds) != 4:
        raise ConfigurationError("domain.bounds: expected [x_min, x_max, y_min, y_max]")
    domain = Domain(kind, *[float(b) for b in bounds])
    parameters = {str(k): float(v) for k, v in data.get("parameters", {}).items()}
    curve_defs = []
    for i, cd in enumerate(_require(data, "curves", "scenario", list)):
        curve_defs.append({
            "id": int(_require(cd, "id", f"curves[{i}]")),
            "h": str(_require(cd, "h", f"curves[{i}]")),
            "positive_region": int(_require(cd, "positive_region", f"curves[{i}]")),
            "negative_region": int(_require(cd, "negative_region", f"curves[{i}]")),
        })
    region_defs = []
    for i, rd in enumerate(_require(data, "regions", "scenario", list)):
        fd = _require(rd, "field", f"regions[{i}]", list)
        if len(fd) != 2:
            raise ConfigurationError(f"regions[{i}].field: expected [fx, fy]")
        region_defs.append({
            "id": int(_require(rd, "id", f"regions[{i}]")),
            "field": [str(fd[0]), str(fd[1])],
            "where": [
                {"curve": int(c["curve"]), "sign": c["sign"]}
                for c in _require(rd, "where", f"regions[{i}]", list)
            ],
        })
    config = DiagnosticsConfig.from_dict(data.get("config", {}))
    integ = data.get("integrator", {})
    options = IntegratorOptions(
        rtol=float(integ.get("rtol", 1e-10)),
        atol=float(integ.get("atol", 1e-12)),
        max_step=integ.get("max_step"),
        sample_spacing=integ.get("sample_spacing"),
    )
    scenario = Scenario(
        name=name, domain=domain, parameters=parameters,
        curve_defs=curve_defs, region_defs=region_defs,
        config=config, integrator=options, source_path=source,
    )
    try:
        scenario.build_system()
    except ExpressionError as exc:
        raise ConfigurationError(f"expression error: {exc}") from exc
    return scenario


def shipped_path(name: str) -> Path:
    """Path of a scenario shipped inside the package."""
    if not name.endswith(".json"):
        name = name + ".json"
    ref = resources.files("filippov").joinpath("scenarios", name)
    with resources.as_file(ref) as concrete:
        return Path(concrete)


def load_shipped(name: str) -> Scenario:
    return load_scenario(shipped_path(name))


def list_shipped():
    base = resources.files("filippov").joinpath("scenarios")
    return sorted(p.name for p in base.iterdir() if p.name.endswith(".json"))
