"""Fixed registry of the 22 seasonal weather metrics (shipped as resources/metric_registry.json)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Dict, Tuple

from geomv.domain.entities.raster import Variable


@dataclass(frozen=True)
class MetricSpec:
    name: str
    family: str
    field: str
    units: str
    description: str

    @property
    def variable(self) -> Variable:
        return Variable.PRECIPITATION_MM if self.family == "rainfall" else Variable.TEMPERATURE_C


@lru_cache(maxsize=1)
def load_registry() -> Tuple[MetricSpec, ...]:
    raw = json.loads(resources.files("geomv.resources").joinpath("metric_registry.json").read_text("utf-8"))
    return tuple(MetricSpec(**entry) for entry in raw["metrics"])


def metric_names(family: str | None = None) -> Tuple[str, ...]:
    return tuple(m.name for m in load_registry() if family is None or m.family == family)


def by_name() -> Dict[str, MetricSpec]:
    return {m.name: m for m in load_registry()}


RAINFALL = "rainfall"
TEMPERATURE = "temperature"


def family_of(variable: Variable) -> str:
    return RAINFALL if Variable(variable) is Variable.PRECIPITATION_MM else TEMPERATURE
