from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Mapping, Tuple

from geomv.domain.entities.feature import Method
from geomv.domain.entities.raster import Variable
from geomv.domain.entities.regression import RegressionSpec
from geomv.domain.registry import family_of

OUTCOMES: Tuple[str, ...] = ("yield", "harvest_value")

# Normal critical value of every 95% interval reported
Z_95 = 1.96


@dataclass(frozen=True)
class Product:
    name: str
    variable: Variable

    @property
    def family(self) -> str:
        return family_of(self.variable)


@dataclass(frozen=True)
class DesignLattice:
    countries: Tuple[str, ...]
    products: Tuple[Product, ...]
    methods: Tuple[Method, ...]
    rainfall_metrics: Tuple[str, ...]
    temperature_metrics: Tuple[str, ...]
    outcomes: Tuple[str, ...]
    specs: Tuple[RegressionSpec, ...]

    def metrics_for(self, product: Product) -> Tuple[str, ...]:
        return self.rainfall_metrics if product.family == "rainfall" else self.temperature_metrics


def task_id_for(axes: Tuple[str, ...]) -> str:
    return hashlib.sha1("|".join(axes).encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class RegressionTask:
    country: str
    product: str
    family: str
    method: Method
    metric: str
    outcome: str
    spec: RegressionSpec
    task_id: str = ""

    def __post_init__(self):
        if not self.task_id:
            object.__setattr__(self, "task_id", task_id_for(self.axes))

    @property
    def axes(self) -> Tuple[str, ...]:
        return (self.country, self.product, self.method.value, self.metric, self.outcome, self.spec.name)

    @property
    def dataset_key(self) -> Tuple[str, str, Method]:
        return (self.country, self.product, self.method)


@dataclass(frozen=True)
class BlindingKey:
    methods: Mapping[Method, str]
    products: Mapping[str, str]

    def __post_init__(self):
        for name, mapping in (("method", self.methods), ("product", self.products)):
            codes = list(mapping.values())
            if len(set(codes)) != len(codes):
                raise ValueError(f"{name} codes are not a bijection")

    def reveal_method(self) -> Dict[str, Method]:
        return {code: m for m, code in self.methods.items()}

    def reveal_product(self) -> Dict[str, str]:
        return {code: p for p, code in self.products.items()}


class Statistic(str, Enum):
    MEAN_LOGLIK = "mean_loglik"
    SHARE_SIGNIFICANT = "share_significant"
    COEFFICIENT = "coefficient"


class Verdict(str, Enum):
    NOT_DIFFERENT = "not_different"
    WEAK = "weak"
    STRONG = "strong"


@dataclass(frozen=True)
class Estimate:
    """A point value with its 95% confidence interval."""

    value: float
    lo: float
    hi: float
    n: int = 0
    flags: FrozenSet[str] = field(default_factory=frozenset)

    @property
    def has_interval(self) -> bool:
        return not (math.isnan(self.lo) or math.isnan(self.hi))

    def covers(self, x: float) -> bool:
        return self.lo <= x <= self.hi


@dataclass(frozen=True)
class HeuristicVerdict:
    cell_a: str
    cell_b: str
    statistic: Statistic
    verdict: Verdict
