from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

from geomv.domain.errors import ValidationError


class Form(str, Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"


@dataclass(frozen=True)
class RegressionSpec:
    form: Form
    fixed_effects: bool

    @property
    def name(self) -> str:
        return f"{self.form.value}_fe" if self.fixed_effects else self.form.value

    @classmethod
    def parse(cls, name: str) -> "RegressionSpec":
        for spec in ALL_SPECS:
            if spec.name == name:
                return spec
        raise ValidationError(f"unknown regression spec {name!r}; expected one of {[s.name for s in ALL_SPECS]}")


ALL_SPECS: Tuple[RegressionSpec, ...] = (
    RegressionSpec(Form.LINEAR, False),
    RegressionSpec(Form.LINEAR, True),
    RegressionSpec(Form.QUADRATIC, False),
    RegressionSpec(Form.QUADRATIC, True),
)


@dataclass(frozen=True)
class PanelObservation:
    household_id: str
    year: int
    outcome_raw: float
    weather: float


@dataclass(frozen=True)
class RegressionResult:
    beta1: float
    se1: float
    p1: float
    loglik: float
    n_obs: int
    n_clusters: int
    dof_used: int
    beta2: Optional[float] = None
    se2: Optional[float] = None
    p2: Optional[float] = None
    n_dropped: int = 0

    @property
    def t_dof(self) -> int:
        return self.n_clusters - 1
