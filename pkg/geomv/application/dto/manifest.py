"""Run manifest and synthetic-fixture configuration, validated with pydantic."""

from __future__ import annotations

import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from datetime import date
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from geomv.config import settings
from geomv.domain.entities.feature import MaskParams, Method
from geomv.domain.entities.lattice import OUTCOMES, DesignLattice, Product
from geomv.domain.entities.raster import Variable
from geomv.domain.entities.regression import ALL_SPECS, RegressionSpec
from geomv.domain.entities.season import CALENDARS, GddBounds
from geomv.domain.errors import ManifestError
from geomv.domain.registry import RAINFALL, TEMPERATURE, metric_names


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MaskSettings(_Section):
    urban_max_km: float = Field(2.0, ge=0)
    rural_max_km: float = Field(5.0, ge=0)
    rural_extra_max_km: float = Field(10.0, ge=0)
    rural_extra_share: float = Field(0.01, ge=0, le=1)
    constrain_to_admin: bool = False

    @model_validator(mode="after")
    def _ordered(self):
        if not self.urban_max_km <= self.rural_max_km <= self.rural_extra_max_km:
            raise ValueError("mask maxima must satisfy urban <= rural <= rural_extra")
        return self

    def params(self, seed: int) -> MaskParams:
        return MaskParams(
            urban_max_km=self.urban_max_km,
            rural_max_km=self.rural_max_km,
            rural_extra_max_km=self.rural_extra_max_km,
            rural_extra_share=self.rural_extra_share,
            seed=seed,
            constrain_to_admin=self.constrain_to_admin,
        )


class GddSettings(_Section):
    base_c: float = 10.0
    cap_c: float = 30.0

    @model_validator(mode="after")
    def _ordered(self):
        if self.base_c > self.cap_c:
            raise ValueError("gdd base_c must not exceed cap_c")
        return self

    def bounds(self) -> GddBounds:
        return GddBounds(self.base_c, self.cap_c)


class ExtractionSettings(_Section):
    point_interpolation: Literal["bilinear", "idw"] = "bilinear"
    series_format: Literal["binary", "csv", "both"] = "binary"


class ProductEntry(_Section):
    variable: Variable
    stack: Path
    max_stack: Optional[Path] = None


class CountryEntry(_Section):
    calendar: Optional[str] = None
    households: Path
    polygons: Path
    outcomes: Optional[Path] = None
    waves: List[str] = Field(default_factory=list)


class LatticeAxes(_Section):
    methods: List[Method] = Field(default_factory=lambda: list(Method))
    rainfall_metrics: List[str] = Field(default_factory=lambda: list(metric_names(RAINFALL)))
    temperature_metrics: List[str] = Field(default_factory=lambda: list(metric_names(TEMPERATURE)))
    outcomes: List[str] = Field(default_factory=lambda: list(OUTCOMES))
    specs: List[str] = Field(default_factory=lambda: [s.name for s in ALL_SPECS])

    @field_validator("specs")
    @classmethod
    def _known_specs(cls, value):
        known = {s.name for s in ALL_SPECS}
        unknown = [name for name in value if name not in known]
        if unknown:
            raise ValueError(f"unknown specs {unknown}; expected among {sorted(known)}")
        return value


class SynthProduct(_Section):
    name: str
    variable: Variable
    cell_size: float = Field(gt=0)


def _default_synth_products() -> List[SynthProduct]:
    return [
        SynthProduct(name="rain_p05", variable=Variable.PRECIPITATION_MM, cell_size=0.05),
        SynthProduct(name="rain_p25", variable=Variable.PRECIPITATION_MM, cell_size=0.25),
        SynthProduct(name="rain_p50", variable=Variable.PRECIPITATION_MM, cell_size=0.5),
        SynthProduct(name="temp_p05", variable=Variable.TEMPERATURE_C, cell_size=0.05),
        SynthProduct(name="temp_p50", variable=Variable.TEMPERATURE_C, cell_size=0.5),
    ]


class SynthConfig(_Section):
    seed: int = 0
    countries: List[str] = Field(default_factory=lambda: ["ethiopia", "niger"])
    first_year: int = 2000
    n_years: int = Field(6, ge=1)
    x_ll: float = 36.0
    y_ll: float = 8.0
    strip_width_deg: float = Field(1.0, gt=0)
    height_deg: float = Field(1.0, gt=0)
    products: List[SynthProduct] = Field(default_factory=_default_synth_products)
    # written as directories of daily ASCII grids instead of .wxstack
    ascii_products: List[str] = Field(default_factory=list)

    n_eas: int = Field(20, ge=1)
    households_per_ea: int = Field(5, ge=1)
    admin_rows: int = Field(2, ge=1)
    admin_cols: int = Field(2, ge=1)
    urban_share: float = Field(0.3, ge=0, le=1)
    ea_spread_km: float = Field(1.0, ge=0)
    edge_buffer_km: float = Field(12.0, ge=0)

    # weather field
    rain_mean_mm: float = Field(3.0, ge=0)
    temp_mean_c: float = 22.0
    seasonal_amplitude: float = Field(0.6, ge=0)
    spatial_amplitude: float = Field(2.0, ge=0)
    correlation_km: float = Field(40.0, gt=0)
    n_basis: int = Field(6, ge=0)
    ar1: float = Field(0.7, gt=-1, lt=1)
    weather_noise_sd: float = Field(0.5, ge=0)

    # outcome DGP: asinh(y) = intercept + alpha_h + gamma_t + beta1 w + beta2 w^2 + eps
    truth_product: Optional[str] = None
    truth_metric: str = "mean_daily_mm"
    intercept: float = 6.0
    value_shift: float = 1.0
    beta1: float = 0.1
    beta2: float = 0.0
    household_sd: float = Field(0.3, ge=0)
    year_sd: float = Field(0.1, ge=0)
    noise_sd: float = Field(0.2, ge=0)

    @field_validator("countries")
    @classmethod
    def _known_countries(cls, value):
        unknown = [c for c in value if c not in CALENDARS]
        if unknown or not value:
            raise ValueError(f"countries must be non-empty and among {sorted(CALENDARS)}; got {unknown}")
        return value

    @field_validator("truth_metric")
    @classmethod
    def _known_metric(cls, value):
        if value not in metric_names():
            raise ValueError(f"unknown metric {value!r}")
        return value

    @property
    def last_year(self) -> int:
        return self.first_year + self.n_years - 1

    @property
    def finest(self) -> float:
        return min(p.cell_size for p in self.products)

    def truth(self) -> SynthProduct:
        """Finest product of the truth metric's variable, unless one is named."""
        if self.truth_product is not None:
            return next(p for p in self.products if p.name == self.truth_product)
        variable = Variable.PRECIPITATION_MM if self.truth_metric in metric_names(RAINFALL) else Variable.TEMPERATURE_C
        candidates = [p for p in self.products if p.variable is variable]
        return min(candidates, key=lambda p: p.cell_size)

    @model_validator(mode="after")
    def _consistent(self):
        if not self.products:
            raise ValueError("synth needs at least one product")
        names = [p.name for p in self.products]
        if len(set(names)) != len(names):
            raise ValueError("synth product names must be unique")
        if set(self.ascii_products) - set(names):
            raise ValueError(f"ascii_products {sorted(set(self.ascii_products) - set(names))} are not synth products")
        if self.truth_product is not None and self.truth_product not in names:
            raise ValueError(f"truth_product {self.truth_product!r} is not a synth product")
        variable = Variable.PRECIPITATION_MM if self.truth_metric in metric_names(RAINFALL) else Variable.TEMPERATURE_C
        if not any(p.variable is variable for p in self.products):
            raise ValueError(f"no synth product carries {variable.value} for truth_metric")
        return self


class RunManifest(_Section):
    seed: int = 0
    parallelism: int = Field(1, ge=1)
    output_root: Path = Path("out")
    blinding: bool = False
    alpha_levels: List[float] = Field(default_factory=lambda: [0.10, 0.05, 0.01])
    ci_method: Literal["wald", "wilson"] = "wald"
    record_start: Optional[date] = None
    record_end: Optional[date] = None
    mask: MaskSettings = Field(default_factory=MaskSettings)
    gdd: GddSettings = Field(default_factory=GddSettings)
    extraction: ExtractionSettings = Field(default_factory=ExtractionSettings)
    products: Dict[str, ProductEntry] = Field(default_factory=dict)
    countries: Dict[str, CountryEntry] = Field(default_factory=dict)
    lattice: LatticeAxes = Field(default_factory=LatticeAxes)
    synth: Optional[SynthConfig] = None

    @field_validator("alpha_levels")
    @classmethod
    def _alphas(cls, value):
        if not value or any(not 0 < a < 1 for a in value):
            raise ValueError("alpha_levels must be a non-empty list within (0, 1)")
        return sorted(set(value), reverse=True)

    @model_validator(mode="after")
    def _calendars(self):
        for name, entry in self.countries.items():
            calendar = entry.calendar or name
            if calendar not in CALENDARS:
                raise ValueError(f"country {name!r}: unknown calendar {calendar!r}")
        if self.record_start and self.record_end and self.record_start > self.record_end:
            raise ValueError("record_start is after record_end")
        return self

    def calendar_of(self, country: str):
        return CALENDARS[self.countries[country].calendar or country]

    def waves_of(self, country: str) -> List[str]:
        return self.countries[country].waves or [country]

    def product_list(self) -> List[Product]:
        return [Product(name, entry.variable) for name, entry in self.products.items()]

    def design_lattice(self) -> DesignLattice:
        return DesignLattice(
            countries=tuple(self.countries),
            products=tuple(self.product_list()),
            methods=tuple(self.lattice.methods),
            rainfall_metrics=tuple(self.lattice.rainfall_metrics),
            temperature_metrics=tuple(self.lattice.temperature_metrics),
            outcomes=tuple(self.lattice.outcomes),
            specs=tuple(RegressionSpec.parse(s) for s in self.lattice.specs),
        )

    def digest(self) -> str:
        """Content hash of everything that determines outputs (parallelism excluded)."""
        payload = self.model_dump(mode="json", exclude={"parallelism", "output_root"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _resolve(value, base: Path):
    return value if value is None or Path(value).is_absolute() else str(base / value)


def _resolve_paths(raw: dict, base: Path) -> dict:
    raw = dict(raw)
    if "output_root" in raw:
        raw["output_root"] = _resolve(raw["output_root"], base)
    for section, keys in (("products", ("stack", "max_stack")), ("countries", ("households", "polygons", "outcomes"))):
        entries = {}
        for name, entry in dict(raw.get(section, {})).items():
            entry = dict(entry)
            for key in keys:
                if key in entry:
                    entry[key] = _resolve(entry[key], base)
            entries[name] = entry
        if section in raw:
            raw[section] = entries
    return raw


def _problems(exc: ValidationError) -> List[str]:
    return [f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors()]


def parse_manifest(raw: dict, base: Union[str, Path] = ".") -> RunManifest:
    try:
        return RunManifest.model_validate(_resolve_paths(raw, Path(base)))
    except ValidationError as exc:
        raise ManifestError("invalid manifest", _problems(exc)) from None


def load_manifest(path: Union[str, Path], parallelism: Optional[int] = None, seed: Optional[int] = None) -> RunManifest:
    """Read a TOML manifest; relative paths resolve against its directory. CLI overrides win."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ManifestError(f"manifest {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid TOML", [str(exc)]) from None
    if parallelism is not None:
        raw["parallelism"] = parallelism
    if seed is not None:
        raw["seed"] = seed
    raw.setdefault("parallelism", settings.DEFAULT_PARALLELISM)
    return parse_manifest(raw, path.parent.resolve())
