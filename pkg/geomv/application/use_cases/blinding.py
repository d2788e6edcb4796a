"""Coded labels for methods and products, applied to and removed from exported tables."""

from __future__ import annotations

import json
import os
import re
from pathlib import Path
from typing import Dict, Iterable, Mapping, Sequence, Union

import numpy as np
import pandas as pd

from geomv.domain.entities.feature import Method
from geomv.domain.entities.lattice import BlindingKey
from geomv.domain.errors import ConfigError, FormatError

KEY_FILE = "blinding_key.json"


def make_key(
    methods: Sequence[Method],
    rainfall_products: Sequence[str],
    temperature_products: Sequence[str],
    seed: int,
) -> BlindingKey:
    """Seeded shuffle of methods onto x0.., rainfall products onto rf1.., temperature onto tp1.."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB1D]))
    methods = [Method(m) for m in methods]
    method_codes = {methods[i]: f"x{n}" for n, i in enumerate(rng.permutation(len(methods)))}
    products: Dict[str, str] = {}
    for prefix, names in (("rf", list(rainfall_products)), ("tp", list(temperature_products))):
        for n, i in enumerate(rng.permutation(len(names)), start=1):
            products[names[i]] = f"{prefix}{n}"
    if set(products) & {m.value for m in methods}:
        raise ConfigError("product names must differ from method names")
    return BlindingKey(method_codes, products)


def _pattern(tokens: Iterable[str]) -> re.Pattern:
    ordered = sorted(set(tokens), key=len, reverse=True)
    return re.compile(r"(?<![A-Za-z0-9_])(" + "|".join(re.escape(t) for t in ordered) + r")(?![A-Za-z0-9_])")


def _forward(key: BlindingKey) -> Dict[str, str]:
    mapping = {m.value: code for m, code in key.methods.items()}
    mapping.update(key.products)
    return mapping


def _substitute(frame: pd.DataFrame, mapping: Mapping[str, str]) -> pd.DataFrame:
    if not mapping:
        return frame.copy()
    pattern = _pattern(mapping)

    def swap(text):
        if not isinstance(text, str):
            return text
        return pattern.sub(lambda m: mapping[m.group(1)], text)

    out = frame.copy()
    for column in out.columns:
        if out[column].dtype == object or pd.api.types.is_string_dtype(out[column].dtype):
            out[column] = out[column].map(swap)
    out.columns = [swap(c) if isinstance(c, str) else c for c in out.columns]
    return out


def blind(frame: pd.DataFrame, key: BlindingKey) -> pd.DataFrame:
    """Replace every method and product name in string cells and headers by its code."""
    return _substitute(frame, _forward(key))


def unblind(frame: pd.DataFrame, key: BlindingKey) -> pd.DataFrame:
    return _substitute(frame, {code: name for name, code in _forward(key).items()})


def blind_name(name: str, key: BlindingKey) -> str:
    mapping = _forward(key)
    return _pattern(mapping).sub(lambda m: mapping[m.group(1)], name)


def unblind_name(name: str, key: BlindingKey) -> str:
    mapping = {code: label for label, code in _forward(key).items()}
    return _pattern(mapping).sub(lambda m: mapping[m.group(1)], name)


def save_key(key: BlindingKey, directory: Union[str, Path]) -> Path:
    """Write the key readable by its owner only."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / KEY_FILE
    payload = {
        "methods": {m.value: code for m, code in key.methods.items()},
        "products": dict(key.products),
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    os.chmod(path, 0o600)
    return path


def load_key(path: Union[str, Path]) -> BlindingKey:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return BlindingKey({Method(m): c for m, c in payload["methods"].items()}, dict(payload["products"]))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: unreadable blinding key ({exc})") from None
