# Copyright (C) 2023 - 2025 ANSYS, Inc. and/or its affiliates.
# SPDX-License-Identifier: MIT
#
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.

"""Versioned run configurations read from TOML or JSON documents."""

import copy
import hashlib
import json
from pathlib import Path
import tomllib
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from ._exceptions import ConfigError, ParametrixError
from ._grid import DEFAULT_THREADS
from ._logger import logger
from ._models import DiffusionSpec, builtin_model
from ._oracle import McConfig
from ._parametrix import QuadConfig
from ._perturbation import PerturbationPair
from ._proxy import MajorantParams

CONFIG_VERSION = 1
COMMANDS = ("check", "flow", "density", "diff", "bounds", "experiment")
SECTIONS = ("model", "pair", "quadrature", "mc") + COMMANDS
TOP_LEVEL_KEYS = ("config_version", "seed", "threads", "output") + SECTIONS
PAIR_KEYS = ("name", "params", "base", "perturbed", "eps", "delta", "alpha", "mu", "lambda")

PathLike = Union[str, Path]


def _section(mapping: Mapping[str, Any], key: str) -> Dict[str, Any]:
    value = mapping.get(key, {})
    if not isinstance(value, Mapping):
        raise ConfigError(f"Section '{key}' must be a table, got {type(value).__name__}.")
    return dict(value)


def _build_model(table: Mapping[str, Any], where: str) -> DiffusionSpec:
    try:
        if "name" in table:
            unknown = set(table) - {"name", "params"}
            if unknown:
                raise ConfigError(f"Unknown fields in '{where}': {', '.join(sorted(unknown))}.")
            model = builtin_model(str(table["name"]), table.get("params", {}))
            if isinstance(model, tuple):
                raise ConfigError(
                    f"'{where}' must describe a single model, '{table['name']}' is a pair."
                )
            return model
        return DiffusionSpec.from_mapping(table, name=where)
    except ConfigError:
        raise
    except ParametrixError as e:
        raise ConfigError(f"Invalid model in '{where}': {e}") from e


class RunConfig:
    """
    Run configuration of the command line.

    A document has a mandatory ``config_version = 1``, optional ``seed``, ``threads`` and
    ``output`` keys, and the tables ``model``, ``pair``, ``quadrature``, ``mc`` and one per
    command (``check``, ``flow``, ``density``, ``diff``, ``bounds``, ``experiment``). A run is a
    function of the merged mapping, whose SHA-256 is the configuration hash.

    Parameters
    ----------
    mapping : mapping
        Parsed document.

    Raises
    ------
    ConfigError
        If the version is missing or unsupported, or a key is unknown or malformed.

    Examples
    --------
    >>> config = RunConfig({"config_version": 1, "model": {"name": "heat", "params": {"d": 1}}})
    >>> config.model()
    <DiffusionSpec name: heat, d: 1>
    """

    def __init__(self, mapping: Mapping[str, Any]):
        if "config_version" not in mapping:
            raise ConfigError("Configuration is missing 'config_version'.")
        version = mapping["config_version"]
        if version != CONFIG_VERSION:
            raise ConfigError(
                f"Unsupported config_version {version!r}, expected {CONFIG_VERSION}."
            )
        unknown = set(mapping) - set(TOP_LEVEL_KEYS)
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(sorted(unknown))}.")
        for key in SECTIONS:
            _section(mapping, key)
        for key in ("seed", "threads"):
            value = mapping.get(key, 0)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"'{key}' must be an integer, got {value!r}.")
        if mapping.get("threads", DEFAULT_THREADS) < 1:
            raise ConfigError(f"'threads' must be positive, got {mapping['threads']}.")
        self._mapping = copy.deepcopy(dict(mapping))

    @classmethod
    def load(cls, path: PathLike) -> "RunConfig":
        """
        Read a configuration document.

        Files ending in ``.json`` are read as JSON, anything else as TOML.

        Raises
        ------
        ConfigError
            If the file cannot be read or parsed, or its content is invalid.
        """
        path = Path(path)
        logger.info(f"Reading run configuration from '{path}'")
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Cannot read configuration file '{path}': {e}") from e
        try:
            if path.suffix.lower() == ".json":
                document = json.loads(text)
            else:
                document = tomllib.loads(text)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"Cannot parse configuration file '{path}': {e}") from e
        if not isinstance(document, dict):
            raise ConfigError(f"Configuration file '{path}' must contain a table.")
        return cls(document)

    @classmethod
    def default(cls) -> "RunConfig":
        """Empty configuration of the current version."""
        return cls({"config_version": CONFIG_VERSION})

    def with_overrides(self, section: Optional[str] = None, **values: Any) -> "RunConfig":
        """
        Copy with values replaced. ``None`` values are ignored.

        With ``section`` the values go into that table, otherwise to the top level.
        """
        mapping = self.to_mapping()
        target = mapping if section is None else mapping.setdefault(section, {})
        for key, value in values.items():
            if value is not None:
                target[key] = value
        return RunConfig(mapping)

    def to_mapping(self) -> Dict[str, Any]:
        """Deep copy of the merged configuration."""
        return copy.deepcopy(self._mapping)

    def canonical_json(self) -> str:
        """Canonical serialization with sorted keys and no whitespace."""
        return json.dumps(
            self._mapping, sort_keys=True, separators=(",", ":"), ensure_ascii=True, default=str
        )

    def config_hash(self) -> str:
        """SHA-256 hex digest of :meth:`canonical_json`."""
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    @property
    def seed(self) -> int:
        return int(self._mapping.get("seed", 0))

    @property
    def threads(self) -> int:
        return int(self._mapping.get("threads", DEFAULT_THREADS))

    @property
    def output(self) -> Optional[str]:
        """Output path, or ``None`` for standard output."""
        value = self._mapping.get("output")
        return None if value is None else str(value)

    def command(self, name: str) -> Dict[str, Any]:
        """Parameters of a command."""
        if name not in COMMANDS:
            raise ConfigError(f"Unknown command '{name}'.")
        return _section(self._mapping, name)

    def has_model(self) -> bool:
        return bool(_section(self._mapping, "model"))

    def has_pair(self) -> bool:
        return bool(_section(self._mapping, "pair"))

    def model(self) -> DiffusionSpec:
        """
        Model of the ``model`` table.

        Raises
        ------
        ConfigError
            If the table is missing or describes an invalid model.
        """
        table = _section(self._mapping, "model")
        if not table:
            raise ConfigError("Configuration has no 'model' table.")
        return _build_model(table, "model")

    def pair_models(self) -> Tuple[DiffusionSpec, DiffusionSpec]:
        """Base and perturbed models of the ``pair`` table."""
        table = _section(self._mapping, "pair")
        if not table:
            raise ConfigError("Configuration has no 'pair' table.")
        unknown = set(table) - set(PAIR_KEYS)
        if unknown:
            raise ConfigError(f"Unknown fields in 'pair': {', '.join(sorted(unknown))}.")
        if "name" in table:
            try:
                models = builtin_model(str(table["name"]), _section(table, "params"))
            except ParametrixError as e:
                raise ConfigError(f"Invalid model in 'pair': {e}") from e
            if not isinstance(models, tuple):
                raise ConfigError(
                    f"'pair' must describe a pair, '{table['name']}' is a single model."
                )
            return models
        if "base" not in table or "perturbed" not in table:
            raise ConfigError("'pair' needs either 'name' or both 'base' and 'perturbed'.")
        return (
            _build_model(_section(table, "base"), "base"),
            _build_model(_section(table, "perturbed"), "perturbed"),
        )

    def pair(self, eps: Optional[float] = None) -> PerturbationPair:
        """
        Perturbation pair of the ``pair`` table.

        ``eps`` replaces ``pair.params.eps`` for built-in pairs.
        """
        table = _section(self._mapping, "pair")
        if eps is not None and "name" in table:
            params = _section(table, "params")
            params["eps"] = eps
            return self.with_overrides("pair", params=params).pair()
        base, perturbed = self.pair_models()
        label = table.get("eps", _section(table, "params").get("eps", 1.0))
        mu: Optional[List[Tuple[np.ndarray, float]]] = None
        if "mu" in table:
            try:
                mu = [
                    (np.asarray(atom["point"], dtype=float), float(atom["weight"]))
                    for atom in table["mu"]
                ]
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigError(
                    f"'pair.mu' must be a list of {{point, weight}} tables: {e}"
                ) from e
        try:
            majorant = MajorantParams(float(table["lambda"])) if "lambda" in table else None
            return PerturbationPair(
                base,
                perturbed,
                float(eps if eps is not None else label),
                delta=table.get("delta"),
                alpha=table.get("alpha"),
                mu=mu,
                majorant=majorant,
            )
        except ParametrixError as e:
            raise ConfigError(f"Invalid 'pair' table: {e}") from e

    def quad(self) -> QuadConfig:
        """Quadrature settings, seeded with the run seed unless the table sets its own."""
        table = _section(self._mapping, "quadrature")
        table.setdefault("seed", self.seed)
        try:
            return QuadConfig(**table)
        except (TypeError, ParametrixError) as e:
            raise ConfigError(f"Invalid 'quadrature' table: {e}") from e

    def mc(self) -> McConfig:
        """Monte-Carlo settings, seeded with the run seed unless the table sets its own."""
        table = _section(self._mapping, "mc")
        table.setdefault("seed", self.seed)
        try:
            return McConfig(**table)
        except (TypeError, ParametrixError) as e:
            raise ConfigError(f"Invalid 'mc' table: {e}") from e

    def __repr__(self) -> str:
        """Printable representation of the object."""
        return f"<{self.__class__.__name__} hash: {self.config_hash()[:12]}>"
