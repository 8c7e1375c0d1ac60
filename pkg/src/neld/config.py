"""Run configuration management.

Config files are TOML with flat dotted keys (``flow.kind = "shear"``,
``sim.gamma = 1.0``). They are validated into a RunConfig; the resolved
configuration is persisted next to the results as config.json.
"""

from __future__ import annotations

import json
import tomllib
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from .exceptions import ConfigInvalidError, ConfigNotFoundError, CutoffViolationError
from .schemas import RunConfig

CONFIG_FILENAME = "config.json"


def _error_key(error: dict[str, Any]) -> str:
    return ".".join(str(part) for part in error["loc"]) or "<root>"


def validate_config(data: dict[str, Any]) -> RunConfig:
    """Validate a parsed mapping into a RunConfig.

    Raises:
        ConfigInvalidError: Naming the first offending dotted key.
    """
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = _error_key(first)
        raise ConfigInvalidError(key, first["msg"]) from exc
    try:
        config.simulation()
    except CutoffViolationError as exc:
        raise ConfigInvalidError("potential.pair.range", str(exc)) from exc
    return config


def load_config(path: Path) -> RunConfig:
    """Load and validate a TOML run config.

    Returns:
        The validated RunConfig.

    Raises:
        ConfigNotFoundError: If the file does not exist.
        ConfigInvalidError: If the file is not valid TOML or a key fails validation.
    """
    if not path.exists():
        raise ConfigNotFoundError(f"File not found: {path}")
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except (tomllib.TOMLDecodeError, OSError) as exc:
        raise ConfigInvalidError("<file>", f"failed to parse {path}: {exc}") from exc
    return validate_config(data)


def apply_overrides(
    config: RunConfig,
    *,
    seed: int | None = None,
    threads: int | None = None,
    output_dir: Path | None = None,
) -> RunConfig:
    """Apply CLI overrides, revalidating the touched sections."""
    sim = config.sim
    run = config.run
    if seed is not None:
        sim = validate_config({"sim": {**sim.model_dump(), "seed": seed}}).sim
    run_update: dict[str, Any] = {}
    if threads is not None:
        run_update["threads"] = threads
    if output_dir is not None:
        run_update["output_dir"] = output_dir
    if run_update:
        run = validate_config({"run": {**run.model_dump(), **run_update}}).run
    return config.model_copy(update={"sim": sim, "run": run})


def save_config(config: RunConfig, directory: Path) -> Path:
    """Persist the resolved configuration to <directory>/config.json."""
    from .results import atomic_write_text

    payload = json.dumps(config.model_dump(mode="json"), indent=2, ensure_ascii=False) + "\n"
    path = directory / CONFIG_FILENAME
    atomic_write_text(path, payload)
    return path


def read_saved_config(directory: Path) -> RunConfig | None:
    """Load config.json from a results directory, or None if absent."""
    path = directory / CONFIG_FILENAME
    if not path.exists():
        return None
    data = json.loads(path.read_text(encoding="utf-8"))
    return RunConfig.model_validate(data)
