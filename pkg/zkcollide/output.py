"""CSV and JSON writers that stamp every file with the code version and config hash."""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from zkcollide.config import ExperimentConfig

logger = logging.getLogger(__name__)


def _cell(value: Any) -> str:
    if isinstance(value, float | np.floating):
        return repr(float(value))
    return str(value)


def write_csv(
    path: Path | str,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    cfg: ExperimentConfig,
) -> Path:
    """Comment lines with the provenance, then the column header and the rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", newline="") as handle:
        for line in cfg.provenance():
            handle.write(f"# {line}\n")
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                msg = f"row of length {len(row)} under a header of {len(header)} columns"
                raise ValueError(msg)
            writer.writerow([_cell(v) for v in row])
            count += 1
    logger.info(f"wrote {count} rows to {path}")
    return path


def read_csv(path: Path | str) -> tuple[list[str], list[list[float]]]:
    """Header and numeric rows of a file written by ``write_csv``."""
    lines = [line for line in Path(path).read_text().splitlines() if not line.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [[float(v) for v in row] for row in reader]


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.floating | float):
        number = float(value)
        return number if math.isfinite(number) else str(number)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path: Path | str, payload: dict[str, Any], cfg: ExperimentConfig) -> Path:
    """``payload`` with a ``provenance`` block: version, config hash and resolved config."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        "provenance": {"lines": cfg.provenance(), "config_hash": cfg.config_hash},
        **_jsonable(payload),
    }
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")
    logger.info(f"wrote {path}")
    return path
