"""
Result files: atomic CSV/JSON writers and connection snapshots.

Every output is written to a temporary file in the target directory and moved
into place, so a crashed run never leaves a half-written file behind. Doubles
are printed with 17 significant digits, which round-trips IEEE-754 exactly.
"""

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd

from config.settings import RESULTS_DIR
from src.core.gaugefield import Connection, FlatBase
from src.exceptions import ExperimentConfigError, GridError
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"
SNAPSHOT_KEYS = ("N", "alpha", "beta", "a_x", "a_y")


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write text to path via a temporary sibling and os.replace"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp_name, path)
    except Exception:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug(f"Wrote {path}")
    return path


def _json_default(value: Any):
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(data: Dict, path: PathLike) -> Path:
    text = json.dumps(data, indent=2, sort_keys=True, default=_json_default)
    return atomic_write_text(path, text + "\n")


def write_csv(table: pd.DataFrame, path: PathLike) -> Path:
    text = table.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return atomic_write_text(path, text)


def summary_path(csv_path: PathLike) -> Path:
    return Path(csv_path).with_suffix(".json")


def output_path(out: Union[str, Path, None], default_stem: str) -> Path:
    """Explicit output path, or RESULTS_DIR/<default_stem>.csv"""
    return Path(out) if out else RESULTS_DIR / f"{default_stem}.csv"


def write_results(table: pd.DataFrame, summary: Dict, csv_path: PathLike) -> Dict[str, Path]:
    """CSV plus its JSON summary alongside (same stem, .json)"""
    written = {"csv": write_csv(table, csv_path), "summary": write_json(summary, summary_path(csv_path))}
    logger.info(f"Results written to {written['csv']} ({len(table)} rows)")
    return written


# -- connection snapshots ------------------------------------------------------

def _format_rows(component: np.ndarray) -> str:
    rows = (", ".join(FLOAT_FORMAT % v for v in site) for site in component.reshape(-1, 3))
    return "[" + ", ".join(f"[{row}]" for row in rows) + "]"


def snapshot_to_text(A: Connection) -> str:
    """
    Snapshot JSON: {"N", "alpha", "beta", "a_x", "a_y"} with a_x, a_y lists of
    N^2 coordinate triples (I, J, K) in row-major site order.
    """
    return (
        "{\n"
        f'  "N": {A.N},\n'
        f'  "alpha": {FLOAT_FORMAT % A.base.alpha},\n'
        f'  "beta": {FLOAT_FORMAT % A.base.beta},\n'
        f'  "a_x": {_format_rows(A.a_x)},\n'
        f'  "a_y": {_format_rows(A.a_y)}\n'
        "}\n"
    )


def write_snapshot(A: Connection, path: PathLike) -> Path:
    return atomic_write_text(path, snapshot_to_text(A))


def snapshot_from_dict(data: Dict) -> Connection:
    """
    Rebuild a Connection from snapshot data.

    Raises:
        ExperimentConfigError: missing, unknown or malformed keys (the key is named)
    """
    if not isinstance(data, dict):
        raise ExperimentConfigError("Snapshot must be a JSON object")
    for key in data:
        if key not in SNAPSHOT_KEYS:
            raise ExperimentConfigError("unknown snapshot key", key=key)
    for key in SNAPSHOT_KEYS:
        if key not in data:
            raise ExperimentConfigError("missing snapshot key", key=key)

    N = data["N"]
    if not isinstance(N, int) or isinstance(N, bool):
        raise ExperimentConfigError(f"expected an integer grid size, got {N!r}", key="N")
    for key in ("alpha", "beta"):
        if not isinstance(data[key], (int, float)) or isinstance(data[key], bool):
            raise ExperimentConfigError(f"expected a number, got {data[key]!r}", key=key)

    components = []
    for key in ("a_x", "a_y"):
        try:
            values = np.asarray(data[key], dtype=float)
        except (TypeError, ValueError) as e:
            raise ExperimentConfigError(f"not a numeric array ({e})", key=key) from e
        if values.shape != (N * N, 3):
            raise ExperimentConfigError(f"expected {N * N} triples, got shape {values.shape}", key=key)
        components.append(values.reshape(N, N, 3))

    try:
        return Connection(FlatBase(float(data["alpha"]), float(data["beta"])), np.stack(components))
    except GridError as e:
        raise ExperimentConfigError(str(e), key="N") from e


def read_snapshot(path: PathLike) -> Connection:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ExperimentConfigError(f"snapshot file not found: {path}", key="snapshot") from e
    except json.JSONDecodeError as e:
        raise ExperimentConfigError(f"malformed snapshot JSON in {path}: {e}", key="snapshot") from e
    return snapshot_from_dict(data)
