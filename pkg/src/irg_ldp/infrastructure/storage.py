from __future__ import annotations

import csv
import json
import math
from collections.abc import Mapping, Sequence
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

SCHEMA = "irg-ldp/1"
TIMESTAMP_KEY = "generated_at"
JSONDict = dict[str, Any]


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _sanitize(value: Any) -> Any:
    # JSON has no infinities; encode them as strings so output stays standard JSON.
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    if isinstance(value, Mapping):
        return {str(key): _sanitize(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(item) for item in value]
    return value


def dumps(payload: Mapping[str, Any]) -> str:
    return json.dumps(_sanitize(payload), sort_keys=True, default=_json_default)


def stamp(payload: Mapping[str, Any], timestamp: str | None = None) -> JSONDict:
    record = dict(payload)
    record["schema"] = SCHEMA
    record[TIMESTAMP_KEY] = timestamp or datetime.now(timezone.utc).isoformat()
    return record


def write_json(path: str | Path, payload: Mapping[str, Any]) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(dumps(payload) + "\n", encoding="utf-8")


def append_jsonl(path: str | Path, records: Sequence[Mapping[str, Any]]) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("a", encoding="utf-8") as handle:
        for record in records:
            handle.write(dumps(record) + "\n")


def write_edge_list(
    path: str | Path,
    n: int,
    seed_label: str,
    weights: npt.NDArray[np.float64],
    edges: npt.NDArray[np.int64],
) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8") as handle:
        handle.write(f"{n} {seed_label}\n")
        for weight in weights:
            handle.write(f"{float(weight)!r}\n")
        for u, v in edges:
            handle.write(f"{int(u)} {int(v)}\n")


def read_edge_list(
    path: str | Path,
) -> tuple[int, str, npt.NDArray[np.float64], npt.NDArray[np.int64]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path} is empty")

    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"{path}: header must be 'n seed'")
    n = int(header[0])
    weights = np.array([float(line) for line in lines[1 : n + 1]], dtype=np.float64)
    if weights.size != n:
        raise ValueError(f"{path}: expected {n} weight lines, found {weights.size}")

    edge_rows = [line.split() for line in lines[n + 1 :] if line.strip()]
    edges = np.array([[int(u), int(v)] for u, v in edge_rows], dtype=np.int64).reshape(-1, 2)
    return n, header[1], weights, edges


def write_array_archive(
    path: str | Path,
    header: Mapping[str, Any],
    arrays: Mapping[str, npt.NDArray[Any]],
) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    payload = dict(arrays)
    payload["header"] = np.array(dumps({**header, "schema": SCHEMA}))
    # a file handle keeps numpy from appending ".npz" to the chosen name
    with target.open("wb") as handle:
        np.savez_compressed(handle, **payload)


def read_array_archive(path: str | Path) -> tuple[JSONDict, dict[str, npt.NDArray[Any]]]:
    with np.load(Path(path), allow_pickle=False) as archive:
        header = json.loads(str(archive["header"]))
        if header.get("schema") != SCHEMA:
            raise ValueError(f"{path}: unsupported archive schema {header.get('schema')!r}")
        arrays = {name: archive[name] for name in archive.files if name != "header"}
    return header, arrays


def format_float(value: float) -> str:
    return f"{value:.17g}"


def write_plot_csv(
    path: str | Path,
    columns: Sequence[tuple[str, str]],
    rows: Sequence[Sequence[float]],
) -> None:
    """Write rows under named columns, each documented by a '#' comment line."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8", newline="") as handle:
        for name, meaning in columns:
            handle.write(f"# {name}: {meaning}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([name for name, _ in columns])
        for row in rows:
            if len(row) != len(columns):
                raise ValueError("row length does not match the column count")
            writer.writerow([format_float(float(value)) for value in row])


def read_plot_csv(path: str | Path) -> tuple[list[str], list[list[float]]]:
    with Path(path).open(encoding="utf-8", newline="") as handle:
        body = [line for line in handle if not line.startswith("#")]
    reader = csv.reader(body)
    header = next(reader, [])
    rows = [[float(value) for value in row] for row in reader if row]
    return header, rows
