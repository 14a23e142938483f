"""CSV tables and run manifests."""

from __future__ import annotations

import json
import platform
from pathlib import Path

import numpy as np

NUMBER_FORMAT = "%.8e"  # 9 significant digits


def _cell(v) -> str:
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return NUMBER_FORMAT % float(v)


def write_csv(path: str | Path, columns: dict) -> Path:
    """Header row plus one row per index; every column must have the same length."""
    names = list(columns)
    cols = [np.asarray(columns[n]) if not isinstance(columns[n], list) else columns[n] for n in names]
    lengths = {len(c) for c in cols}
    if len(lengths) > 1:
        raise ValueError(f"column lengths differ: {sorted(lengths)}")
    n = lengths.pop() if lengths else 0
    lines = [",".join(names)]
    lines += [",".join(_cell(c[i]) for c in cols) for i in range(n)]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_csv(path: str | Path) -> dict[str, list[str]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    names = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return {n: [r[i] for r in rows] for i, n in enumerate(names)}


def manifest_path(output: str | Path) -> Path:
    output = Path(output)
    if output.suffix == "" and (output.is_dir() or not output.exists()):
        return output / "manifest.json"
    return output.with_name(output.stem + ".manifest.json")


def write_manifest(output: str | Path, subcommand: str, config_hash: str, seed: int,
                   outputs, wall_time: float, version: str, extra: dict | None = None) -> Path:
    path = manifest_path(output)
    data = {
        "subcommand": subcommand,
        "config_hash": config_hash,
        "seed": seed,
        "outputs": [str(p) for p in outputs],
        "wall_time_s": wall_time,
        "version": version,
        "python": platform.python_version(),
    }
    if extra:
        data["summary"] = extra
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    return path


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def write_json(path: str | Path, data: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    return path
