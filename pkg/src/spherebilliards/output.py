"""Deterministic JSON / JSON-lines emission with 9 significant digits."""
from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np

DIGITS = 9


def round_sig(x: float, digits: int = DIGITS) -> float | None:
    if not math.isfinite(x):
        return None
    return float(f"{x:.{digits}g}")


def plain(obj: Any) -> Any:
    """Recursively convert numpy types, dataclasses and tuples; round floats."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return round_sig(float(obj))
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if is_dataclass(obj) and not isinstance(obj, type):
        return plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int | None = None) -> str:
    return json.dumps(plain(obj), sort_keys=True, indent=indent, allow_nan=False)


def jsonl(records: Iterable[Any]) -> str:
    return "".join(dumps(r) + "\n" for r in records)


def write_text(text: str, path: str | Path | None) -> None:
    """Write to ``path``, or stdout when it is None or '-'."""
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


def read_jsonl(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
