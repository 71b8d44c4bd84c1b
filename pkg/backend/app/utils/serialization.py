import logging
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np
import orjson
import pandas as pd
from pydantic import BaseModel

from ..exact import Quad, rat_to_str

logger = logging.getLogger(__name__)

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS


def _default(obj: Any):
    if isinstance(obj, Fraction):
        return rat_to_str(obj)
    if isinstance(obj, Quad):
        return obj.to_dict()
    if isinstance(obj, BaseModel):
        return obj.dict()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(payload: Any) -> bytes:
    """Sorted keys, two-space indent, exact values as "p/q" strings."""
    return orjson.dumps(payload, default=_default, option=JSON_OPTIONS)


def loads(data) -> Any:
    return orjson.loads(data)


def write_json(path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(payload) + b"\n")
    logger.info("wrote %s", path)
    return path


def _cell(value: Any):
    if isinstance(value, Fraction):
        return rat_to_str(value)
    if isinstance(value, (dict, list, tuple)):
        return dumps(value).decode().replace("\n", "").replace("  ", "")
    return value


def write_csv(path, rows: Iterable[Mapping[str, Any]], columns=None) -> Path:
    """Rows of plain values; exact fractions become "p/q" strings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([{k: _cell(v) for k, v in row.items()} for row in rows], columns=columns)
    frame.to_csv(path, index=False)
    logger.info("wrote %s (%d rows)", path, len(frame))
    return path
