"""
A few utility bobs and bits.
"""

import json
import math
import zlib
from pathlib import Path, PurePath
from typing import Any, Tuple, Union

import numpy as np

PathLike = Union[PurePath, str, Tuple[str, ...]]


def to_path(pathlike: PathLike) -> Path:
    """
    Convert a given PathLike into a Path.
    """
    if isinstance(pathlike, tuple):
        return Path(*pathlike)
    return Path(pathlike)


def substream(root_seed: int, name: str, *indices: int) -> np.random.Generator:
    """
    Derive an independent generator for a named stream from a single root seed.

    The same (root_seed, name, indices) always yields the same stream, so work
    can be split across threads without changing the results.
    """
    key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(int(root_seed), spawn_key=key))


def _jsonable(value: Any) -> Any:
    # pylint: disable=too-many-return-statements
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        number = float(value)
        if not math.isfinite(number):
            return str(number)
        return number
    if isinstance(value, PurePath):
        return str(value)
    return value


def to_json(obj: Any) -> str:
    """
    Serialize deterministically: sorted keys, fixed indentation, trailing newline.
    """
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False,
                      allow_nan=False) + "\n"


def dump_json(path: PathLike, obj: Any) -> Path:
    """
    Write a report as JSON and return the path written to.
    """
    target = to_path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8") as file:
        file.write(to_json(obj))
    return target
