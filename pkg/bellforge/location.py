"""
The report directory every stage writes into.
"""

import logging
from pathlib import Path, PurePath
from typing import Any, Iterable, Union

from .errors import FatalException
from .utils import PathLike, dump_json, to_path

LOGGER = logging.getLogger(__name__)

ReportName = Union[str, PurePath]


class ReportPathError(FatalException):
    """
    A report name is absolute or leads out of the report directory.
    """

    def __init__(self, name: ReportName, root: Path, reason: str):
        self.name = PurePath(name)
        self.root = root
        super().__init__(f"Report name {str(self.name)!r} {reason} (report directory {str(root)!r})")


class ReportDirectory:
    """
    An output directory with relative report names below it. Reports are
    created on demand, replacing an earlier report of the same name.
    """

    def __init__(self, path: PathLike):
        self._path = to_path(path).resolve()

    @property
    def path(self) -> Path:
        return self._path

    def resolve(self, name: ReportName) -> Path:
        """
        The absolute path of a report. Raises a [ReportPathError] for absolute
        names and for names that end up outside of the directory.
        """
        relative = PurePath(name)
        if relative.is_absolute():
            raise ReportPathError(name, self._path, "must be relative")
        target = self._path.joinpath(relative).resolve()
        if self._path not in target.parents:
            raise ReportPathError(name, self._path, "leaves the report directory")
        if target.exists():
            LOGGER.debug("Replacing report %s", target)
        return target

    def write_json(self, name: ReportName, obj: Any) -> Path:
        return dump_json(self.resolve(name), obj)

    def write_lines(self, name: ReportName, lines: Iterable[object]) -> Path:
        """
        Write one line per item, each terminated by a newline.
        """
        path = self.resolve(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as file:
            for line in lines:
                file.write(f"{line}\n")
        return path
