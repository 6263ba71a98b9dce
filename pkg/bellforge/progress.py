"""
Progress bars for long-running sampling, audit and oracle loops.

Every bar shares one transient rich `Progress` on stdout. Loops shorter than
`MIN_ITEMS` run without a bar.
"""
import sys
from dataclasses import dataclass
from types import TracebackType
from typing import Iterator, Optional, Sequence, Type, TypeVar

from rich.console import Console
from rich.progress import (BarColumn, MofNCompleteColumn, Progress, TaskID,
                           TextColumn, TimeElapsedColumn)

T = TypeVar("T")

MIN_ITEMS = 64

_progress: Progress = Progress(
    TextColumn("[bold cyan]{task.fields[name]}", justify="right"),
    BarColumn(bar_width=None),
    MofNCompleteColumn(),
    TextColumn("{task.fields[unit]}"),
    TimeElapsedColumn(),
    console=Console(file=sys.stdout),
    transient=True,
)


@dataclass(frozen=True)
class ProgressSettings:
    """
    One bar: its label, the number of steps and what a step counts.
    """
    name: str
    max_size: int
    unit: str = "cells"

    @classmethod
    def for_items(cls, name: str, count: int, unit: str = "cells") -> Optional['ProgressSettings']:
        """
        Settings for a loop over `count` items, or None if it is too short for a bar.
        """
        if count < MIN_ITEMS:
            return None
        return cls(name, count, unit)


def progress_for(settings: Optional[ProgressSettings]) -> 'ProgressBar':
    """
    A context manager that shows a bar, or does nothing without settings.
    """
    return ProgressBar(settings)


def track(items: Sequence[T], name: str, unit: str = "items") -> Iterator[T]:
    """
    Yield the items while advancing a bar.
    """
    with progress_for(ProgressSettings.for_items(name, len(items), unit)) as bar:
        for item in items:
            yield item
            bar.advance()


class ProgressBar:
    """
    A task on the shared progress display. The display stops when its last
    task is removed.
    """

    def __init__(self, settings: Optional[ProgressSettings]):
        self._settings = settings
        self._task: Optional[TaskID] = None

    def __enter__(self) -> 'ProgressBar':
        settings = self._settings
        if settings is None:
            return self
        _progress.start()
        self._task = _progress.add_task(
            settings.name, total=settings.max_size, name=settings.name, unit=settings.unit
        )
        return self

    def __exit__(
            self,
            exc_type: Optional[Type[BaseException]],
            exc_value: Optional[BaseException],
            traceback: Optional[TracebackType],
    ) -> None:
        if self._task is None:
            return
        _progress.remove_task(self._task)
        self._task = None
        if not _progress.task_ids:
            _progress.stop()

    def advance(self, amount: float = 1) -> None:
        if self._task is not None:
            _progress.advance(self._task, amount)
