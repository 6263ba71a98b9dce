"""
Domain exceptions and the decorator that keeps a failing stage from aborting the run.
"""

import functools
import logging
from typing import Any, Callable, Iterable, TypeVar, cast

from rich.console import Console

from .logging import PrettyLogger

LOGGER = logging.getLogger(__name__)
PRETTY = PrettyLogger(LOGGER)


class FatalException(Exception):
    """
    A fatal exception occurred. Recovery is not possible.
    """


class InvalidOperatorError(FatalException):
    """
    An operator is not square, or does not have a property an operation requires
    (Hermitian, unitary, projector).
    """


class LayoutError(FatalException):
    """
    A register layout does not match: unknown label, wrong dimension or a state
    vector with an invalid norm.
    """


class QuestionError(FatalException):
    """
    A question or question set is malformed.
    """


class StrategyError(FatalException):
    """
    A prover strategy is malformed or was queried outside of its domain.
    """


class MissingCellError(FatalException):
    """
    Trial records do not cover every requested audit cell.
    """

    def __init__(self, cells: Iterable[str]):
        self.cells = sorted(cells)
        shown = ", ".join(self.cells[:10])
        more = f" and {len(self.cells) - 10} more" if len(self.cells) > 10 else ""
        super().__init__(f"No trial records for {len(self.cells)} cell(s): {shown}{more}")


class DenseCapExceeded(FatalException):
    """
    A dense computation was requested for a system that is too large.
    """


class ZeroProbabilityError(FatalException):
    """
    A post-measurement state was requested for an outcome that never occurs.
    """


class ConfigError(FatalException):
    """
    The run configuration is invalid.
    """


TFun = TypeVar('TFun', bound=Callable[..., Any])


def pipeline_stage(stage_name: str) -> Callable[[TFun], TFun]:
    """
    Marks a method as the pipeline stage `stage_name`. If the stage raises, the
    failure is logged together with the stage name and the stage returns None.
    Domain errors are reported by type and message, anything else with its
    traceback.
    """
    def decorate(function: TFun) -> TFun:
        @functools.wraps(function)
        def inner(*args: Any, **kwargs: Any) -> Any:
            # pylint: disable=broad-except
            try:
                return function(*args, **kwargs)
            except FatalException as error:
                PRETTY.stage_failed(stage_name, f"{type(error).__name__}: {error}")
                return None
            except Exception as error:
                PRETTY.stage_failed(stage_name, f"unexpected {type(error).__name__}")
                Console().print_exception()
                return None
        return cast(TFun, inner)
    return decorate
