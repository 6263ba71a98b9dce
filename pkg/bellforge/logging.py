"""
Console logging through rich, and the domain messages every stage prints.
"""

import logging
from datetime import datetime
from typing import Optional

from rich._log_render import LogRender
from rich.console import Console
from rich.errors import MarkupError
from rich.markup import escape
from rich.style import Style
from rich.text import Text
from rich.theme import Theme

from .summary import RunSummary
from .utils import PathLike, to_path

LEVEL_STYLES = {
    "logging.level.debug": Style(dim=True),
    "logging.level.info": Style(color="blue"),
    "logging.level.warning": Style(color="yellow"),
    "logging.level.error": Style(color="red", bold=True),
}


def enable_logging(name: str = "bellforge", level: int = logging.INFO) -> None:
    """
    Route the named logger through a single rich handler. Debug runs also show
    timestamps.
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    for handler in [h for h in logger.handlers if isinstance(h, RichLoggingHandler)]:
        logger.removeHandler(handler)
    logger.addHandler(RichLoggingHandler(level=level, show_time=level <= logging.DEBUG))
    logger.propagate = False


class RichLoggingHandler(logging.Handler):
    """
    Renders records with a level column. Messages may carry rich markup.
    """

    def __init__(self, level: int, show_time: bool = False) -> None:
        super().__init__(level=level)
        self.console = Console(theme=Theme(LEVEL_STYLES))
        self._render = LogRender(show_level=True, show_time=show_time, show_path=False,
                                 time_format="%H:%M:%S")

    def emit(self, record: logging.LogRecord) -> None:
        try:
            message = Text.from_markup(self.format(record))
        except MarkupError:
            message = Text(record.getMessage())
        level = Text(record.levelname, f"logging.level.{record.levelname.lower()}")
        self.console.print(self._render(
            self.console,
            [message],
            log_time=datetime.fromtimestamp(record.created),
            level=level,
        ))


class PrettyLogger:
    """
    Wraps a module logger with the colored messages of the pipeline stages.
    """

    def __init__(self, logger: logging.Logger) -> None:
        self.logger = logger

    @staticmethod
    def _format_path(path: PathLike) -> str:
        return repr(str(to_path(path)))

    def error(self, message: str) -> None:
        self.logger.error(f"[bold red]{escape(message)}[/bold red]")

    def stage_failed(self, stage_name: str, reason: str) -> None:
        """
        A stage raised and produced no report.
        """
        self.logger.error(f"[bold red]Stage {stage_name} failed:[/bold red] {escape(reason)}")

    def warning(self, message: str) -> None:
        """
        Something is off, but the stage carries on.
        """
        self.logger.warning(f"[bold yellow]{message}[/bold yellow]")

    def wrote_report(self, path: PathLike) -> None:
        """
        A report file has been written.
        """

        self.logger.info(
            f"[bold green]Wrote {self._format_path(path)}.[/bold green]"
        )

    def gate_passed(self, name: str, value: float, threshold: float) -> None:
        """
        An acceptance gate holds.
        """

        self.logger.info(
            f"[bold green]Gate {name} passed[/bold green] "
            f"[dim]({value:.3e} <= {threshold:.3e})[/dim]"
        )

    def gate_failed(self, name: str, value: float, threshold: float) -> None:
        """
        An acceptance gate does not hold.
        """

        self.logger.info(
            f"[bold red]Gate {name} failed[/bold red] "
            f"[dim]({value:.3e} > {threshold:.3e})[/dim]"
        )

    def audit_summary(self, epsilon: float, worst_cell: Optional[str], correlator_count: int) -> None:
        """
        Prints the outcome of a Bell audit.
        """

        self.logger.info(
            f"Evaluated [bold]{correlator_count}[/bold] correlators, "
            f"epsilon = [bold cyan]{epsilon:.3e}[/bold cyan]"
        )
        if worst_cell:
            self.logger.info(f"[dim]Largest deficit at {worst_cell}[/dim]")

    def relation_summary(self, chi: str, eta: float, worst_family: Optional[str]) -> None:
        """
        Prints the outcome of an operator relation check.
        """

        family = f" ([/dim]{worst_family}[dim])" if worst_family else ""
        self.logger.info(
            f"Relations for special question {chi}: eta = [bold cyan]{eta:.3e}[/bold cyan]"
            f"[dim]{family}[/dim]"
        )

    def summary(self, run_summary: RunSummary) -> None:
        """
        Prints a run summary.
        """
        self.logger.info("")
        self.logger.info("[bold cyan]Run Summary[/bold cyan]")
        if not run_summary.passed_gates and not run_summary.failed_gates:
            self.logger.info("[bold dim]No gates evaluated![/bold dim]")

        for gate in run_summary.passed_gates:
            self.logger.info(f"[bold green]Passed {gate}[/bold green]")
        for gate in run_summary.failed_gates:
            self.logger.info(f"[bold red]Failed {gate}[/bold red]")
        for path in run_summary.written_files:
            self.wrote_report(path)

    def starting_stage(
            self,
            stage_name: str,
            subject: Optional[str] = None,
    ) -> None:
        """
        A special message marking that a pipeline stage has been started.
        """

        subject_str = f" for {subject}" if subject else ""
        self.logger.info("")
        self.logger.info((
            f"[bold cyan]Running {stage_name}{subject_str}.[/bold cyan]"
        ))
