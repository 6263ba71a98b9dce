"""
Provides a summary that keeps track of passed and failed gates and written reports.
"""
from pathlib import Path
from typing import List


def _merge_no_duplicate(first: List[str], second: List[str]) -> List[str]:
    tmp = list(set(first + second))
    tmp.sort()
    return tmp


def _merge_paths(first: List[Path], second: List[Path]) -> List[Path]:
    tmp = list(set(first + second))
    tmp.sort(key=str)
    return tmp


class RunSummary:
    """
    Keeps track of all acceptance gates and report files of a run and provides a summary.
    """

    def __init__(self) -> None:
        self._passed_gates: List[str] = []
        self._failed_gates: List[str] = []
        self._written_files: List[Path] = []

    @property
    def passed_gates(self) -> List[str]:
        """
        Returns all gates that passed.
        """
        return self._passed_gates.copy()

    @property
    def failed_gates(self) -> List[str]:
        """
        Returns all gates that failed.
        """
        return self._failed_gates.copy()

    @property
    def written_files(self) -> List[Path]:
        """
        Returns all report files written during the run.
        """
        return self._written_files.copy()

    def merge(self, summary: 'RunSummary') -> None:
        """
        Merges ourselves with the passed summary. Modifies this object, but not the passed one.
        """
        self._passed_gates = _merge_no_duplicate(self._passed_gates, summary.passed_gates)
        self._failed_gates = _merge_no_duplicate(self._failed_gates, summary.failed_gates)
        self._written_files = _merge_paths(self._written_files, summary.written_files)

    def add_gate(self, name: str, passed: bool) -> None:
        """
        Registers the outcome of an acceptance gate.
        """
        if passed:
            self._passed_gates.append(name)
        else:
            self._failed_gates.append(name)

    def add_written_file(self, path: Path) -> None:
        """
        Registers a report file as written.
        """
        self._written_files.append(path)

    def has_failures(self) -> bool:
        """
        Returns whether any gate failed.
        """
        return bool(self._failed_gates)
