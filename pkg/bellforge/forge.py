"""
Convenience functions for running the whole pipeline.
"""

import logging
from pathlib import Path
from typing import Optional

from .config import RunConfig
from .errors import ConfigError, QuestionError, pipeline_stage
from .location import ReportDirectory
from .logging import PrettyLogger
from .prepare import PrepReport, OracleSuite, oracle_suite, prep_distance_report
from .questions import (Question, QuestionSet, build_question_set, question_report,
                        random_specials, specials_from_strings)
from .selftest import (GLOBAL_CONJ_FACTOR, SLACK, SelfTestReport, apply_isometry,
                       fingerprint, global_conj_check, relation_check, vb_matrix)
from .strategy import (Strategy, conjugated, depolarize, honest_strategy,
                       load_strategy)
from .summary import RunSummary
from .utils import substream
from .verifier import (AuditReport, estimate_from_trials, full_audit,
                       sample_trials, write_trials)

LOGGER = logging.getLogger(__name__)
PRETTY = PrettyLogger(LOGGER)


class Forge(ReportDirectory):
    """
    The main entrypoint: runs every stage of a configured experiment and writes
    its reports into one output directory.
    """

    def __init__(self, config: RunConfig, out_dir: Optional[Path] = None):
        super().__init__(out_dir if out_dir is not None else config.out)
        self._config = config.validate()
        self._summary = RunSummary()
        self._specials: Optional[QuestionSet] = None
        self._strategy: Optional[Strategy] = None

    @property
    def config(self) -> RunConfig:
        return self._config

    @property
    def summary(self) -> RunSummary:
        return self._summary

    def specials(self) -> QuestionSet:
        """
        The special questions: the explicit list, or a draw from the
        "questions" substream of the seed.
        """
        if self._specials is None:
            config = self._config
            if config.specials.explicit is not None:
                specials = specials_from_strings(config.specials.explicit, config.m)
                if specials.n != config.n:
                    raise ConfigError(f"Special questions have length {specials.n}, but n = {config.n}")
            else:
                specials = random_specials(
                    config.specials.count, config.n, substream(config.seed, "questions"),
                    config.m, config.specials.min_z_fraction,
                )
            self._specials = specials
        return self._specials

    def strategy(self) -> Strategy:
        """
        The configured strategy with the configured noise applied.
        """
        if self._strategy is None:
            config = self._config
            if config.strategy == "honest":
                strategy: Strategy = honest_strategy(config.n)
            elif config.strategy == "conjugated":
                strategy = conjugated(honest_strategy(config.n))
            else:
                strategy = load_strategy(config.strategy)
            if strategy.n != config.n:
                raise ConfigError(f"Strategy has n = {strategy.n}, but the config asks for n = {config.n}")
            if config.noise.active:
                strategy = depolarize(strategy, config.noise)
            self._strategy = strategy
        return self._strategy

    @staticmethod
    def _gate(summary: RunSummary, name: str, value: float, threshold: float) -> bool:
        passed = value <= threshold
        if passed:
            PRETTY.gate_passed(name, value, threshold)
        else:
            PRETTY.gate_failed(name, value, threshold)
        summary.add_gate(name, passed)
        return passed

    def _wrote(self, summary: RunSummary, path: Path) -> None:
        summary.add_written_file(path)
        LOGGER.debug("Wrote %s", path)

    @pipeline_stage("question generation")
    def gen_questions(self) -> QuestionSet:
        """
        Write the special questions, Alice's expanded question set and its
        cardinality report.
        """
        PRETTY.starting_stage("question generation", f"n = {self._config.n}")
        summary = RunSummary()
        specials = self.specials()
        questions = build_question_set(specials)
        report = question_report(specials)

        self._wrote(summary, self.write_lines("specials.txt", specials.to_lines()))
        self._wrote(summary, self.write_lines("questions.txt", questions.to_lines()))
        self._wrote(summary, self.write_json("questions.json", report))

        cardinality = report["cardinality"]
        self._gate(summary, "questions: cardinality bound",
                   cardinality["questions"], cardinality["questions_bound"])  # type: ignore

        self._summary.merge(summary)
        return questions

    @pipeline_stage("audit")
    def audit(self) -> AuditReport:
        """
        Evaluate every requested Bell expression exactly and, with trials
        configured, estimate them again from sampled rounds.
        """
        config = self._config
        PRETTY.starting_stage("audit", f"n = {config.n}")
        summary = RunSummary()
        strategy = self.strategy()
        specials = self.specials()

        report = full_audit(strategy, specials)
        PRETTY.audit_summary(report.epsilon, report.worst_cell, report.correlator_count)
        self._wrote(summary, self.write_json("audit.json", report.to_json()))
        self._gate(summary, "audit: epsilon", report.epsilon, config.gate)

        if config.trials_per_cell > 0:
            records = sample_trials(strategy, specials, config.trials_per_cell, config.seed)
            trials_path = self.resolve("trials.csv")
            write_trials(trials_path, records)
            self._wrote(summary, trials_path)
            sampled = estimate_from_trials(records, specials, config.alpha)
            LOGGER.info(
                "Sampled %d rounds, epsilon = %.3e (upper %.3e at alpha = %g)",
                len(records), sampled.epsilon, sampled.epsilon_upper or 0.0, config.alpha,
            )
            self._wrote(summary, self.write_json("audit_sampled.json", sampled.to_json()))

        self._summary.merge(summary)
        return report

    @pipeline_stage("self-test")
    def selftest(self) -> SelfTestReport:
        """
        Check every operator relation and apply the isometry for each special question.
        """
        config = self._config
        PRETTY.starting_stage("self-test", f"n = {config.n}")
        summary = RunSummary()
        strategy = self.strategy()
        specials = self.specials()
        dense = strategy.dense()

        epsilon = full_audit(strategy, specials).epsilon
        report = SelfTestReport(epsilon)
        chi_prime = specials.members[0]
        for chi in specials:
            relations = relation_check(dense, chi, specials, chi_prime)
            PRETTY.relation_summary(str(chi), relations.eta, relations.worst_family)
            report.relations[str(chi)] = relations
            report.isometries[str(chi)] = apply_isometry(dense, chi, specials)
            report.fingerprints[str(chi)] = fingerprint(vb_matrix(dense, chi))
        if dense.n >= 2:
            report.global_conj = global_conj_check(dense)

        self._wrote(summary, self.write_json("selftest.json", report.to_json()))

        violations = sum(len(r.violations(epsilon)) for r in report.relations.values())
        self._gate(summary, "selftest: relation bounds", violations, 0)
        self._gate(summary, "selftest: V_B fingerprints", len(set(report.fingerprints.values())), 1)
        self._gate(summary, "selftest: isometry distance", report.delta, config.gate)
        if report.global_conj:
            self._gate(summary, "selftest: global conjugation", max(report.global_conj.values()),
                       GLOBAL_CONJ_FACTOR * report.eta + SLACK)

        self._summary.merge(summary)
        return report

    @pipeline_stage("state preparation")
    def prepare(self, chi: Optional[str] = None, threshold: Optional[float] = None) -> PrepReport:
        """
        Compare Bob's post-measurement states for one special question with the
        ideal prepared states.
        """
        config = self._config
        specials = self.specials()
        question = specials.members[0] if chi is None else Question.parse(chi, config.m)
        if question not in specials:
            raise QuestionError(f"{question} is not a special question")
        PRETTY.starting_stage("state preparation", str(question))
        summary = RunSummary()

        report = prep_distance_report(self.strategy(), question, threshold, specials, config.tolerance)
        self._wrote(summary, self.write_json(f"prepare_{question}.json", report.to_json()))
        self._gate(summary, f"prepare {question}: exceed probability",
                   report.exceed_probability, config.prep_bound + config.tolerance)

        self._summary.merge(summary)
        return report

    @pipeline_stage("oracle")
    def oracle(self, count: int = 1000) -> OracleSuite:
        """
        Run the probabilistic trace-distance bound on synthetic families.
        """
        PRETTY.starting_stage("oracle", f"{count} families")
        summary = RunSummary()
        suite = oracle_suite(self._config.seed, count)
        self._wrote(summary, self.write_json("oracle.json", suite.to_json()))
        self._gate(summary, "oracle: bound violations", suite.violations, 0)
        self._summary.merge(summary)
        return suite

    def print_summary(self) -> None:
        """
        Prints the accumulated run summary.
        """
        PRETTY.summary(self._summary)
