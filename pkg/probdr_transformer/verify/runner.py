"""Runs suites, renders the result table and builds the machine-readable report."""

import typing
from dataclasses import dataclass, field

from rich.console import Console
from rich.table import Table

from probdr_transformer.exceptions import InvalidParameterError
from probdr_transformer.verify.checks import CheckResult, Implementations, SuiteContext
from probdr_transformer.verify.suites import SUITES, run_suite

SUITE_NAMES = ("linalg", "graph", "objective", "block", "lm")


@dataclass
class VerifyReport:
    results: typing.List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> typing.List[str]:
        return [f"{r.suite}.{r.name}" for r in self.results if not r.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "failures": self.failures,
            "checks": [r.to_dict() for r in self.results],
        }


def resolve_suites(suite: str) -> typing.List[str]:
    if suite == "all":
        return list(SUITE_NAMES)
    if suite not in SUITES:
        raise InvalidParameterError(f"unknown suite '{suite}', expected one of {SUITE_NAMES + ('all',)}")
    return [suite]


def run_suites(
    suite: str = "all",
    instances: int = 20,
    seed: int = 0,
    impl: typing.Optional[Implementations] = None,
) -> VerifyReport:
    ctx = SuiteContext(instances=instances, seed=seed, impl=impl or Implementations())
    report = VerifyReport()
    for name in resolve_suites(suite):
        report.results.extend(run_suite(name, ctx))
    return report


def render(report: VerifyReport, console: typing.Optional[Console] = None):
    table = Table(title="Invariant checks")
    table.add_column("suite")
    table.add_column("check")
    table.add_column("status")
    table.add_column("max residual", justify="right")
    table.add_column("tolerance", justify="right")
    for r in report.results:
        status = "[green]pass[/green]" if r.passed else "[red]FAIL[/red]"
        table.add_row(r.suite, r.name, status, f"{r.residual:.3e}", f"{r.tolerance:.1e}")
        if r.detail:
            table.add_row("", "", "", r.detail, "")
    (console or Console()).print(table)
