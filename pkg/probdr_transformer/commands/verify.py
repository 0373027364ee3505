import json
import sys
import typing

from rich.console import Console

from probdr_transformer.base.command import BaseCommand
from probdr_transformer.utils.config import add_verify_args, log_event
from probdr_transformer.utils.io import write_json
from probdr_transformer.verify import Implementations, render, run_suites


class VerifyCommand(BaseCommand):
    """Runs the invariant and equivalence suites; exits 1 if any check fails."""

    name = "verify"

    @classmethod
    def add_args(cls, parser):
        super().add_args(parser)
        add_verify_args(cls, parser)

    def __init__(self, config=None, impl: typing.Optional[Implementations] = None, console=None, stdout=None):
        super().__init__(config=config)
        self.impl = impl
        self.console = console or Console()
        self.stdout = stdout or sys.stdout

    def run(self) -> int:
        report = run_suites(
            suite=self.config.suite,
            instances=self.config.verify.instances,
            seed=self.config.seed,
            impl=self.impl,
        )
        render(report, self.console)
        for r in report.results:
            log_event(f"{r.suite}.{r.name} {'pass' if r.passed else 'FAIL'} residual={r.residual:.3e} tol={r.tolerance:.1e}")

        write_json(self.path("verify.json"), report.to_dict())
        self.stdout.write(json.dumps({"passed": report.passed, "failures": report.failures}) + "\n")
        return 0 if report.passed else 1
