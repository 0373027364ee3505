from .checks import CheckResult, Implementations, SuiteContext
from .runner import SUITE_NAMES, VerifyReport, render, run_suites
