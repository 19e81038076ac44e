from config.constants import GRADCHECK_TOLERANCE
from exceptions import GateFailure
from pipeline.gradcheck import run_gradcheck
from pipeline.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Check every layer and both training losses against central finite differences."
    pipeline_name = "gradcheck"

    def execute_pipeline(self, config, out, options):
        results = run_gradcheck(config.seed)
        return {
            "errors": {result.name: result.error for result in results},
            "max_relative_error": max(result.error for result in results),
            "tolerance": GRADCHECK_TOLERANCE,
            "passed": all(result.passed for result in results),
        }

    def check_summary(self, config, summary):
        if not summary["passed"]:
            failed = sorted(name for name, error in summary["errors"].items() if error >= GRADCHECK_TOLERANCE)
            raise GateFailure(
                f"max relative error {summary['max_relative_error']:.3e} >= {GRADCHECK_TOLERANCE} in {', '.join(failed)}"
            )
