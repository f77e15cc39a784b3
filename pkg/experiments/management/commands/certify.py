import json

from experiments.management.commands._base import ExperimentCommand
from experiments.services import ExperimentService


class Command(ExperimentCommand):
    help = "Compute the PF eigenvector, game constants and certified step"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            "--json", action="store_true", help="Print the report as JSON"
        )

    def execute_experiment(self, config, path, options):
        problem = ExperimentService.prepare(config)
        certificate = ExperimentService.certify(problem, config)
        report = ExperimentService.report(problem, certificate)

        if options["json"]:
            self.stdout.write(json.dumps(report, indent=2))
        else:
            self.stdout.write(ExperimentService.format_report(report))
        self.stdout.write(self.style.SUCCESS(
            f"Certified step {certificate.alpha:.6e}"
        ))
