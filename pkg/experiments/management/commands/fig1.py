from experiments.management.commands._base import ExperimentCommand
from experiments.services import ExperimentService


class Command(ExperimentCommand):
    help = "Run every fig1 variant and write one combined CSV"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            "--out", help="Output directory (defaults to output_dir)"
        )
        parser.add_argument(
            "--parallel",
            action="store_true",
            help="Dispatch the variants to Celery workers",
        )

    def execute_experiment(self, config, path, options):
        metadata = ExperimentService.fig1(
            config,
            out_dir=options["out"],
            parallel=options["parallel"],
            config_path=path,
        )
        for variant, summary in metadata["variants"].items():
            self.stdout.write(
                f"{variant}: {summary['iterations']} iterations "
                f"({summary['stop_reason']})"
            )
        self.stdout.write(self.style.SUCCESS("fig1 data written"))
