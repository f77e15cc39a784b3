from experiments.management.commands._base import ExperimentCommand
from experiments.services import ExperimentService


class Command(ExperimentCommand):
    help = "Run one distributed algorithm and write its trace"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            "--out", help="Output directory (defaults to output_dir)"
        )

    def execute_experiment(self, config, path, options):
        metadata = ExperimentService.run(
            config, out_dir=options["out"], config_path=path
        )
        self.stdout.write(
            f"{metadata['algorithm']}: {metadata['iterations']} iterations "
            f"({metadata['stop_reason']}), final dist {metadata['final_dist']}"
        )
        self.stdout.write(self.style.SUCCESS("Trace written"))
