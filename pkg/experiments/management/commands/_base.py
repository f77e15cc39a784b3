from django.core.management.base import BaseCommand, CommandError

from core.exceptions import NashError
from experiments.loaders import load_config


class ExperimentCommand(BaseCommand):
    """Shared ``--config`` handling and error-to-exit-code mapping."""

    def add_arguments(self, parser):
        parser.add_argument(
            "--config", required=True, help="Path to a YAML experiment file"
        )

    def handle(self, *args, **options):
        path = options["config"]
        try:
            config = load_config(path)
            self.execute_experiment(config, path, options)
        except NashError as error:
            raise CommandError(
                f"{path}: {error}", returncode=error.exit_code
            ) from error

    def execute_experiment(self, config: dict, path: str, options: dict):
        raise NotImplementedError
