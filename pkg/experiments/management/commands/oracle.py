from experiments.management.commands._base import ExperimentCommand
from experiments.services import ExperimentService


class Command(ExperimentCommand):
    help = "Solve for the Nash equilibrium with full information"

    def execute_experiment(self, config, path, options):
        problem = ExperimentService.prepare(config)
        solution = ExperimentService.solve(problem, config)

        self.stdout.write(
            "x*: [" + ", ".join(f"{v:.12g}" for v in solution.x_star) + "]"
        )
        self.stdout.write(f"residual: {solution.residual:.3e}")
        self.stdout.write(f"iterations: {solution.iterations}")
        self.stdout.write(self.style.SUCCESS("Equilibrium found"))
