from celery import shared_task

from experiments.loaders import validate_document
from experiments.services import ExperimentService


@shared_task
def run_variant(config: dict, variant: str) -> dict:
    """
    One fig1 variant on a worker. The config is re-validated so the worker
    builds exactly the problem the dispatcher built.
    """
    trace = ExperimentService.run_variant(validate_document(config), variant)
    return trace.as_dict()
