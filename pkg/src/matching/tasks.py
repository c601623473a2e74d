from celery import shared_task

from matching.utils.experiment_helper import ExperimentSpec, run_trial


@shared_task(bind=True)
def run_trial_task(self, spec_payload, point_index, trial, deterministic=False):
    """
    Task to run one benchmark trial.

    Args:
    - spec_payload (dict): ExperimentSpec.to_payload() of the experiment.
    - point_index (int): Index of the grid point.
    - trial (int): Trial number.
    - deterministic (bool): Write 0 as wall time.

    Returns:
    - list: Result records as dictionaries.
    """
    spec = ExperimentSpec.from_payload(spec_payload)
    return [record.to_payload() for record in run_trial(spec, point_index, trial, deterministic)]
