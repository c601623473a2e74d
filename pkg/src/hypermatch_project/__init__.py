# Loading the Celery app with Django binds ``matching.tasks.run_trial_task`` to it.
from .celery import app as celery_app

__all__ = ('celery_app',)
