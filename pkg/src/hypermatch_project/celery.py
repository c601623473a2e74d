import os

from celery import Celery

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'hypermatch_project.settings')

app = Celery('hypermatch_project')

# Broker, result backend and eager mode come from the CELERY_* Django settings.
app.config_from_object('django.conf:settings', namespace='CELERY')

# Picks up matching.tasks (the per-trial benchmark task).
app.autodiscover_tasks()
