"""Test collection wiring: configure Django the same way ``src/manage.py`` does."""
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), 'src'))
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'hypermatch_project.settings')

import django  # noqa: E402

django.setup()
