import argparse

from django.core.management.base import CommandError

from matching.management.commands._base import EXIT_SELFCHECK_FAILED, HypermatchCommand
from matching.utils.selfcheck_helper import SelfCheckSuite


class Command(HypermatchCommand):
    help = 'Runs the invariant suite and prints PASS or FAIL per group.'

    def add_arguments(self, parser):
        parser.add_argument('--seed', type=int, default=0, help=argparse.SUPPRESS)
        parser.add_argument('--force-failure', action='store_true', help=argparse.SUPPRESS)

    def handle(self, *args, **options):
        results = SelfCheckSuite(options['seed'], options['force_failure']).run()
        for result in results:
            self.stdout.write(result.report_line())
        failed = [result.name for result in results if not result.passed]
        if failed:
            raise CommandError(f"Self-check failed: {', '.join(failed)}", returncode=EXIT_SELFCHECK_FAILED)
