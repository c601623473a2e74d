import logging

from django.core.management.base import CommandError

from matching.exceptions import InvalidProblemError, MonotonicityViolationError
from matching.management.commands._base import (
    EXIT_PARSE_ERROR,
    EXIT_SOLVER_ANOMALY,
    HypermatchCommand,
    nonnegative_int,
    positive_int,
)
from matching.solvers.bcagm import ALPHA_MODES
from matching.utils.affinity_helper import SamplingConfig
from matching.utils.experiment_helper import (
    EXECUTORS,
    FLOAT_FORMAT,
    PRESETS,
    ExperimentSpec,
    run_grid,
    summarize,
    write_csv,
)

logger = logging.getLogger(__name__)


def method_list(text):
    return tuple(name.strip() for name in text.split(',') if name.strip())


class Command(HypermatchCommand):
    help = 'Runs a synthetic benchmark grid and writes one CSV row per (grid point, trial, method).'

    def add_arguments(self, parser):
        parser.add_argument('--preset', choices=sorted(PRESETS), help='Named grid; explicit axis flags override it.')
        parser.add_argument('--n-in', help="Inlier counts, e.g. '10' or '10:30:10'.")
        parser.add_argument('--n-out', help="Outlier counts, e.g. '0:200:10'.")
        parser.add_argument('--sigma', help='Deformation noise levels.')
        parser.add_argument('--scale', help='Scale factors applied to the scene.')
        parser.add_argument('--trials', type=positive_int, help='Trials per grid point.')
        parser.add_argument('--seed-base', type=nonnegative_int, default=0)
        parser.add_argument(
            '--methods', type=method_list, default=('bcagm',),
            help='Comma separated subset of bcagm,bcagm_mp,bcagm_ipfp,hopm,ipfp2,mpm2.',
        )
        parser.add_argument('--triples-per-point', type=positive_int, default=SamplingConfig.triples_per_point)
        parser.add_argument('--knn', type=positive_int, default=SamplingConfig.knn)
        parser.add_argument('--alpha-mode', choices=list(ALPHA_MODES), default='zero-then-bound')
        parser.add_argument('--executor', choices=EXECUTORS, default='local')
        parser.add_argument('-o', '--output', help='CSV path (default: standard output).')
        parser.add_argument('--summary', help='Also write per grid point means to this CSV path.')
        self.add_threading_arguments(parser)

    def handle(self, *args, **options):
        try:
            spec = self._build_spec(options)
        except InvalidProblemError as exc:
            raise CommandError(str(exc), returncode=EXIT_PARSE_ERROR)

        points = len(spec.grid_points())
        logger.info("Running %d grid points x %d trials x %d methods.", points, spec.trials, len(spec.methods))
        try:
            records = run_grid(spec, options['executor'], options['threads'], options['deterministic'])
        except MonotonicityViolationError as exc:
            raise CommandError(f'Solver anomaly: {exc}', returncode=EXIT_SOLVER_ANOMALY)

        if options['output']:
            with open(options['output'], 'w', encoding='utf-8', newline='\n') as handle:
                write_csv(records, handle)
        else:
            self.stdout.write(write_csv(records, None), ending='')

        if options['summary']:
            summarize(records).to_csv(
                options['summary'], index=False, float_format=FLOAT_FORMAT, lineterminator='\n'
            )

    def _build_spec(self, options):
        axes = {
            axis: options[axis]
            for axis in ('n_in', 'n_out', 'sigma', 'scale')
            if options.get(axis) is not None
        }
        settings = {
            'seed_base': options['seed_base'],
            'methods': options['methods'],
            'sampling': SamplingConfig(triples_per_point=options['triples_per_point'], knn=options['knn']),
            'alpha_schedule': ALPHA_MODES[options['alpha_mode']],
        }
        if options.get('trials') is not None:
            settings['trials'] = options['trials']
        if options.get('preset'):
            return ExperimentSpec.from_preset(options['preset'], **axes, **settings)
        axes.setdefault('n_in', '10')
        return ExperimentSpec.from_axes(**axes, **settings)
