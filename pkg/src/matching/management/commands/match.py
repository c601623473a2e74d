from dataclasses import replace

from django.core.management.base import CommandError

from matching.exceptions import (
    DocumentParseError,
    HypermatchError,
    InvalidProblemError,
    MonotonicityViolationError,
)
from matching.management.commands._base import (
    EXIT_INVALID_PROBLEM,
    EXIT_PARSE_ERROR,
    EXIT_SOLVER_ANOMALY,
    HypermatchCommand,
    nonnegative_int,
    positive_int,
)
from matching.solvers.bcagm import ALPHA_MODES
from matching.utils.document_helper import load_problem, render_result, solve_problem
from matching.utils.experiment_helper import METHODS, resolve_threads


class Command(HypermatchCommand):
    help = 'Matches the two point sets of a problem document and writes a result document.'

    def add_arguments(self, parser):
        parser.add_argument('problem', help='Problem document (JSON, format_version 1).')
        parser.add_argument('-o', '--output', help='Result document path (default: standard output).')
        parser.add_argument('--method', choices=METHODS, help='Overrides solver.method.')
        parser.add_argument('--alpha-mode', choices=list(ALPHA_MODES), help='Overrides solver.alpha_mode.')
        parser.add_argument('--triples-per-point', type=positive_int, help='Overrides sampling.triples_per_point.')
        parser.add_argument('--knn', type=positive_int, help='Overrides sampling.knn.')
        parser.add_argument('--seed', type=nonnegative_int, help='Overrides sampling.seed.')
        self.add_threading_arguments(parser)

    def handle(self, *args, **options):
        try:
            problem = load_problem(options['problem'])
        except DocumentParseError as exc:
            raise CommandError(str(exc), returncode=EXIT_PARSE_ERROR)
        except InvalidProblemError as exc:
            raise CommandError(str(exc), returncode=EXIT_INVALID_PROBLEM)
        problem = self._apply_overrides(problem, options)
        threads = 1 if options['deterministic'] else resolve_threads(options['threads'])

        try:
            result = solve_problem(problem, threads)
        except MonotonicityViolationError as exc:
            raise CommandError(f'Solver anomaly: {exc}', returncode=EXIT_SOLVER_ANOMALY)
        except HypermatchError as exc:
            raise CommandError(str(exc), returncode=EXIT_INVALID_PROBLEM)

        text = render_result(result)
        if options['output']:
            with open(options['output'], 'w', encoding='utf-8', newline='\n') as handle:
                handle.write(text)
        else:
            self.stdout.write(text, ending='')

    def _apply_overrides(self, problem, options):
        sampling = {
            name: options[name]
            for name in ('triples_per_point', 'knn', 'seed')
            if options.get(name) is not None
        }
        if sampling:
            problem.sampling = replace(problem.sampling, **sampling)
        if options.get('method'):
            problem.method = options['method']
        if options.get('alpha_mode'):
            problem.alpha_schedule = ALPHA_MODES[options['alpha_mode']]
        return problem
