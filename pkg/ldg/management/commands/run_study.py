import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from pydantic import ValidationError

from ldg.checks import run_checks
from ldg.exceptions import LDGError
from ldg.problems import PROBLEMS
from ldg.study import RunConfig, run_study

logger = logging.getLogger('ldg.commands')

USAGE_ERROR = 2
FAILURE = 1


def _degrees(value: str):
    try:
        return [int(part) for part in value.split(',') if part.strip()]
    except ValueError:
        raise CommandError(f"--degrees expects a comma-separated list of integers, got '{value}'",
                           returncode=USAGE_ERROR) from None


class Command(BaseCommand):
    help = "Run a p-Laplace LDG convergence study, or the property suites with --checks."

    def add_arguments(self, parser):
        parser.add_argument('--problem', help=f"one of: {', '.join(PROBLEMS)}")
        parser.add_argument('--p', type=float, default=None, help='exponent p (problem default if omitted)')
        parser.add_argument('--sigma', type=float, default=None, help='radial exponent of the regular case')
        parser.add_argument('--degrees', default='1', help='comma-separated polynomial degrees, e.g. 1,2,3')
        parser.add_argument('--levels', type=int, default=settings.LDG_LEVELS, help='number of meshes')
        parser.add_argument('--eta', type=float, default=settings.LDG_ETA)
        parser.add_argument('--eps', type=float, default=settings.LDG_EPS)
        parser.add_argument('--tol-w', type=float, default=settings.LDG_TOL_W)
        parser.add_argument('--tol-rho', type=float, default=settings.LDG_TOL_RHO)
        parser.add_argument('--max-iters', type=int, default=settings.LDG_MAX_ITERS)
        parser.add_argument('--out', default=str(settings.LDG_OUTPUT_DIR))
        parser.add_argument('--seed', type=int, default=settings.LDG_SEED, help='seed of the --checks suites')
        parser.add_argument('--checks', action='store_true', help='run the property and oracle suites')
        parser.add_argument('--linear-solver', choices=['cg', 'direct'], default=settings.LDG_LINEAR_SOLVER)
        parser.add_argument('--no-timing', action='store_true', help='write 0 in the seconds column')
        parser.add_argument('--write-meshes', action='store_true', help='also write mesh_l{level}.txt per level')

    def handle(self, *args, **options):
        if options['checks']:
            return self._checks(options['seed'])
        if not options['problem']:
            raise CommandError("--problem is required unless --checks is given", returncode=USAGE_ERROR)

        try:
            cfg = RunConfig(
                problem=options['problem'], p=options['p'], sigma=options['sigma'],
                degrees=_degrees(options['degrees']), levels=options['levels'], eta=options['eta'],
                eps=options['eps'], tol_w=options['tol_w'], tol_rho=options['tol_rho'],
                max_iters=options['max_iters'], out=options['out'],
                linear_solver=options['linear_solver'], timing=not options['no_timing'],
                write_meshes=options['write_meshes'],
            )
        except ValidationError as e:
            raise CommandError(f"invalid configuration: {e}", returncode=USAGE_ERROR) from e

        try:
            report = run_study(cfg)
        except ValueError as e:
            raise CommandError(str(e), returncode=USAGE_ERROR) from e
        except LDGError as e:
            logger.error(f"❌ Study failed: {e}")
            raise CommandError(f"study failed: {e}", returncode=FAILURE) from e

        for k, results in report.tables.items():
            finest = results[-1]
            self.stdout.write(
                f"k={k}: Ne={finest.n_elements} err_u={finest.err_u:.4e} err_q={finest.err_q:.4e} "
                f"err_sigma={finest.err_sigma:.4e} iters={finest.iters}"
            )
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(report.files)} files to {cfg.out}"))

    def _checks(self, seed: int):
        summary = run_checks(seed)
        for outcome in summary.outcomes:
            status = 'PASS' if outcome.passed else 'FAIL'
            self.stdout.write(f"{status} {outcome.suite}: {outcome.name} {outcome.detail}".rstrip())
        if not summary.passed:
            raise CommandError(f"{len(summary.failures)} checks failed", returncode=FAILURE)
        self.stdout.write(self.style.SUCCESS(f"{len(summary.outcomes)} checks passed"))
