# momentstab/cli.py

"""
Command line front end.

    momentstab validate SYSTEM
    momentstab analyze SYSTEM
    momentstab rate SYSTEM [--tol T]
    momentstab certify SYSTEM [--lambda L] [--method M]
    momentstab simulate SYSTEM --paths N --horizon H --seed S
               [--x0 v] [--prior p] [--fit] [--sampler s] [--workers K]

Every subcommand also takes --format {text,json}, --emit-certificate,
--profile, --timing, --output FILE and -v.  The exit status is a
function of the verdict: 0 stable (or no verdict), 1 unstable,
2 boundary/unknown, 3 input error.
"""

import argparse
import logging
import math
import sys
import time

import numpy as np

from .common import EXIT_INPUT_ERROR, MomentStabError, Verdict
from . import lyapunov
from . import moment_operator
from . import settings
from . import simulate
from .report import Report
from .system_model import (PolytopicMartingaleModel, load_system, parse_prior,
                           validate)

logger = logging.getLogger("momentstab.cli")

DEFAULT_METHODS = {
    'iid': 'stein',
    'periodic_iid': 'stein',
    'markov': 'coupled',
    'polytopic_martingale': 's-variable',
}

DECISION_VERDICTS = {
    lyapunov.DecisionStatus.FEASIBLE: Verdict.STABLE,
    lyapunov.DecisionStatus.INFEASIBLE: Verdict.UNSTABLE,
    lyapunov.DecisionStatus.BOUNDARY: Verdict.BOUNDARY,
    lyapunov.DecisionStatus.UNKNOWN: Verdict.UNKNOWN,
}


class UsageError(MomentStabError):
    description = 'Usage error'


class _Parser(argparse.ArgumentParser):

    def error(self, message):
        raise UsageError(message)


FORMATS = ('text', 'json')

common = argparse.ArgumentParser(add_help=False)
common.add_argument(
    '--format', choices=FORMATS,
    help="Report format (default text)")
common.add_argument(
    '--emit-certificate', action='store_true', dest='emit_certificate',
    help="Include certificate matrices in the report")
common.add_argument(
    '--profile', choices=sorted(settings.PROFILES), default=settings.DEFAULT_PROFILE,
    help="Tolerance profile")
common.add_argument(
    '--timing', action='store_true',
    help="Add wall-clock timing to the report")
common.add_argument(
    '-o', '--output', metavar='FILE',
    help="Also write the report to FILE")
common.add_argument(
    '-v', '--verbose', action='count', default=0,
    help="Log to stderr (repeat for debug output)")

parser = _Parser(prog='momentstab',
                 description="Mean-square stability of stochastic linear systems")
# also accepted before the subcommand; the subcommand's value wins
parser.add_argument(
    '--format', choices=FORMATS, dest='global_format',
    help="Report format (default text)")
parser.add_argument(
    '--emit-certificate', action='store_true', dest='global_emit_certificate',
    help="Include certificate matrices in the report")
commands = parser.add_subparsers(dest='command', metavar='COMMAND',
                                 parser_class=_Parser)
commands.required = True

p = commands.add_parser('validate', parents=[common],
                        help="Check a system file and report M1/M3 bounds")
p.add_argument('system')

p = commands.add_parser('analyze', parents=[common],
                        help="Spectral radius of the second-moment operator")
p.add_argument('system')

p = commands.add_parser('rate', parents=[common],
                        help="Bracket the optimal decay rate lambda_min")
p.add_argument('system')
p.add_argument('--tol', type=float, help="Bracket width (default from profile)")

p = commands.add_parser('certify', parents=[common],
                        help="Solve a Lyapunov inequality at a given rate")
p.add_argument('system')
p.add_argument('--lambda', type=float, dest='lam',
               help="Rate in (0, 1); default the midpoint of the rate bracket")
p.add_argument('--method', choices=lyapunov.METHODS,
               help="Certificate form (default by model type)")

p = commands.add_parser('simulate', parents=[common],
                        help="Monte Carlo estimate of E|x_k|^2")
p.add_argument('system')
p.add_argument('--paths', type=int, required=True)
p.add_argument('--horizon', type=int, required=True)
p.add_argument('--seed', type=int, required=True)
p.add_argument('--x0', help="Comma separated initial state")
p.add_argument('--prior', help="Previous mode, mode distribution, simplex point or phase")
p.add_argument('--fit', action='store_true', help="Fit the decay rate")
p.add_argument('--sampler', choices=simulate.SAMPLERS, default='polya')
p.add_argument('--workers', type=int,
               help="Worker threads (default %s, 0 = one per CPU)" % settings.THREADS_ENV)
del p


def _floats(text, what):
    try:
        return np.array([float(v) for v in text.split(',')])
    except ValueError:
        raise UsageError('cannot read %s %r' % (what, text))


def _operator_verdict(rho, band):
    if rho < 1.0 - band:
        return Verdict.STABLE
    if rho > 1.0 + band:
        return Verdict.UNSTABLE
    return Verdict.BOUNDARY


def cmd_validate(s, options, profile):
    report = validate(s)
    return None, {'ok': report.ok, 'm1_bound': report.m1_bound,
                  'm3_bound': report.m3_bound}, None, report.messages


def cmd_analyze(s, options, profile):
    op = moment_operator.lift(s)
    rho = moment_operator.second_moment_radius(s)
    per_step = moment_operator.per_step_radius(s)
    numbers = {'rho': rho, 'rho_per_step': per_step,
               'steps_per_application': op.steps_per_application,
               'operator_dim': op.dim, 'lambda_estimate': math.sqrt(per_step)}
    return _operator_verdict(per_step, profile['boundary_band']), numbers, None, []


def cmd_rate(s, options, profile):
    bracket = lyapunov.lambda_min(s, options.tol, profile)
    numbers = bracket.to_dict()
    numbers['tol'] = profile['bisect_tol'] if options.tol is None else options.tol
    numbers['cross_check'] = bracket.contains_operator_rate(numbers['tol'] + 1e-7)
    if bracket.exponentially_stable:
        return Verdict.STABLE, numbers, None, []
    return (_operator_verdict(bracket.rho, profile['boundary_band']), numbers, None,
            ['not exponentially stable'])


def cmd_certify(s, options, profile):
    method = options.method or DEFAULT_METHODS[s.kind]
    lam = options.lam
    messages = []
    if lam is None:
        if isinstance(s, PolytopicMartingaleModel):
            raise UsageError('--lambda is required for a polytopic_martingale model')
        bracket = lyapunov.lambda_min(s, None, profile)
        if not bracket.exponentially_stable:
            raise UsageError('--lambda is required: no rate below 1 exists for this system')
        lam = 0.5 * (bracket.lo + bracket.hi)
        messages.append('lambda defaulted to the midpoint of [%r, %r]'
                        % (bracket.lo, bracket.hi))
    decision = lyapunov.decide(s, lam, method, profile)
    numbers = {'lambda': decision.lam, 'method': method,
               'status': decision.status.value, 'rho_per_step': decision.rho}
    if decision.reason:
        messages.append(decision.reason)
    verdict = DECISION_VERDICTS[decision.status]
    if verdict is Verdict.UNKNOWN and decision.rho is not None:
        # lift classes: the operator settles stability at this rate
        verdict = Verdict.STABLE
    certificate = None
    if decision.certificate is not None:
        cert = decision.certificate
        lo, hi, eps = cert.margins
        numbers.update(underline_eps=lo, overline_eps=hi, eps=eps,
                       iterations=cert.iterations)
        certificate = cert.to_dict(with_blocks=options.emit_certificate)
    return verdict, numbers, certificate, messages


def cmd_simulate(s, options, profile):
    x0 = None if options.x0 is None else _floats(options.x0, 'x0')
    init = parse_prior(s, options.prior, x0)
    params = simulate.SimParams(paths=options.paths, horizon=options.horizon,
                                master_seed=options.seed, initial=init,
                                sampler=options.sampler, workers=options.workers)
    curve = simulate.estimate_second_moment(s, params, profile)
    numbers = {'curve': curve.to_dict(), 'initial': init.to_dict()}
    messages = []
    if curve.diverged:
        messages.append('second moment exceeded %g; curve truncated at k=%d'
                        % (profile['divergence_bound'], len(curve.values)))
    if options.fit:
        try:
            numbers['fit'] = simulate.estimate_decay_rate(curve).to_dict()
        except MomentStabError as e:
            numbers['fit'] = None
            messages.append(str(e))
    return None, numbers, None, messages


COMMANDS = {
    'validate': cmd_validate,
    'analyze': cmd_analyze,
    'rate': cmd_rate,
    'certify': cmd_certify,
    'simulate': cmd_simulate,
}

# options that change the answer, echoed in the report
ECHOED = ('system', 'tol', 'lam', 'method', 'paths', 'horizon', 'seed', 'x0',
          'prior', 'fit', 'sampler', 'profile')


def _echo(options):
    out = {'name': options.command}
    for key in ECHOED:
        value = getattr(options, key, None)
        if value is not None:
            out['lambda' if key == 'lam' else key] = value
    return out


def _resolve_global_flags(options):
    options.format = options.format or options.global_format or 'text'
    options.emit_certificate = (options.emit_certificate
                                or options.global_emit_certificate)


def _configure_logging(verbose):
    level = logging.WARNING
    if verbose == 1:
        level = logging.INFO
    elif verbose > 1:
        level = logging.DEBUG
    root = logging.getLogger("momentstab")
    root.setLevel(level)
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter('%(name)s: %(levelname)s: %(message)s'))
        root.addHandler(handler)


def make_report(options):
    profile = settings.get_profile(options.profile)
    start = time.perf_counter()
    s = load_system(options.system, profile['renorm_tol'])
    verdict, numbers, certificate, messages = COMMANDS[options.command](s, options, profile)
    report = Report(command=_echo(options), model=s.summary(), verdict=verdict,
                    numbers=numbers, certificate=certificate, messages=messages)
    if options.timing:
        report.timing = {'seconds': time.perf_counter() - start}
    return report


def run(argv, out=None, err=None):
    """Run one command; returns the exit status."""
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        options = parser.parse_args(argv)
        _resolve_global_flags(options)
        _configure_logging(options.verbose)
        report = make_report(options)
    except (MomentStabError, OSError) as e:
        err.write('momentstab: %s\n' % e)
        return EXIT_INPUT_ERROR
    text = report.to_json() if options.format == 'json' else report.to_text() + '\n'
    out.write(text)
    if options.output:
        try:
            with open(options.output, 'w', encoding='utf-8') as f:
                f.write(text)
        except OSError as e:
            err.write('momentstab: %s\n' % e)
            return EXIT_INPUT_ERROR
    return report.exit_code


def main(argv=None):
    return run(sys.argv[1:] if argv is None else argv)
