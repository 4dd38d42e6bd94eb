# momentstab/lyapunov.py

"""
Lyapunov-inequality certificates and the optimal decay rate.

The equality-structured conditions (i.i.d., periodic, Markov) are
solved as Stein fixed points

    P = I + lambda^-2 L*(P)

where L* is the Lyapunov map of the class.  The series converges
exactly when rho(L*) < lambda^2, so convergence is the certificate and
divergence is the refutation; no SDP is involved.  The constant-P and
vertex conditions go through `lmi_solver`.

    >>> from momentstab.system_model import make_iid
    >>> cert = solve_stein_iid(make_iid([[[0.5]]], [1.0]), 0.6)
    >>> round(float(cert.blocks['P'][0, 0]) * 11, 9)
    36.0
    >>> solve_stein_iid(make_iid([[[0.5]]], [1.0]), 0.4) is None
    True
"""

import dataclasses
import enum
import logging
import math
from typing import Dict, Optional, Tuple

import numpy as np

from .common import ConvergenceError, SolverError, check_rate
from . import linalg
from . import lmi_solver
from .moment_operator import adjoint_operator, per_step_radius
from .settings import get_profile
from .system_model import (IIDModel, MarkovJumpModel, PeriodicIIDModel,
                           PolytopicMartingaleModel, embed_iid_as_markov)

logger = logging.getLogger("momentstab.lyapunov")

# upper end of the rate search; lambda = 1 itself is never a rate
LAMBDA_CEILING = 1.0 - 1e-9
SERIES_RTOL = 1e-14
# exp(-2048) underflows, so polynomial transients of any lift size are gone
CONTRACTION_HORIZON = 2048.0


class CertKind(str, enum.Enum):
    PFORM = 'PForm'
    RFORM_COUPLED = 'RFormCoupled'
    CONSTANT_P = 'ConstantP'
    SVARIABLE = 'SVariable'
    GFORM = 'GForm'


# blocks that are auxiliary variables, not Lyapunov matrices
AUX_BLOCKS = ('S', 'G')


@dataclasses.dataclass(frozen=True, eq=False)
class StabilityCertificate:
    kind: CertKind
    lam: float
    blocks: Dict[str, np.ndarray]
    margins: Tuple[float, float, float]   # (underline_eps, overline_eps, eps)
    iterations: int = 0

    def lyapunov_blocks(self):
        return {k: v for k, v in self.blocks.items() if k not in AUX_BLOCKS}

    def to_dict(self, with_blocks=False):
        lo, hi, eps = self.margins
        out = {'kind': self.kind.value, 'lambda': self.lam,
               'margins': {'underline_eps': lo, 'overline_eps': hi, 'eps': eps},
               'iterations': self.iterations}
        if with_blocks:
            out['blocks'] = {k: v.tolist() for k, v in sorted(self.blocks.items())}
        return out


class DecisionStatus(str, enum.Enum):
    FEASIBLE = 'feasible'
    INFEASIBLE = 'infeasible'
    BOUNDARY = 'boundary'
    UNKNOWN = 'unknown'


@dataclasses.dataclass
class Decision:
    status: DecisionStatus
    method: str
    lam: float
    certificate: Optional[StabilityCertificate] = None
    rho: Optional[float] = None
    reason: str = ''


@dataclasses.dataclass
class RateBracket:
    lo: float
    hi: float
    exponentially_stable: bool
    evaluations: int
    rho: Optional[float] = None

    def contains_operator_rate(self, slack):
        if self.rho is None:
            return True
        root = math.sqrt(self.rho)
        return self.lo - slack <= root <= self.hi + slack

    def to_dict(self):
        out = dataclasses.asdict(self)
        out['sqrt_rho'] = None if self.rho is None else math.sqrt(self.rho)
        return out


########################################
## Lyapunov maps, evaluated from the model
########################################

def _block_names(prefix, count):
    return ['%s%d' % (prefix, i) for i in range(count)]


def lyapunov_map(s, blocks, form='p'):
    """
    L*(P) block by block from the mode matrices (no Kronecker lift).

    i.i.d.:   sum_i p_i A_i^T P A_i
    periodic: P_k -> sum_i p_ki A_ki^T P_{k+1} A_ki
    markov p: P_j -> sum_i pi[j][i] A_i^T P_i A_i
    markov r: R_j -> A_j^T (sum_i pi[j][i] R_i) A_j
    """
    if isinstance(s, IIDModel):
        p = blocks[0]
        return [sum(w * a.T @ p @ a for a, w in zip(s.modes, s.probs))]
    if isinstance(s, PeriodicIIDModel):
        out = []
        for k in range(s.period):
            nxt = blocks[(k + 1) % s.period]
            out.append(sum(w * a.T @ nxt @ a for a, w in zip(s.modes[k], s.probs[k])))
        return out
    if isinstance(s, MarkovJumpModel):
        m = s.num_modes
        if form == 'r':
            return [s.modes[j].T @ sum(s.transition[j, i] * blocks[i] for i in range(m))
                    @ s.modes[j] for j in range(m)]
        inner = [a.T @ p @ a for a, p in zip(s.modes, blocks)]
        return [sum(s.transition[j, i] * inner[i] for i in range(m)) for j in range(m)]
    raise SolverError('no Lyapunov map for %s' % s.kind)


def residual_blocks(s, cert):
    """
    The defining inequality of the certificate, recomputed from the
    model; every returned matrix must be positive definite.
    """
    lam2 = cert.lam ** 2
    b = cert.blocks
    if cert.kind in (CertKind.PFORM, CertKind.RFORM_COUPLED):
        if isinstance(s, IIDModel) and 'P' not in b:
            s = embed_iid_as_markov(s)
        if isinstance(s, IIDModel):
            names = ['P']
        else:
            names = _block_names('R' if cert.kind is CertKind.RFORM_COUPLED else 'P',
                                 s.period if isinstance(s, PeriodicIIDModel)
                                 else s.num_modes)
        form = 'r' if cert.kind is CertKind.RFORM_COUPLED else 'p'
        ps = [b[nm] for nm in names]
        mapped = lyapunov_map(s, ps, form)
        return {nm: lam2 * p - q for nm, p, q in zip(names, ps, mapped)}
    if cert.kind is CertKind.CONSTANT_P:
        p = b['P']
        if isinstance(s, IIDModel):
            return {'P': lam2 * p - lyapunov_map(s, [p])[0]}
        if isinstance(s, PeriodicIIDModel):
            return {'step %d' % k: lam2 * p - q
                    for k, q in enumerate(lyapunov_map(s, [p] * s.period))}
        if isinstance(s, MarkovJumpModel):
            return {'mode %d' % j: lam2 * p - q
                    for j, q in enumerate(lyapunov_map(s, [p] * s.num_modes))}
        return {'vertex %d' % i: lam2 * p - a.T @ p @ a
                for i, a in enumerate(s.vertices)}
    if cert.kind in (CertKind.SVARIABLE, CertKind.GFORM):
        n = s.n
        out = {}
        for i, a in enumerate(s.vertices):
            r = b['R%d' % i]
            if cert.kind is CertKind.SVARIABLE:
                m = np.block([[lam2 * r, np.zeros((n, n))],
                              [np.zeros((n, n)), -r]])
                m = m + linalg.he(b['S'] @ np.hstack([a, np.eye(n)]))
            else:
                g = b['G']
                m = np.block([[lam2 * r, a.T @ g.T], [g @ a, g + g.T - r]])
            out['vertex %d' % i] = m
        return out
    raise SolverError('unknown certificate kind %r' % (cert.kind,))


def verify_certificate(s, cert):
    """
    (underline_eps, overline_eps, eps): extreme eigenvalues of the
    Lyapunov blocks and the smallest residual eigenvalue, all through
    the Jacobi kernel.
    """
    lo, hi = math.inf, -math.inf
    for blk in cert.lyapunov_blocks().values():
        a, b = linalg.sym_eig_extremes(linalg.symmetrize(blk))
        lo, hi = min(lo, a), max(hi, b)
    eps = min(linalg.sym_eig_extremes(linalg.symmetrize(r))[0]
              for r in residual_blocks(s, cert).values())
    return lo, hi, eps


def _checked(s, cert):
    margins = verify_certificate(s, cert)
    cert = dataclasses.replace(cert, margins=margins)
    if margins[0] <= 0.0 or margins[2] <= 0.0:
        logger.info("%s certificate at lambda=%.9g failed re-verification: %s",
                    cert.kind.value, cert.lam, margins)
        return None
    return cert


########################################
## Stein fixed points
########################################

def _stacked_trace(v, n, count):
    return float(v.reshape(count, n * n)[:, ::n + 1].sum())


def stein_series(adjoint, n, count, lam, feas_tol, max_sweeps):
    """
    Sum the series sum_k (lambda^-2 L*)^k I by doubling: sweep j adds
    M^(2^(j-1)) times the partial sum and squares the power, so the
    iterate after j sweeps is the plain fixed-point iterate 2^j.

    The powers M^(2^j) vanish exactly when rho(M) < 1.  Once 2^j exceeds
    CONTRACTION_HORIZON / feas_tol terms, any M with
    rho(M) <= 1 - feas_tol has contracted below every transient, so a
    series still moving then (or overflowing before) has rho(M) above
    1 - feas_tol.  Returns (stacked vec of P, sweeps), or (None, sweeps)
    in that case.
    """
    power = adjoint / (lam * lam)
    total = np.concatenate([linalg.vec(np.eye(n))] * count)
    terms = 1.0
    with np.errstate(over='ignore', invalid='ignore'):
        for sweep in range(1, max_sweeps + 1):
            inc = power @ total
            total = total + inc
            terms *= 2.0
            if not (np.all(np.isfinite(total)) and np.all(np.isfinite(power))):
                logger.debug("Stein series overflowed after %d sweeps", sweep)
                return None, sweep
            if np.max(np.abs(inc)) <= SERIES_RTOL * np.max(np.abs(total)):
                logger.debug("Stein series converged after %d sweeps (trace %.6g)",
                             sweep, _stacked_trace(total, n, count))
                return total, sweep
            if terms * feas_tol > CONTRACTION_HORIZON:
                logger.debug("Stein series still moving after 2^%d terms "
                             "(trace %.3e)", sweep, _stacked_trace(total, n, count))
                return None, sweep
            power = power @ power
    raise ConvergenceError('Stein iteration neither converged nor diverged in %d sweeps'
                           % max_sweeps)


def _stein_certificate(s, lam, form, kind, prefix, profile):
    profile = profile or get_profile()
    lam = check_rate(lam)
    adj = adjoint_operator(s, form)
    count = adj.shape[0] // (s.n * s.n)
    total, sweeps = stein_series(adj, s.n, count, lam, profile['feas_tol'],
                                 profile['stein_max_iter'])
    if total is None:
        return None
    n2 = s.n * s.n
    mats = [linalg.symmetrize(linalg.unvec(total[i * n2:(i + 1) * n2], s.n))
            for i in range(count)]
    names = ['P'] if isinstance(s, IIDModel) else _block_names(prefix, count)
    cert = StabilityCertificate(kind=kind, lam=lam, blocks=dict(zip(names, mats)),
                                margins=(0.0, 0.0, 0.0), iterations=sweeps)
    return _checked(s, cert)


def solve_stein_iid(s, lam, profile=None):
    """P (or the cyclic P_0..P_{N-1}) for an i.i.d. or periodic model."""
    if not isinstance(s, (IIDModel, PeriodicIIDModel)):
        raise SolverError('stein needs an iid or periodic_iid model, got %s' % s.kind)
    return _stein_certificate(s, lam, 'p', CertKind.PFORM, 'P', profile)


def _as_markov(s, what):
    if isinstance(s, IIDModel):
        return embed_iid_as_markov(s)
    if not isinstance(s, MarkovJumpModel):
        raise SolverError('%s needs a markov (or iid) model, got %s' % (what, s.kind))
    return s


def solve_coupled_markov(s, lam, profile=None):
    """R_j = I + lambda^-2 A_j^T (sum_i pi[j][i] R_i) A_j."""
    s = _as_markov(s, 'coupled')
    return _stein_certificate(s, lam, 'r', CertKind.RFORM_COUPLED, 'R', profile)


def solve_pform_markov(s, lam, profile=None):
    """P_j = I + lambda^-2 sum_i pi[j][i] A_i^T P_i A_i."""
    s = _as_markov(s, 'pform')
    return _stein_certificate(s, lam, 'p', CertKind.PFORM, 'P', profile)


def class_solver(s):
    if isinstance(s, (IIDModel, PeriodicIIDModel)):
        return solve_stein_iid
    if isinstance(s, MarkovJumpModel):
        return solve_coupled_markov
    raise SolverError('no exact rate solver for %s; use certify or simulate' % s.kind)


def lambda_min(s, tol=None, profile=None):
    """
    Bisection on the class solver.  The answer is a bracket: the solver
    is infeasible at lo (or lo = 0) and feasible at hi.
    """
    profile = profile or get_profile()
    tol = profile['bisect_tol'] if tol is None else float(tol)
    if not tol > 0.0:
        raise SolverError('tol must be positive, got %r' % tol)
    solve = class_solver(s)
    rho = per_step_radius(s)
    evaluations = 1
    if solve(s, LAMBDA_CEILING, profile) is None:
        logger.info("infeasible at lambda=%.12g: not exponentially stable", LAMBDA_CEILING)
        return RateBracket(1.0, 1.0, False, evaluations, rho)
    lo, hi = 0.0, LAMBDA_CEILING
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        evaluations += 1
        if solve(s, mid, profile) is None:
            lo = mid
        else:
            hi = mid
    logger.debug("lambda_min in [%.12g, %.12g] after %d solves", lo, hi, evaluations)
    return RateBracket(lo, hi, True, evaluations, rho)


########################################
## Constant P and vertex conditions
########################################

def _from_feas(result, kind, lam, s):
    if not result.feasible:
        return None
    cert = StabilityCertificate(kind=kind, lam=lam, blocks=result.blocks,
                                margins=(0.0, 0.0, 0.0), iterations=result.iterations)
    return _checked(s, cert)


def _solver_opts(profile):
    return {'max_iter': profile['lmi_max_iter'], 'margin': profile['lmi_margin'],
            'patience': profile['lmi_patience']}


def quadratic_problem(s, lam):
    """One P with lambda^2 P - E_j[A^T P A] >= t I for every mode/step j."""
    n = s.n
    count = s.period if isinstance(s, PeriodicIIDModel) else s.num_modes
    label = 'step' if isinstance(s, PeriodicIIDModel) else 'mode'
    b = lmi_solver.LMIBuilder()
    b.sym_var('P', n)
    for j in range(count):
        b.constraint('%s %d' % (label, j),
                     lambda v, j=j: lam * lam * v['P']
                     - lyapunov_map(s, [v['P']] * count)[j])
    b.constraint('P > 0', lambda v: v['P'])
    b.normalize_trace(['P'], n)

    def exponential_necessary():
        rho = per_step_radius(s)
        if rho >= lam * lam:
            return 'per-step second-moment radius %.9g >= lambda^2 = %.9g' % (rho, lam * lam)
        return None
    b.precheck('exponential stability', exponential_necessary)
    b.start(P=np.eye(n))
    return b.build()


def check_quadratic(s, lam, profile=None):
    """
    Constant-P certificate.  For i.i.d. models quadratic and exponential
    stability coincide and the Stein solution is returned.
    """
    profile = profile or get_profile()
    lam = check_rate(lam)
    if isinstance(s, IIDModel):
        cert = solve_stein_iid(s, lam, profile)
        return None if cert is None else dataclasses.replace(cert, kind=CertKind.CONSTANT_P)
    if isinstance(s, PolytopicMartingaleModel):
        result = lmi_solver.common_lyapunov_certificate(s, lam, **_solver_opts(profile))
    else:
        result = lmi_solver.solve_feasibility(quadratic_problem(s, lam),
                                              **_solver_opts(profile))
    if not result.feasible:
        logger.info("no constant-P certificate at lambda=%.9g: %s", lam, result.reason)
    return _from_feas(result, CertKind.CONSTANT_P, lam, s)


MARTINGALE_METHODS = {
    's-variable': (lmi_solver.martingale_vertex_certificate, CertKind.SVARIABLE),
    'g-form': (lmi_solver.gform_certificate, CertKind.GFORM),
    'constant-p': (lmi_solver.common_lyapunov_certificate, CertKind.CONSTANT_P),
}


def certify_martingale(s, lambda2, method='s-variable', profile=None):
    """(FeasResult, certificate or None) for a polytopic martingale model."""
    profile = profile or get_profile()
    try:
        solver, kind = MARTINGALE_METHODS[method]
    except KeyError:
        raise SolverError('unknown martingale method %r' % method)
    result = solver(s, lambda2, **_solver_opts(profile))
    return result, _from_feas(result, kind, float(lambda2), s)


########################################
## Decisions with a boundary band
########################################

METHODS = ('stein', 'coupled', 'pform', 'constant-p', 's-variable', 'g-form')


def decide(s, lam, method, profile=None):
    """
    Feasibility of one method at one rate.  Lift classes whose per-step
    radius lies within boundary_band of lambda^2 are reported as
    boundary: the conditions are strict and numerics cannot settle them.
    """
    profile = profile or get_profile()
    lam = check_rate(lam)
    if method not in METHODS:
        raise SolverError('unknown method %r (choose from %s)' % (method, ', '.join(METHODS)))

    if isinstance(s, PolytopicMartingaleModel):
        if method not in MARTINGALE_METHODS:
            raise SolverError('method %s does not apply to a polytopic_martingale model'
                              % method)
        result, cert = certify_martingale(s, lam, method, profile)
        if cert is not None:
            return Decision(DecisionStatus.FEASIBLE, method, lam, cert)
        status = (DecisionStatus.INFEASIBLE if result.status is lmi_solver.FeasStatus.INFEASIBLE
                  else DecisionStatus.UNKNOWN)
        return Decision(status, method, lam, None, reason=result.reason)

    if method in ('s-variable', 'g-form'):
        raise SolverError('method %s needs a polytopic_martingale model' % method)
    solver = {'stein': solve_stein_iid, 'coupled': solve_coupled_markov,
              'pform': solve_pform_markov, 'constant-p': check_quadratic}[method]
    rho = per_step_radius(s)
    lam2 = lam * lam
    if abs(rho - lam2) <= profile['boundary_band']:
        logger.info("rho=%.12g within %.1e of lambda^2=%.12g: boundary",
                    rho, profile['boundary_band'], lam2)
        return Decision(DecisionStatus.BOUNDARY, method, lam, None, rho,
                        reason='|rho - lambda^2| <= %g' % profile['boundary_band'])
    cert = solver(s, lam, profile)
    if cert is not None:
        return Decision(DecisionStatus.FEASIBLE, method, lam, cert, rho)
    if method == 'constant-p' and not isinstance(s, IIDModel) and rho < lam2:
        return Decision(DecisionStatus.UNKNOWN, method, lam, None, rho,
                        reason='no constant-P certificate found; exponentially stable '
                               'at this rate, quadratic stability undecided')
    if rho < lam2:
        # the series converged but its residual did not survive rounding
        return Decision(DecisionStatus.UNKNOWN, method, lam, None, rho,
                        reason='rho=%.9g < lambda^2=%.9g but the certificate failed '
                               're-verification' % (rho, lam2))
    return Decision(DecisionStatus.INFEASIBLE, method, lam, None, rho,
                    reason='rho=%.9g, lambda^2=%.9g' % (rho, lam2))
