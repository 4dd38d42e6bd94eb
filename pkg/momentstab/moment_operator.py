# momentstab/moment_operator.py

"""
Exact second-moment propagation for the classes that have one.

For an i.i.d. process Q_{k+1} = sum_i p_i A_i Q_k A_i^T, so with the
column-stacking vec the operator is T = sum_i p_i kron(A_i, A_i):

    >>> from momentstab.system_model import parse_system
    >>> s = parse_system('{"type":"iid","n":1,"modes":[[[1]],[[-1]]],"probs":[0.5,0.5]}')
    >>> lift_iid(s).matrix
    array([[1.]])
    >>> second_moment_radius(parse_system(
    ...     '{"type":"iid","n":2,"modes":[[[0.5,0],[0,0.5]]],"probs":[1]}'))
    0.25

Markov jump systems carry one block per mode,
Q_i(k) = E[x_k x_k^T 1{mode_k = i}], and
Q_j(k+1) = sum_i transition[i][j] A_i Q_i(k) A_i^T.

Polytopic martingale systems have no exact operator; they are
analysed through certificates and simulation only.
"""

import dataclasses
import logging

import numpy as np

from .common import ModelError
from . import linalg
from .system_model import (IIDModel, MarkovJumpModel, PeriodicIIDModel,
                           PolytopicMartingaleModel, check_initial)

logger = logging.getLogger("momentstab.moment_operator")


@dataclasses.dataclass(frozen=True, eq=False)
class MomentOperator:
    n: int
    blocks: int                  # m for markov, 1 otherwise
    matrix: np.ndarray
    class_tag: str
    steps_per_application: int = 1

    @property
    def dim(self):
        return self.matrix.shape[0]


def step_lift(modes, probs):
    """sum_i p_i kron(A_i, A_i) for one i.i.d. step."""
    n = modes.shape[1]
    t = np.zeros((n * n, n * n))
    for a, p in zip(modes, probs):
        if p:
            t += p * linalg.kron(a, a)
    return t


def lift_iid(s):
    if not isinstance(s, IIDModel):
        raise ModelError('lift_iid needs an iid model, got %s' % s.kind)
    return MomentOperator(n=s.n, blocks=1, matrix=step_lift(s.modes, s.probs),
                          class_tag='iid')


def lift_markov(s):
    if not isinstance(s, MarkovJumpModel):
        raise ModelError('lift_markov needs a markov model, got %s' % s.kind)
    n2 = s.n * s.n
    m = s.num_modes
    big = np.zeros((m * n2, m * n2))
    for i in range(m):
        k = linalg.kron(s.modes[i], s.modes[i])
        for j in range(m):
            # block (target j, source i)
            big[j * n2:(j + 1) * n2, i * n2:(i + 1) * n2] = s.transition[i, j] * k
    return MomentOperator(n=s.n, blocks=m, matrix=big, class_tag='markov')


def lift_periodic(s):
    """Monodromy T_{N-1} ... T_0 of the per-step lifts."""
    if not isinstance(s, PeriodicIIDModel):
        raise ModelError('lift_periodic needs a periodic_iid model, got %s' % s.kind)
    t = np.eye(s.n * s.n)
    for k in range(s.period):
        t = step_lift(s.modes[k], s.probs[k]) @ t
    return MomentOperator(n=s.n, blocks=1, matrix=t, class_tag='periodic_iid',
                          steps_per_application=s.period)


def lift(s):
    if isinstance(s, IIDModel):
        return lift_iid(s)
    if isinstance(s, MarkovJumpModel):
        return lift_markov(s)
    if isinstance(s, PeriodicIIDModel):
        return lift_periodic(s)
    if isinstance(s, PolytopicMartingaleModel):
        raise ModelError('exact operator unavailable for %s; use certify or simulate'
                         % s.kind)
    raise ModelError('unsupported model %r' % (s,))


def second_moment_radius(s):
    """Spectral radius of the lifted operator (per application)."""
    op = lift(s)
    rho = linalg.spectral_radius(op.matrix)
    logger.debug("%s lift of dim %d: rho = %.17g", op.class_tag, op.dim, rho)
    return rho


def per_step_radius(s):
    """rho^(1/N): the per-step squared decay rate."""
    op = lift(s)
    rho = linalg.spectral_radius(op.matrix)
    if op.steps_per_application == 1:
        return rho
    return rho ** (1.0 / op.steps_per_application)


def propagate(op, blocks):
    """Apply the operator to a list of n x n second-moment blocks."""
    if len(blocks) != op.blocks:
        raise ModelError('operator acts on %d blocks, got %d'
                         % (op.blocks, len(blocks)))
    v = np.concatenate([linalg.vec(b) for b in blocks])
    w = op.matrix @ v
    n2 = op.n * op.n
    return [linalg.unvec(w[i * n2:(i + 1) * n2], op.n) for i in range(op.blocks)]


def initial_blocks(s, init):
    """Q_i(k0) = Pr(mode_k0 = i | prior) x0 x0^T for markov models."""
    init = check_initial(s, init)
    q0 = np.outer(init.x0, init.x0)
    if isinstance(s, MarkovJumpModel):
        return [p * q0 for p in init.first_mode_distribution(s)]
    return [q0]


def exact_second_moments(s, init, horizon):
    """
    E_0[|x_k|^2] for k = 0..horizon by iterating the per-step lifts.
    Periodic models start at the phase carried by `init`.
    """
    init = check_initial(s, init)
    blocks = initial_blocks(s, init)
    values = [float(sum(np.trace(b) for b in blocks))]
    if isinstance(s, PeriodicIIDModel):
        steps = [MomentOperator(n=s.n, blocks=1, class_tag='periodic_iid',
                                matrix=step_lift(s.modes[k], s.probs[k]))
                 for k in range(s.period)]
        for t in range(horizon):
            blocks = propagate(steps[(init.phase + t) % s.period], blocks)
            values.append(float(np.trace(blocks[0])))
        return values
    op = lift(s)
    for _ in range(horizon):
        blocks = propagate(op, blocks)
        values.append(float(sum(np.trace(b) for b in blocks)))
    return values


def adjoint_operator(s, form='p'):
    """
    Stacked matrix of the Lyapunov fixed-point map acting on vec'd
    Lyapunov blocks, so that the fixed point reads
    P = I + lambda^-2 * (adjoint @ P).

    i.i.d. / periodic (P-form): block (k, k+1 mod N) = T_k^T
    markov P-form:  P_j <- sum_i transition[j][i] A_i^T P_i A_i
    markov R-form:  R_j <- A_j^T (sum_i transition[j][i] R_i) A_j
    """
    if isinstance(s, IIDModel):
        return lift_iid(s).matrix.T.copy()
    if isinstance(s, PeriodicIIDModel):
        n2 = s.n * s.n
        big = np.zeros((s.period * n2, s.period * n2))
        for k in range(s.period):
            nxt = (k + 1) % s.period
            big[k * n2:(k + 1) * n2, nxt * n2:(nxt + 1) * n2] = \
                step_lift(s.modes[k], s.probs[k]).T
        return big
    if isinstance(s, MarkovJumpModel):
        if form == 'r':
            return lift_markov(s).matrix.T.copy()
        if form != 'p':
            raise ModelError('unknown Lyapunov form %r' % form)
        n2 = s.n * s.n
        m = s.num_modes
        big = np.zeros((m * n2, m * n2))
        for i in range(m):
            kt = linalg.kron(s.modes[i], s.modes[i]).T
            for j in range(m):
                big[j * n2:(j + 1) * n2, i * n2:(i + 1) * n2] = s.transition[j, i] * kt
        return big
    raise ModelError('no Lyapunov fixed-point map for %s' % s.kind)
