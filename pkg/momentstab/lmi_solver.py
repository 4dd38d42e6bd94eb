# momentstab/lmi_solver.py

"""
Feasibility of affine linear matrix inequalities

    F0_c + sum_u x_u F_u,c  >=  t I     (every constraint c)

under one affine normalization a.x = b.  The solver maximizes the
common margin t by projected subgradient ascent on the concave
min-eigenvalue function and re-verifies its best point with the Jacobi
kernel from `linalg`.

It never concludes "infeasible" from a failed ascent.  The only
Infeasible answers come from necessary conditions the problem itself
supplies (`prechecks`); everything else that misses the margin is
Unknown, and Unknown does not mean unstable.

    >>> b = LMIBuilder()
    >>> _ = b.sym_var('P', 2)
    >>> b.constraint('P > 0', lambda v: v['P'])
    >>> b.normalize_trace(['P'], 2.0)
    >>> r = solve_feasibility(b.build())
    >>> r.status.value, round(r.t_star, 6)
    ('feasible', 1.0)
"""

import dataclasses
import enum
import logging
import math
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg as sla

from .common import SolverError, check_rate
from . import linalg
from .system_model import PolytopicMartingaleModel

logger = logging.getLogger("momentstab.lmi_solver")

MAX_TOTAL_DIM = 400
DEFAULT_MAX_ITER = 50000
DEFAULT_MARGIN = 1e-7
DEFAULT_PATIENCE = 4000


class FeasStatus(str, enum.Enum):
    FEASIBLE = 'feasible'
    INFEASIBLE = 'infeasible'
    UNKNOWN = 'unknown'


@dataclasses.dataclass(frozen=True)
class VarBlock:
    name: str
    kind: str            # 'sym' or 'full'
    shape: Tuple[int, int]
    offset: int

    @property
    def size(self):
        r, c = self.shape
        return r * (r + 1) // 2 if self.kind == 'sym' else r * c

    def decode(self, x):
        r, c = self.shape
        vals = x[self.offset:self.offset + self.size]
        if self.kind == 'full':
            return vals.reshape((r, c)).copy()
        m = np.zeros((r, r))
        m[np.triu_indices(r)] = vals
        return m + np.triu(m, 1).T

    def encode(self, m, x):
        m = np.asarray(m, dtype=np.float64)
        if m.shape != self.shape:
            raise SolverError('block %s expects shape %s, got %s'
                              % (self.name, self.shape, m.shape))
        if self.kind == 'full':
            x[self.offset:self.offset + self.size] = m.reshape(-1)
        else:
            x[self.offset:self.offset + self.size] = m[np.triu_indices(self.shape[0])]


@dataclasses.dataclass
class LMIConstraint:
    name: str
    f0: np.ndarray
    coeffs: np.ndarray   # (num_vars, dim, dim)

    @property
    def dim(self):
        return self.f0.shape[0]

    def evaluate(self, x):
        return self.f0 + np.tensordot(x, self.coeffs, axes=1)


@dataclasses.dataclass
class LMIProblem:
    num_vars: int
    constraints: List[LMIConstraint]
    norm_vector: np.ndarray
    norm_value: float
    var_layout: Dict[str, VarBlock]
    prechecks: List[Tuple[str, Callable[[], Optional[str]]]] = dataclasses.field(default_factory=list)
    start: Optional[np.ndarray] = None

    def check(self):
        if sum(c.dim for c in self.constraints) > MAX_TOTAL_DIM:
            raise SolverError('total constraint dimension %d exceeds %d'
                              % (sum(c.dim for c in self.constraints), MAX_TOTAL_DIM))
        used = sum(v.size for v in self.var_layout.values())
        if used != self.num_vars:
            raise SolverError('variable layout covers %d slots, problem has %d'
                              % (used, self.num_vars))
        for c in self.constraints:
            if c.coeffs.shape != (self.num_vars, c.dim, c.dim):
                raise SolverError('constraint %s has coefficient shape %s'
                                  % (c.name, c.coeffs.shape))
            if not (np.allclose(c.f0, c.f0.T) and
                    np.allclose(c.coeffs, np.transpose(c.coeffs, (0, 2, 1)))):
                raise SolverError('constraint %s is not symmetric' % c.name)
        if self.norm_vector.shape != (self.num_vars,) or \
                not np.any(self.norm_vector):
            raise SolverError('normalization is degenerate')


@dataclasses.dataclass
class FeasResult:
    status: FeasStatus
    t_star: float
    assignment: np.ndarray
    reason: str = ''
    iterations: int = 0
    blocks: Dict[str, np.ndarray] = dataclasses.field(default_factory=dict)
    margins: Dict[str, float] = dataclasses.field(default_factory=dict)

    @property
    def feasible(self):
        return self.status is FeasStatus.FEASIBLE


class LMIBuilder:

    """
    Declares matrix unknowns by name and affine constraints as Python
    functions of those blocks.  Coefficients are obtained by probing
    each function at zero and at every unit slot, which is exact for
    affine maps.
    """

    def __init__(self):
        self.layout = {}
        self.num_vars = 0
        self._constraints = []
        self._trace_names = None
        self._trace_total = None
        self.prechecks = []
        self._start = {}

    def _add(self, name, kind, shape):
        if name in self.layout:
            raise SolverError('variable %s declared twice' % name)
        block = VarBlock(name, kind, shape, self.num_vars)
        self.layout[name] = block
        self.num_vars += block.size
        return block

    def sym_var(self, name, n):
        return self._add(name, 'sym', (n, n))

    def full_var(self, name, rows, cols):
        return self._add(name, 'full', (rows, cols))

    def constraint(self, name, fn):
        self._constraints.append((name, fn))

    def normalize_trace(self, names, total):
        for nm in names:
            if self.layout.get(nm) is None or self.layout[nm].kind != 'sym':
                raise SolverError('trace normalization needs symmetric blocks, got %s' % nm)
        self._trace_names = list(names)
        self._trace_total = float(total)

    def precheck(self, description, fn):
        self.prechecks.append((description, fn))

    def start(self, **blocks):
        self._start.update(blocks)

    def decode(self, x):
        return {name: blk.decode(x) for name, blk in self.layout.items()}

    def encode(self, blocks):
        x = np.zeros(self.num_vars)
        for name, m in blocks.items():
            self.layout[name].encode(m, x)
        return x

    def _unit_blocks(self, u):
        x = np.zeros(self.num_vars)
        x[u] = 1.0
        return self.decode(x)

    def build(self):
        if self._trace_names is None:
            raise SolverError('an LMI problem needs a trace normalization')
        zero = self.decode(np.zeros(self.num_vars))
        units = [self._unit_blocks(u) for u in range(self.num_vars)]
        constraints = []
        for name, fn in self._constraints:
            f0 = np.asarray(fn(zero), dtype=np.float64)
            coeffs = np.stack([np.asarray(fn(unit), dtype=np.float64) - f0
                               for unit in units]) if units else \
                np.zeros((0,) + f0.shape)
            constraints.append(LMIConstraint(name, f0, coeffs))
        a = np.zeros(self.num_vars)
        for nm in self._trace_names:
            blk = self.layout[nm]
            a += self.encode_trace(blk)
        start = self.encode(self._start) if self._start else None
        problem = LMIProblem(num_vars=self.num_vars, constraints=constraints,
                             norm_vector=a, norm_value=self._trace_total,
                             var_layout=dict(self.layout),
                             prechecks=list(self.prechecks), start=start)
        problem.check()
        return problem

    def encode_trace(self, blk):
        a = np.zeros(self.num_vars)
        blk.encode(np.eye(blk.shape[0]), a)
        return a


def unpack(problem, x):
    return {name: blk.decode(x) for name, blk in problem.var_layout.items()}


def constraint_margins(problem, x):
    """Minimal eigenvalue of every constraint, by the Jacobi kernel."""
    return {c.name: linalg.sym_eig_extremes(linalg.symmetrize(c.evaluate(x)))[0]
            for c in problem.constraints}


def _project(problem, x):
    a = problem.norm_vector
    return x + (problem.norm_value - a @ x) / (a @ a) * a


def _grouped(problem):
    groups = {}
    for idx, c in enumerate(problem.constraints):
        groups.setdefault(c.dim, []).append(idx)
    out = []
    for dim, idxs in sorted(groups.items()):
        f0 = np.stack([problem.constraints[i].f0 for i in idxs])
        coeffs = np.stack([problem.constraints[i].coeffs for i in idxs])
        out.append((idxs, f0, coeffs))
    return out


def solve_feasibility(problem, max_iter=DEFAULT_MAX_ITER, margin=DEFAULT_MARGIN,
                      patience=DEFAULT_PATIENCE, x0=None):
    """
    Maximize min_c lambda_min(F_c(x)) subject to the normalization.
    Step c/sqrt(k) along the projected subgradient v^T F_u v of the
    active constraint, keeping the best iterate.
    """
    problem.check()
    for description, fn in problem.prechecks:
        reason = fn()
        if reason:
            logger.info("necessary condition failed: %s", reason)
            x = _project(problem, np.zeros(problem.num_vars) if x0 is None else x0)
            return FeasResult(FeasStatus.INFEASIBLE, -math.inf, x,
                              reason='%s: %s' % (description, reason),
                              blocks=unpack(problem, x))

    if x0 is None:
        x0 = problem.start if problem.start is not None else np.zeros(problem.num_vars)
    x = _project(problem, np.array(x0, dtype=np.float64))
    a = problem.norm_vector
    aa = a @ a
    step0 = 0.1 * max(1.0, float(np.linalg.norm(x)))
    groups = _grouped(problem)

    best_t = -math.inf
    best_x = x.copy()
    stall = 0
    it = 0
    for it in range(1, max_iter + 1):
        t = math.inf
        active = None
        for idxs, f0, coeffs in groups:
            mats = f0 + np.einsum('u,cuij->cij', x, coeffs)
            w, v = np.linalg.eigh(mats)
            c = int(np.argmin(w[:, 0]))
            if w[c, 0] < t:
                t = float(w[c, 0])
                active = (coeffs[c], v[c, :, 0])
        if it == 1 or t > best_t + 1e-15 * max(1.0, abs(best_t)):
            best_t, best_x = t, x.copy()
            stall = 0
        else:
            stall += 1
            if stall > patience:
                break
        coeffs_c, vec_c = active
        g = np.einsum('uij,i,j->u', coeffs_c, vec_c, vec_c)
        g -= (a @ g) / aa * a
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            break
        x = x + (step0 / math.sqrt(it)) * g / gn

    margins = constraint_margins(problem, best_x)
    verified = min(margins.values()) if margins else math.inf
    blocks = unpack(problem, best_x)
    logger.debug("ascent stopped after %d iterations: best %.3e verified %.3e",
                 it, best_t, verified)
    if verified >= margin:
        return FeasResult(FeasStatus.FEASIBLE, verified, best_x, iterations=it,
                          blocks=blocks, margins=margins)
    logger.info("LMI margin %.3e below %.1e after %d iterations", verified, margin, it)
    return FeasResult(FeasStatus.UNKNOWN, verified, best_x,
                      reason='best verified margin %.3e is below %.1e '
                             '(not feasible at tolerance; this does not prove instability)'
                             % (verified, margin),
                      iterations=it, blocks=blocks, margins=margins)


########################################
## Polytopic martingale assemblers
########################################

def _vertex_precheck(s, lambda2):
    def check():
        for i, a in enumerate(s.vertices):
            rho = linalg.spectral_radius(a)
            if rho >= lambda2:
                return ('vertex %d has spectral radius %.9g >= lambda2 = %.9g'
                        % (i, rho, lambda2))
        return None
    return check


def _warm_lyapunov(s, lambda2):
    """
    P with lambda2^2 P - Abar^T P Abar = I for the vertex average,
    scaled to trace n; identity when the average is not stable enough.
    """
    n = s.n
    abar = s.vertices.mean(axis=0) / lambda2
    p = np.eye(n)
    if linalg.spectral_radius(abar) < 1.0:
        cand = sla.solve_discrete_lyapunov(abar.T, np.eye(n) / lambda2 ** 2)
        cand = linalg.symmetrize(cand)
        if np.all(np.isfinite(cand)) and np.linalg.eigvalsh(cand)[0] > 0.0:
            p = cand
    return p * (n / np.trace(p))


def _martingale_builder(s, lambda2, method):
    if not isinstance(s, PolytopicMartingaleModel):
        raise SolverError('%s certificates need a polytopic_martingale model, got %s'
                          % (method, s.kind))
    lambda2 = check_rate(lambda2, 'lambda2')
    n, z = s.n, s.num_modes
    eye = np.eye(n)
    b = LMIBuilder()
    names = []
    for i in range(z):
        names.append('R%d' % i)
        b.sym_var(names[-1], n)
    if method == 's-variable':
        b.full_var('S', 2 * n, n)
    elif method == 'g-form':
        b.full_var('G', n, n)

    for i in range(z):
        a = s.vertices[i]
        r_name = names[i]
        if method == 's-variable':
            def vertex(v, a=a, r_name=r_name):
                r = v[r_name]
                base = np.block([[lambda2 ** 2 * r, np.zeros((n, n))],
                                 [np.zeros((n, n)), -r]])
                return base + linalg.he(v['S'] @ np.hstack([a, eye]))
        else:
            def vertex(v, a=a, r_name=r_name):
                r, g = v[r_name], v['G']
                return np.block([[lambda2 ** 2 * r, a.T @ g.T],
                                 [g @ a, g + g.T - r]])
        b.constraint('vertex %d' % i, vertex)
        b.constraint('%s > 0' % r_name, lambda v, r_name=r_name: v[r_name])
    b.normalize_trace(names, z * n)
    b.precheck('vertex Schur condition', _vertex_precheck(s, lambda2))

    p = _warm_lyapunov(s, lambda2)
    start = {nm: p for nm in names}
    if method == 's-variable':
        start['S'] = np.vstack([np.zeros((n, n)), p])
    else:
        start['G'] = p
    b.start(**start)
    return b


def martingale_vertex_certificate(s, lambda2, **solver_opts):
    """
    Vertex conditions with an auxiliary S in R^{2n x n}:
    diag(l2^2 R_i, -R_i) + He(S [A_i I]) > 0, R_i > 0,
    sum_i trace R_i = Z n.

    When the ascent stalls, a G-form solution (S = [0; G]) is used as
    the starting point, so a feasible G-form always carries over.
    """
    b = _martingale_builder(s, lambda2, 's-variable')
    problem = b.build()
    result = solve_feasibility(problem, **solver_opts)
    if result.status is not FeasStatus.UNKNOWN:
        return result
    restricted = gform_certificate(s, lambda2, **solver_opts)
    if not restricted.feasible:
        return result
    logger.debug("S-variable ascent stalled; restarting from the G-form solution")
    blocks = {k: v for k, v in restricted.blocks.items() if k != 'G'}
    blocks['S'] = np.vstack([np.zeros((s.n, s.n)), restricted.blocks['G']])
    return solve_feasibility(problem, x0=b.encode(blocks), **solver_opts)


def gform_certificate(s, lambda2, **solver_opts):
    """The S = [0; G] restriction of martingale_vertex_certificate."""
    return solve_feasibility(_martingale_builder(s, lambda2, 'g-form').build(),
                             **solver_opts)


def common_lyapunov_certificate(s, lambda2, **solver_opts):
    """One constant P with l2^2 P - A_i^T P A_i >= t I at every vertex."""
    if not isinstance(s, PolytopicMartingaleModel):
        raise SolverError('common Lyapunov certificates need a polytopic_martingale model')
    lambda2 = check_rate(lambda2, 'lambda2')
    b = LMIBuilder()
    b.sym_var('P', s.n)
    for i, a in enumerate(s.vertices):
        b.constraint('vertex %d' % i,
                     lambda v, a=a: lambda2 ** 2 * v['P'] - a.T @ v['P'] @ a)
    b.constraint('P > 0', lambda v: v['P'])
    b.normalize_trace(['P'], s.n)
    b.precheck('vertex Schur condition', _vertex_precheck(s, lambda2))
    b.start(P=_warm_lyapunov(s, lambda2))
    return solve_feasibility(b.build(), **solver_opts)
