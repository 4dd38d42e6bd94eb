# momentstab/simulate.py

"""
Reproducible Monte Carlo estimates of E_0[|x_k|^2].

Every path owns a Philox generator seeded from (master_seed, path
index) through numpy's SeedSequence hashing, and consumes exactly one
uniform per step.  Paths are simulated in fixed chunks, so the curve
is the same whatever the number of workers.

The martingale sampler is an urn-type step: with J drawn from xi,

    xi' = xi + gamma (e_J - xi)

so E[xi' | xi] = xi and a vertex of the simplex is absorbing.  This is
one member of the martingale class the vertex certificates cover; the
`frozen` sampler (xi constant) is another.

    >>> simplex_martingale_step([1.0, 0.0], 0.3, 0.99).tolist()
    [1.0, 0.0]
    >>> simplex_martingale_step([0.5, 0.5], 1.0, 0.75).tolist()
    [0.0, 1.0]
"""

import concurrent.futures
import dataclasses
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy import stats

from .common import SimulationError
from .settings import get_profile, thread_count
from .system_model import (IIDModel, InitialCondition, MarkovJumpModel,
                           PeriodicIIDModel, PolytopicMartingaleModel,
                           check_initial)

logger = logging.getLogger("momentstab.simulate")

SAMPLERS = ('polya', 'frozen')
CHUNK_PATHS = 2048
SIMPLEX_TOL = 1e-12
MAX_SEQUENCES = 10 ** 6
MIN_FIT_POINTS = 8
Z975 = float(stats.norm.ppf(0.975))


@dataclasses.dataclass(frozen=True)
class SimParams:
    paths: int
    horizon: int
    master_seed: int
    initial: InitialCondition
    sampler: str = 'polya'
    workers: Optional[int] = None

    def __post_init__(self):
        if self.paths < 1:
            raise SimulationError('paths must be >= 1, got %r' % self.paths)
        if self.horizon < 1:
            raise SimulationError('horizon must be >= 1, got %r' % self.horizon)
        if not 0 <= self.master_seed < 2 ** 64:
            raise SimulationError('seed must be a 64-bit unsigned integer, got %r'
                                  % self.master_seed)
        if self.sampler not in SAMPLERS:
            raise SimulationError('unknown sampler %r (choose from %s)'
                                  % (self.sampler, ', '.join(SAMPLERS)))


@dataclasses.dataclass
class SecondMomentCurve:
    values: List[float]
    half_widths: List[float]
    paths: int
    master_seed: Optional[int]
    diverged: bool = False
    exact: bool = False

    @property
    def horizon(self):
        return len(self.values) - 1

    def standard_errors(self):
        return [h / Z975 for h in self.half_widths]

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass
class DecayFit:
    lambda_hat: float
    ci: Tuple[float, float]
    window: Tuple[int, int]
    slope: float = 0.0
    stderr: float = 0.0

    def to_dict(self):
        out = dataclasses.asdict(self)
        out['ci'] = list(self.ci)
        out['window'] = list(self.window)
        return out


########################################
## Sampling
########################################

def path_seed(master_seed, index):
    """SeedSequence for path `index`; independent of execution order."""
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))


def path_generator(seed):
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))


def _categorical(weights, u):
    """
    Index J with Pr(J = i) proportional to weights[i], by inverting the
    cumulative sum at u.  Zero-weight entries are never chosen.
    """
    cum = np.cumsum(weights, axis=-1)
    target = u * cum[..., -1]
    j = np.sum(cum <= target[..., None], axis=-1)
    positive = np.asarray(weights) > 0.0
    last = positive.shape[-1] - 1 - np.argmax(positive[..., ::-1], axis=-1)
    return np.minimum(j, last)


def _martingale_steps(xi, gamma, u):
    rows = np.arange(xi.shape[0])
    j = _categorical(xi, u)
    out = xi + gamma * (0.0 - xi)
    out[rows, j] = xi[rows, j] + gamma * (1.0 - xi[rows, j])
    np.maximum(out, 0.0, out=out)
    sums = out.sum(axis=1)
    drift = np.abs(sums - 1.0) > 1e-14
    if np.any(drift):
        out[drift] /= sums[drift, None]
    return out


def _check_simplex(xi, size=None):
    xi = np.asarray(xi, dtype=np.float64)
    if xi.ndim != 1 or (size is not None and xi.shape[0] != size) \
            or np.any(xi < -SIMPLEX_TOL) or abs(float(xi.sum()) - 1.0) > SIMPLEX_TOL:
        raise SimulationError('point %s is outside the unit simplex' % (xi.tolist(),))
    return xi


def simplex_martingale_step(xi, gamma, draw):
    """One step xi' = xi + gamma (e_J - xi), J ~ Cat(xi) via `draw` in [0, 1)."""
    xi = _check_simplex(xi)
    if not 0.0 < gamma <= 1.0:
        raise SimulationError('gamma must lie in (0, 1], got %r' % gamma)
    return _martingale_steps(xi[None, :], gamma, np.array([float(draw)]))[0]


def _run_batch(s, init, u, sampler='polya'):
    """
    States (paths, horizon + 1, n) for the uniforms u (paths, horizon),
    plus the mode record (paths, horizon) or simplex record
    (paths, horizon + 1, Z).
    """
    paths, horizon = u.shape
    x = np.tile(init.x0, (paths, 1))
    states = np.empty((paths, horizon + 1, s.n))
    states[:, 0] = x
    with np.errstate(over='ignore', invalid='ignore'):
        if isinstance(s, PolytopicMartingaleModel):
            xi = np.tile(init.xi0, (paths, 1))
            record = np.empty((paths, horizon + 1, s.num_modes))
            record[:, 0] = xi
            for t in range(horizon):
                a = np.einsum('pz,zij->pij', xi, s.vertices)
                x = np.einsum('pij,pj->pi', a, x)
                states[:, t + 1] = x
                if sampler == 'polya':
                    xi = _martingale_steps(xi, s.gamma, u[:, t])
                record[:, t + 1] = xi
            return states, record

        record = np.empty((paths, horizon), dtype=np.int64)
        if isinstance(s, MarkovJumpModel):
            mode = _categorical(init.first_mode_distribution(s), u[:, 0])
        for t in range(horizon):
            if isinstance(s, IIDModel):
                modes, mode = s.modes, _categorical(s.probs, u[:, t])
            elif isinstance(s, PeriodicIIDModel):
                phase = (init.phase + t) % s.period
                modes, mode = s.modes[phase], _categorical(s.probs[phase], u[:, t])
            elif isinstance(s, MarkovJumpModel):
                if t:
                    mode = _categorical(s.transition[mode], u[:, t])
                modes = s.modes
            else:
                raise SimulationError('cannot simulate %r' % (s,))
            record[:, t] = mode
            x = np.einsum('pij,pj->pi', modes[mode], x)
            states[:, t + 1] = x
    return states, record


def sample_path(s, init, horizon, seed, sampler='polya'):
    """
    (states x_{k0..k0+horizon}, record) for one path.  `seed` is an
    integer or a SeedSequence; path i of estimate_second_moment is
    sample_path(..., path_seed(master_seed, i)).
    """
    init = check_initial(s, init)
    if horizon < 1:
        raise SimulationError('horizon must be >= 1, got %r' % horizon)
    u = path_generator(seed).random(horizon)[None, :]
    states, record = _run_batch(s, init, u, sampler)
    return states[0], record[0]


########################################
## Second-moment curves
########################################

def _norms_for(s, init, params, indices):
    u = np.stack([path_generator(path_seed(params.master_seed, i)).random(params.horizon)
                  for i in indices])
    states, _ = _run_batch(s, init, u, params.sampler)
    with np.errstate(over='ignore', invalid='ignore'):
        return np.einsum('phi,phi->ph', states, states)


def _column_stats(col):
    paths = col.shape[0]
    if np.all(col == col[0]):
        return float(col[0]), 0.0
    mean = math.fsum(col) / paths
    if paths < 2:
        return mean, 0.0
    var = math.fsum((col - mean) ** 2) / (paths - 1)
    return mean, Z975 * math.sqrt(var / paths)


def estimate_second_moment(s, params, profile=None):
    """
    Mean of |x_k|^2 over params.paths paths with 95% normal-approximation
    half-widths.  Sums are correctly rounded (math.fsum), so chunking and
    worker count do not change the result.
    """
    profile = profile or get_profile()
    init = check_initial(s, params.initial)
    if params.sampler != 'polya' and not isinstance(s, PolytopicMartingaleModel):
        raise SimulationError('sampler %s applies to polytopic_martingale models only'
                              % params.sampler)
    chunks = [range(lo, min(lo + CHUNK_PATHS, params.paths))
              for lo in range(0, params.paths, CHUNK_PATHS)]
    workers = min(thread_count(params.workers), len(chunks))
    logger.debug("simulating %d paths x %d steps in %d chunks on %d workers",
                 params.paths, params.horizon, len(chunks), workers)
    if workers == 1:
        parts = [_norms_for(s, init, params, c) for c in chunks]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _norms_for(s, init, params, c), chunks))
    norms = np.concatenate(parts)

    bound = profile['divergence_bound']
    bad = ~(norms <= bound)
    cut = norms.shape[1]
    if np.any(bad):
        cut = int(np.argmax(np.any(bad, axis=0)))
        logger.warning("second moment exceeded %.0e at k=%d; curve truncated", bound, cut)
    values, half = [], []
    for k in range(cut):
        mean, hw = _column_stats(norms[:, k])
        values.append(mean)
        half.append(hw)
    return SecondMomentCurve(values=values, half_widths=half, paths=params.paths,
                             master_seed=params.master_seed,
                             diverged=cut < norms.shape[1])


def enumerate_second_moment(s, init, horizon):
    """
    Exact E_0[|x_k|^2] by enumerating every mode sequence with positive
    probability.  Refused above MAX_SEQUENCES sequences.
    """
    init = check_initial(s, init)
    if isinstance(s, PolytopicMartingaleModel):
        raise SimulationError('mode sequences of a polytopic_martingale model '
                              'cannot be enumerated')
    if isinstance(s, PeriodicIIDModel):
        count = math.prod(s.modes[(init.phase + t) % s.period].shape[0]
                          for t in range(horizon))
    else:
        count = s.num_modes ** horizon
    if count > MAX_SEQUENCES:
        raise SimulationError('%d mode sequences exceed the enumeration limit %d'
                              % (count, MAX_SEQUENCES))

    xs = init.x0[None, :]
    probs = np.ones(1)
    last = None
    values = [float(init.x0 @ init.x0)]
    for t in range(horizon):
        if isinstance(s, IIDModel):
            modes, weights = s.modes, np.tile(s.probs, (len(probs), 1))
        elif isinstance(s, PeriodicIIDModel):
            phase = (init.phase + t) % s.period
            modes, weights = s.modes[phase], np.tile(s.probs[phase], (len(probs), 1))
        else:
            modes = s.modes
            weights = (np.tile(init.first_mode_distribution(s), (len(probs), 1))
                       if last is None else s.transition[last])
        branch = probs[:, None] * weights
        keep = branch > 0.0
        src, mode = np.nonzero(keep)
        probs = branch[src, mode]
        xs = np.einsum('pij,pj->pi', modes[mode], xs[src])
        last = mode
        values.append(math.fsum(probs * np.einsum('pi,pi->p', xs, xs)))
    return SecondMomentCurve(values=values, half_widths=[0.0] * len(values),
                             paths=0, master_seed=None, exact=True)


def estimate_decay_rate(curve, window=None):
    """
    Weighted least squares of log m_k on k over the window (default the
    last two-thirds of the curve).  lambda_hat = exp(slope / 2).
    Weights are m_k^2 / se_k^2, uniform when any standard error is 0.
    """
    values = np.asarray(curve.values, dtype=np.float64)
    if values.size < MIN_FIT_POINTS:
        raise SimulationError('decay fit needs at least %d points, got %d'
                              % (MIN_FIT_POINTS, values.size))
    start, stop = window if window is not None else (values.size // 3, values.size)
    if not 0 <= start < stop <= values.size or stop - start < 3:
        raise SimulationError('bad fit window %r' % ((start, stop),))
    m = values[start:stop]
    if np.any(m <= 0.0):
        raise SimulationError('nonpositive second moment in the fit window')
    k = np.arange(start, stop, dtype=np.float64)
    y = np.log(m)
    se = np.asarray(curve.standard_errors()[start:stop], dtype=np.float64)
    w = np.ones_like(m) if np.any(se == 0.0) else (m / se) ** 2
    w = w / w.sum()

    kbar = w @ k
    ybar = w @ y
    sxx = w @ (k - kbar) ** 2
    slope = float(w @ ((k - kbar) * (y - ybar)) / sxx)
    resid = y - (ybar + slope * (k - kbar))
    dof = k.size - 2
    sigma2 = float(w @ resid ** 2) / dof
    stderr = math.sqrt(sigma2 / sxx) if sigma2 > 0.0 else 0.0
    tq = float(stats.t.ppf(0.975, dof))
    lam = math.exp(slope / 2.0)
    ci = (math.exp((slope - tq * stderr) / 2.0), math.exp((slope + tq * stderr) / 2.0))
    return DecayFit(lambda_hat=lam, ci=(min(ci[0], lam), max(ci[1], lam)),
                    window=(start, stop), slope=slope, stderr=stderr)
