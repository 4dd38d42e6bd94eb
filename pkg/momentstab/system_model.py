# momentstab/system_model.py

"""
The four stochastic-system classes x_{k+1} = A(xi_k) x_k handled by
momentstab, their JSON form and the boundedness checks.

    >>> s = parse_system('{"type":"iid","n":1,"modes":[[[0.5]]],"probs":[1.0]}')
    >>> s.kind, s.n, s.num_modes
    ('iid', 1, 1)
    >>> parse_system('{"type":"iid","n":1,"modes":[[[1]],[[2]]],"probs":[0.6,0.5]}')
    Traceback (most recent call last):
    ...
    momentstab.common.ModelError: Model error: probabilities sum to 1.1
    >>> validate(parse_system('{"type":"iid","n":1,"modes":[[[2]]],"probs":[1]}')).m1_bound
    4.0

Transition matrices are row-stochastic:
transition[j][i] = Pr(mode_k = i | mode_{k-1} = j).
"""

import dataclasses
import json
import logging
from typing import ClassVar, List, Optional

import numpy as np

from .common import ModelError, SimulationError
from . import linalg

logger = logging.getLogger("momentstab.system_model")

RENORM_TOL = 1e-12

__all__ = [
    'ModelError', 'SystemModel', 'IIDModel', 'PeriodicIIDModel',
    'MarkovJumpModel', 'PolytopicMartingaleModel', 'InitialCondition',
    'ValidationReport', 'parse_system', 'serialize_system', 'validate',
    'embed_iid_as_markov', 'default_initial', 'check_initial',
    'parse_prior', 'load_system',
]


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _matrix_list(raw, n, what):
    if not isinstance(raw, (list, tuple)) or len(raw) == 0:
        raise ModelError('%s must be a non-empty list of %dx%d matrices'
                         % (what, n, n))
    mats = []
    for idx, m in enumerate(raw):
        try:
            a = np.array(m, dtype=np.float64)
        except (TypeError, ValueError):
            raise ModelError('%s[%d] is not a numeric matrix' % (what, idx))
        if a.shape != (n, n):
            raise ModelError('%s[%d] has shape %s, expected (%d, %d)'
                             % (what, idx, 'x'.join(map(str, a.shape)) or '()', n, n))
        if not np.all(np.isfinite(a)):
            raise ModelError('%s[%d] has non-finite entries' % (what, idx))
        mats.append(a)
    return _frozen(np.stack(mats))


def _probability_vector(raw, size, what, tol=RENORM_TOL):
    """
    Check a probability vector and renormalize it exactly when the sum
    is within `tol` of one.  Anything worse is an error.
    """
    try:
        p = np.array(raw, dtype=np.float64)
    except (TypeError, ValueError):
        raise ModelError('%s is not a numeric vector' % what)
    if p.ndim != 1 or p.size != size:
        raise ModelError('%s must have %d entries, got %s'
                         % (what, size, p.size if p.ndim == 1 else p.shape))
    if not np.all(np.isfinite(p)):
        raise ModelError('%s has non-finite entries' % what)
    if np.any(p < 0.0):
        raise ModelError('%s has a negative probability %r'
                         % (what, float(p.min())))
    if np.any(p > 1.0 + tol):
        raise ModelError('%s has a probability above 1: %r'
                         % (what, float(p.max())))
    total = float(np.sum(p))
    if abs(total - 1.0) > tol:
        raise ModelError('probabilities sum to %.12g' % total)
    if total != 1.0:
        p = p / total
        # push the rounding residue into the largest entry so the sum
        # is exactly one and a second pass is a no-op
        for _ in range(4):
            residue = 1.0 - float(np.sum(p))
            if residue == 0.0:
                break
            p[int(np.argmax(p))] += residue
    return p


########################################
## Model classes
########################################

@dataclasses.dataclass(frozen=True, eq=False)
class SystemModel:

    """
    Base of the tagged union.  Concrete classes set `kind` and expose
    `num_modes` and `support()`, the finite list of matrices A can take
    (vertices for the martingale class).
    """

    kind: ClassVar[str] = ''
    n: int

    def to_dict(self):
        raise NotImplementedError

    def support(self):
        raise NotImplementedError

    def __eq__(self, other):
        if not isinstance(other, SystemModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(serialize_system(self))

    def summary(self):
        return {'type': self.kind, 'n': self.n, 'modes': self.num_modes}


@dataclasses.dataclass(frozen=True, eq=False)
class IIDModel(SystemModel):
    kind: ClassVar[str] = 'iid'
    modes: np.ndarray = None
    probs: np.ndarray = None

    @property
    def num_modes(self):
        return self.modes.shape[0]

    def support(self):
        return list(self.modes)

    def to_dict(self):
        return {'type': self.kind, 'n': self.n,
                'modes': self.modes.tolist(), 'probs': self.probs.tolist()}


@dataclasses.dataclass(frozen=True, eq=False)
class PeriodicIIDModel(SystemModel):
    kind: ClassVar[str] = 'periodic_iid'
    modes: tuple = ()       # modes[k]: (Z_k, n, n) array
    probs: tuple = ()       # probs[k]: (Z_k,) array

    @property
    def period(self):
        return len(self.modes)

    @property
    def num_modes(self):
        return max(m.shape[0] for m in self.modes)

    def support(self):
        return [a for step in self.modes for a in step]

    def step(self, k):
        """Distribution used at absolute time k (phase k mod N)."""
        k %= self.period
        return self.modes[k], self.probs[k]

    def summary(self):
        out = SystemModel.summary(self)
        out['period'] = self.period
        return out

    def to_dict(self):
        return {'type': self.kind, 'n': self.n, 'period': self.period,
                'steps': [{'modes': m.tolist(), 'probs': p.tolist()}
                          for m, p in zip(self.modes, self.probs)]}


@dataclasses.dataclass(frozen=True, eq=False)
class MarkovJumpModel(SystemModel):
    kind: ClassVar[str] = 'markov'
    modes: np.ndarray = None
    transition: np.ndarray = None

    @property
    def num_modes(self):
        return self.modes.shape[0]

    def support(self):
        return list(self.modes)

    def to_dict(self):
        return {'type': self.kind, 'n': self.n,
                'modes': self.modes.tolist(),
                'transition': self.transition.tolist()}


@dataclasses.dataclass(frozen=True, eq=False)
class PolytopicMartingaleModel(SystemModel):
    kind: ClassVar[str] = 'polytopic_martingale'
    vertices: np.ndarray = None
    gamma: float = 0.5

    @property
    def num_modes(self):
        return self.vertices.shape[0]

    def support(self):
        return list(self.vertices)

    def matrix_at(self, xi):
        """A(xi) = sum_i xi_i A^(i)."""
        return np.tensordot(np.asarray(xi, dtype=np.float64),
                            self.vertices, axes=1)

    def summary(self):
        out = SystemModel.summary(self)
        out['gamma'] = self.gamma
        return out

    def to_dict(self):
        return {'type': self.kind, 'n': self.n,
                'vertices': self.vertices.tolist(), 'gamma': self.gamma}


MODEL_CLASSES = {cls.kind: cls for cls in
                 (IIDModel, PeriodicIIDModel, MarkovJumpModel,
                  PolytopicMartingaleModel)}

LIFT_CLASSES = (IIDModel, PeriodicIIDModel, MarkovJumpModel)


########################################
## Construction, parsing, serialization
########################################

def make_iid(modes, probs, tol=RENORM_TOL):
    mats = np.asarray(modes, dtype=np.float64)
    if mats.ndim != 3:
        raise ModelError('modes must be a list of square matrices')
    n = mats.shape[1]
    mats = _matrix_list(mats.tolist(), n, 'modes')
    return IIDModel(n=n, modes=mats,
                    probs=_frozen(_probability_vector(probs, mats.shape[0], 'probs', tol)))


def make_markov(modes, transition, tol=RENORM_TOL):
    mats = np.asarray(modes, dtype=np.float64)
    if mats.ndim != 3:
        raise ModelError('modes must be a list of square matrices')
    n = mats.shape[1]
    mats = _matrix_list(mats.tolist(), n, 'modes')
    m = mats.shape[0]
    rows = np.asarray(transition, dtype=np.float64)
    if rows.shape != (m, m):
        raise ModelError('transition must be %dx%d, got %s'
                         % (m, m, 'x'.join(map(str, rows.shape))))
    pi = np.stack([_probability_vector(rows[j], m, 'transition row %d' % j, tol)
                   for j in range(m)])
    return MarkovJumpModel(n=n, modes=mats, transition=_frozen(pi))


def _require(doc, key):
    if key not in doc:
        raise ModelError('missing field %r' % key)
    return doc[key]


def model_from_dict(doc, tol=RENORM_TOL):
    if not isinstance(doc, dict):
        raise ModelError('system document must be a JSON object')
    kind = _require(doc, 'type')
    if kind not in MODEL_CLASSES:
        raise ModelError('unknown system type %r (expected one of %s)'
                         % (kind, ', '.join(sorted(MODEL_CLASSES))))
    n = _require(doc, 'n')
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ModelError('n must be a positive integer, got %r' % (n,))

    if kind == 'iid':
        modes = _matrix_list(_require(doc, 'modes'), n, 'modes')
        probs = _probability_vector(_require(doc, 'probs'), modes.shape[0], 'probs', tol)
        return IIDModel(n=n, modes=modes, probs=_frozen(probs))

    if kind == 'periodic_iid':
        period = _require(doc, 'period')
        steps = _require(doc, 'steps')
        if not isinstance(period, int) or isinstance(period, bool) or period < 1:
            raise ModelError('period must be a positive integer, got %r' % (period,))
        if not isinstance(steps, list) or len(steps) != period:
            raise ModelError('steps must list %d entries' % period)
        modes, probs = [], []
        for k, step in enumerate(steps):
            if not isinstance(step, dict):
                raise ModelError('steps[%d] must be an object' % k)
            mk = _matrix_list(_require(step, 'modes'), n, 'steps[%d].modes' % k)
            pk = _probability_vector(_require(step, 'probs'), mk.shape[0],
                                     'steps[%d].probs' % k, tol)
            modes.append(mk)
            probs.append(_frozen(pk))
        return PeriodicIIDModel(n=n, modes=tuple(modes), probs=tuple(probs))

    if kind == 'markov':
        modes = _matrix_list(_require(doc, 'modes'), n, 'modes')
        m = modes.shape[0]
        rows = _require(doc, 'transition')
        if not isinstance(rows, list) or len(rows) != m:
            raise ModelError('transition must have %d rows' % m)
        pi = np.stack([_probability_vector(rows[j], m, 'transition row %d' % j, tol)
                       for j in range(m)])
        return MarkovJumpModel(n=n, modes=modes, transition=_frozen(pi))

    vertices = _matrix_list(_require(doc, 'vertices'), n, 'vertices')
    gamma = _require(doc, 'gamma')
    try:
        gamma = float(gamma)
    except (TypeError, ValueError):
        raise ModelError('gamma must be a number, got %r' % (gamma,))
    if not 0.0 < gamma <= 1.0:
        raise ModelError('gamma must lie in (0, 1], got %r' % gamma)
    return PolytopicMartingaleModel(n=n, vertices=vertices, gamma=gamma)


def parse_system(text, tol=RENORM_TOL):
    """Parse the JSON document of a system model."""
    try:
        doc = json.loads(text)
    except (TypeError, ValueError) as e:
        raise ModelError('malformed JSON document: %s' % e)
    return model_from_dict(doc, tol)


def load_system(path, tol=RENORM_TOL):
    with open(path, encoding='utf-8') as f:
        try:
            text = f.read()
        except UnicodeDecodeError as e:
            raise ModelError('%s is not UTF-8 text: %s' % (path, e))
    return parse_system(text, tol)


def serialize_system(s):
    """
    JSON text of a model.  Python's float repr is the shortest string
    that round-trips, so parse(serialize(s)) == s exactly.
    """
    return json.dumps(s.to_dict(), sort_keys=True)


########################################
## Validation
########################################

@dataclasses.dataclass
class ValidationReport:
    ok: bool
    m1_bound: float
    m3_bound: float
    messages: List[str] = dataclasses.field(default_factory=list)

    def to_dict(self):
        return dataclasses.asdict(self)


def validate(s):
    """
    Bounds of the boundedness assumptions over the finite support: M1
    bounds the squared entries, M3 the absolute entries.  For the
    martingale class the vertex set suffices because every entry of a
    convex combination lies between the vertex extremes.
    """
    support = np.stack(s.support())
    m3 = float(np.max(np.abs(support)))
    m1 = m3 * m3
    messages = []
    for idx, a in enumerate(s.support()):
        rho = linalg.spectral_radius(a)
        if rho >= 1.0:
            messages.append('%s %d has spectral radius %.6g >= 1'
                            % ('vertex' if s.kind == 'polytopic_martingale'
                               else 'support matrix', idx, rho))
    if isinstance(s, MarkovJumpModel):
        for j in range(s.num_modes):
            if s.transition[j, j] == 1.0 and s.num_modes > 1:
                messages.append('mode %d is absorbing' % j)
    return ValidationReport(ok=True, m1_bound=m1, m3_bound=m3,
                            messages=messages)


def embed_iid_as_markov(s):
    """
    An i.i.d. process is the Markov chain whose every transition row
    equals the mode distribution.
    """
    if not isinstance(s, IIDModel):
        raise ModelError('embed_iid_as_markov needs an iid model, got %s' % s.kind)
    pi = np.tile(s.probs, (s.num_modes, 1))
    return MarkovJumpModel(n=s.n, modes=s.modes, transition=_frozen(pi))


########################################
## Initial conditions
########################################

@dataclasses.dataclass(frozen=True, eq=False)
class InitialCondition:

    """
    x0 plus the class-specific prior: the previous Markov mode (or a
    distribution over it), the martingale start point on the simplex,
    or the phase of a periodic process.
    """

    x0: np.ndarray
    prev_mode: Optional[int] = None
    mode_dist: Optional[np.ndarray] = None
    xi0: Optional[np.ndarray] = None
    phase: int = 0

    def to_dict(self):
        out = {'x0': self.x0.tolist(), 'phase': self.phase}
        if self.prev_mode is not None:
            out['prev_mode'] = self.prev_mode
        if self.mode_dist is not None:
            out['mode_dist'] = self.mode_dist.tolist()
        if self.xi0 is not None:
            out['xi0'] = self.xi0.tolist()
        return out

    def first_mode_distribution(self, s):
        """Pr(mode at k0 = i) for a Markov model."""
        if self.mode_dist is not None:
            return self.mode_dist @ s.transition
        return np.array(s.transition[self.prev_mode], dtype=np.float64)


def default_initial(s, x0=None):
    if x0 is None:
        x0 = np.full(s.n, 1.0 / np.sqrt(s.n))
    init = InitialCondition(x0=np.asarray(x0, dtype=np.float64))
    if isinstance(s, MarkovJumpModel):
        init = dataclasses.replace(init, prev_mode=0)
    elif isinstance(s, PolytopicMartingaleModel):
        init = dataclasses.replace(init, xi0=np.full(s.num_modes, 1.0 / s.num_modes))
    return check_initial(s, init)


def check_initial(s, init):
    x0 = np.asarray(init.x0, dtype=np.float64)
    if x0.shape != (s.n,):
        raise SimulationError('x0 must have %d entries, got %d' % (s.n, x0.size))
    if not np.all(np.isfinite(x0)):
        raise SimulationError('x0 has non-finite entries')
    fields = {'x0': _frozen(x0)}
    if isinstance(s, MarkovJumpModel):
        if init.xi0 is not None:
            raise SimulationError('a simplex start point does not apply to a markov model')
        if init.mode_dist is not None:
            try:
                fields['mode_dist'] = _frozen(_probability_vector(
                    init.mode_dist, s.num_modes, 'prior mode distribution'))
            except ModelError as e:
                raise SimulationError(e.msg)
            fields['prev_mode'] = None
        else:
            j = 0 if init.prev_mode is None else init.prev_mode
            if not 0 <= j < s.num_modes:
                raise SimulationError('previous mode %r outside 0..%d'
                                      % (j, s.num_modes - 1))
            fields['prev_mode'] = int(j)
    elif isinstance(s, PolytopicMartingaleModel):
        if init.prev_mode is not None or init.mode_dist is not None:
            raise SimulationError('a mode prior does not apply to a martingale model')
        xi = (np.full(s.num_modes, 1.0 / s.num_modes) if init.xi0 is None
              else np.asarray(init.xi0, dtype=np.float64))
        if xi.shape != (s.num_modes,) or np.any(xi < 0.0) \
                or abs(float(xi.sum()) - 1.0) > 1e-12:
            raise SimulationError('start point must lie in the %d-simplex' % s.num_modes)
        fields['xi0'] = _frozen(xi / xi.sum())
    else:
        if init.prev_mode is not None or init.mode_dist is not None \
                or init.xi0 is not None:
            raise SimulationError('an %s model takes no prior' % s.kind)
        period = s.period if isinstance(s, PeriodicIIDModel) else 1
        fields['phase'] = int(init.phase) % period
    return dataclasses.replace(init, **fields)


def _index(value, text):
    if not float(value).is_integer():
        raise SimulationError('prior %r is not an integer index' % text)
    return int(value)


def parse_prior(s, text, x0=None):
    """
    Read the CLI --prior string: a mode index or comma separated
    distribution for markov models, a simplex point for martingale
    models, a phase for periodic models.
    """
    init = default_initial(s, x0)
    if text is None:
        return init
    parts = [p.strip() for p in text.split(',') if p.strip()]
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise SimulationError('cannot read prior %r' % text)
    if isinstance(s, MarkovJumpModel):
        if len(values) == 1:
            mode = _index(values[0], text)
            return check_initial(s, dataclasses.replace(init, prev_mode=mode))
        return check_initial(s, dataclasses.replace(init, prev_mode=None,
                                                    mode_dist=np.array(values)))
    if isinstance(s, PolytopicMartingaleModel):
        return check_initial(s, dataclasses.replace(init, xi0=np.array(values)))
    if isinstance(s, PeriodicIIDModel) and len(values) == 1:
        return check_initial(s, dataclasses.replace(init, phase=_index(values[0], text)))
    raise SimulationError('an %s model takes no prior' % s.kind)
