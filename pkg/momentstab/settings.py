# momentstab/settings.py

"""
Named tolerance profiles.  A profile is a plain dict; callers take a
copy with `get_profile` and pass individual values down explicitly.
"""

import copy
import os

from .common import SolverError

STANDARD_PROFILE = {
    'name': 'standard',
    'feas_tol': 1e-9,          # spectral margin of the Stein series
    'boundary_band': 1e-7,     # |rho - lambda^2| treated as undecided
    'bisect_tol': 1e-6,
    'stein_max_iter': 100000,
    'lmi_max_iter': 50000,
    'lmi_margin': 1e-7,
    'lmi_patience': 4000,      # ascent iterations without improvement
    'divergence_bound': 1e150,
    'renorm_tol': 1e-12,
}

STRICT_PROFILE = {
    'name': 'strict',
    'feas_tol': 1e-11,
    'boundary_band': 1e-9,
    'bisect_tol': 1e-8,
    'stein_max_iter': 100000,
    'lmi_max_iter': 50000,
    'lmi_margin': 1e-7,
    'lmi_patience': 50000,     # never stop early
    'divergence_bound': 1e150,
    'renorm_tol': 1e-12,
}

FAST_PROFILE = {
    'name': 'fast',
    'feas_tol': 1e-9,
    'boundary_band': 1e-7,
    'bisect_tol': 1e-4,
    'stein_max_iter': 100000,
    'lmi_max_iter': 5000,
    'lmi_margin': 1e-7,
    'lmi_patience': 500,
    'divergence_bound': 1e150,
    'renorm_tol': 1e-12,
}

PROFILES = {
    'standard': STANDARD_PROFILE,
    'strict': STRICT_PROFILE,
    'fast': FAST_PROFILE,
}

DEFAULT_PROFILE = 'standard'

THREADS_ENV = 'MOMENT_STAB_THREADS'


def get_profile(name=None):
    """
    Return a private copy of a named profile.

        >>> get_profile()['boundary_band']
        1e-07
        >>> get_profile('fast')['bisect_tol']
        0.0001
    """
    if name is None:
        name = DEFAULT_PROFILE
    try:
        return copy.deepcopy(PROFILES[name])
    except KeyError:
        raise SolverError('unknown profile %r (choose from %s)'
                          % (name, ', '.join(sorted(PROFILES))))


def thread_count(override=None):
    """
    Worker count for simulation: an explicit override wins, then
    MOMENT_STAB_THREADS; 0 or unset means one worker per CPU.
    """
    if override is None:
        raw = os.environ.get(THREADS_ENV, '').strip()
        try:
            override = int(raw) if raw else 0
        except ValueError:
            raise SolverError('%s must be an integer, got %r'
                              % (THREADS_ENV, raw))
    if override < 0:
        raise SolverError('worker count must be >= 0, got %r' % override)
    if override == 0:
        return os.cpu_count() or 1
    return override
