# tests/helpers.py

"""Random-instance factories shared by the test modules."""

import numpy as np

from momentstab.system_model import make_iid, make_markov, model_from_dict


def random_matrix(rng, n, scale=1.0):
    return scale * rng.standard_normal((n, n)) / np.sqrt(n)


def random_probs(rng, z):
    p = rng.random(z) + 0.1
    return p / p.sum()


def random_stochastic(rng, m):
    return np.stack([random_probs(rng, m) for _ in range(m)])


def random_iid(rng, n=None, z=None, scale=None):
    n = n or int(rng.integers(1, 4))
    z = z or int(rng.integers(1, 5))
    scale = rng.uniform(0.3, 1.3) if scale is None else scale
    return make_iid([random_matrix(rng, n, scale) for _ in range(z)],
                    random_probs(rng, z))


def random_markov(rng, n=None, m=None, scale=None):
    n = n or int(rng.integers(1, 4))
    m = m or int(rng.integers(1, 4))
    scale = rng.uniform(0.3, 1.3) if scale is None else scale
    return make_markov([random_matrix(rng, n, scale) for _ in range(m)],
                       random_stochastic(rng, m))


def random_periodic(rng, n=None, period=None, z=None, scale=None):
    n = n or int(rng.integers(1, 4))
    period = period or int(rng.integers(1, 4))
    scale = rng.uniform(0.3, 1.3) if scale is None else scale
    steps = []
    for _ in range(period):
        zk = z or int(rng.integers(1, 4))
        steps.append({'modes': [random_matrix(rng, n, scale).tolist() for _ in range(zk)],
                      'probs': random_probs(rng, zk).tolist()})
    return model_from_dict({'type': 'periodic_iid', 'n': n, 'period': period,
                            'steps': steps})


def scalar_iid(values, probs=None):
    probs = probs or [1.0 / len(values)] * len(values)
    return make_iid([[[v]] for v in values], probs)


def polytopic(vertices, gamma=0.5):
    vertices = [np.asarray(v, dtype=float).tolist() for v in vertices]
    return model_from_dict({'type': 'polytopic_martingale',
                            'n': len(vertices[0]), 'vertices': vertices,
                            'gamma': gamma})
