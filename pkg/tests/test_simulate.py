# tests/test_simulate.py

import math
import os
import unittest
from unittest import mock

import numpy as np

from momentstab import settings, simulate
from momentstab.common import SimulationError, SolverError
from momentstab.moment_operator import exact_second_moments
from momentstab.simulate import (SimParams, enumerate_second_moment,
                                 estimate_decay_rate, estimate_second_moment,
                                 path_seed, sample_path, simplex_martingale_step)
from momentstab.system_model import default_initial, make_markov, parse_prior
from tests.helpers import (polytopic, random_iid, random_markov, random_periodic,
                           scalar_iid)


def params_for(s, paths=500, horizon=20, seed=7, **kw):
    initial = kw.pop('initial', None) or default_initial(s)
    return SimParams(paths=paths, horizon=horizon, master_seed=seed,
                     initial=initial, **kw)


class ParamsTest(unittest.TestCase):

    def test_rejects_bad_values(self):
        init = default_initial(scalar_iid([0.5]))
        for kw in ({'paths': 0}, {'horizon': 0}, {'master_seed': -1},
                   {'master_seed': 2 ** 64}, {'sampler': 'gibbs'}):
            args = dict(paths=10, horizon=5, master_seed=1, initial=init)
            args.update(kw)
            with self.assertRaises(SimulationError):
                SimParams(**args)

    def test_thread_count(self):
        self.assertEqual(settings.thread_count(3), 3)
        with mock.patch.dict(os.environ, {settings.THREADS_ENV: '5'}):
            self.assertEqual(settings.thread_count(), 5)
        with mock.patch.dict(os.environ, {settings.THREADS_ENV: 'many'}):
            with self.assertRaises(SolverError):
                settings.thread_count()
        with mock.patch.dict(os.environ, {settings.THREADS_ENV: '0'}):
            self.assertGreaterEqual(settings.thread_count(), 1)


class SamplingTest(unittest.TestCase):

    def test_categorical_skips_zero_weights(self):
        for weights in ([0.5, 0.0, 0.5], [0.3, 0.7, 0.0], [0.0, 0.0, 1.0]):
            w = np.array(weights)
            u = np.arange(100000) / 100000.0
            j = simulate._categorical(w, u)
            self.assertTrue(np.all(w[j] > 0.0))
            freq = np.bincount(j, minlength=3) / u.size
            np.testing.assert_allclose(freq, w, atol=1e-4)

    def test_categorical_top_of_range(self):
        w = np.array([0.1, 0.2, 0.7, 0.0])
        self.assertEqual(int(simulate._categorical(w, np.array([1.0 - 2 ** -53]))[0]), 2)

    def test_martingale_step(self):
        rng = np.random.default_rng(40)
        for _ in range(500):
            xi = rng.dirichlet(np.ones(4))
            out = simplex_martingale_step(xi, 0.4, rng.random())
            self.assertAlmostEqual(float(out.sum()), 1.0, delta=1e-14)
            self.assertTrue(np.all(out >= 0.0))
        np.testing.assert_array_equal(simplex_martingale_step([0.0, 1.0, 0.0], 0.7, 0.2),
                                      [0.0, 1.0, 0.0])

    def test_martingale_mean(self):
        xi0 = np.array([0.2, 0.5, 0.3])
        u = np.arange(30000) / 30000.0
        xi = simulate._martingale_steps(np.tile(xi0, (u.size, 1)), 0.6, u)
        np.testing.assert_allclose(xi.mean(axis=0), xi0, atol=1e-4)

    def test_simplex_closure_over_many_steps(self):
        rng = np.random.default_rng(46)
        xi = rng.dirichlet(np.ones(4), size=10000)
        for _ in range(100):
            xi = simulate._martingale_steps(xi, 0.35, rng.random(xi.shape[0]))
            self.assertLessEqual(np.abs(xi.sum(axis=1) - 1.0).max(), 1e-12)
            self.assertGreaterEqual(xi.min(), 0.0)

    def test_binned_conditional_mean(self):
        rng = np.random.default_rng(47)
        xi = rng.dirichlet(np.ones(3), size=200000)
        step = simulate._martingale_steps(xi, 0.5, rng.random(xi.shape[0])) - xi
        bins = np.minimum((xi[:, 0] * 5).astype(int), 4)
        for b in range(5):
            d = step[bins == b]
            se = d.std(axis=0, ddof=1) / np.sqrt(d.shape[0])
            self.assertTrue(np.all(np.abs(d.mean(axis=0)) <= 4.0 * se + 1e-15), msg=b)

    def test_step_rejects_bad_input(self):
        with self.assertRaises(SimulationError):
            simplex_martingale_step([0.7, 0.7], 0.5, 0.1)
        with self.assertRaises(SimulationError):
            simplex_martingale_step([0.5, 0.5], 0.0, 0.1)

    def test_path_seeds_are_distinct(self):
        a = simulate.path_generator(path_seed(1, 0)).random(4)
        b = simulate.path_generator(path_seed(1, 1)).random(4)
        c = simulate.path_generator(path_seed(2, 0)).random(4)
        again = simulate.path_generator(path_seed(1, 0)).random(4)
        self.assertFalse(np.array_equal(a, b))
        self.assertFalse(np.array_equal(a, c))
        np.testing.assert_array_equal(a, again)


class CurveTest(unittest.TestCase):

    def test_deterministic_scalar(self):
        s = scalar_iid([0.5])
        curve = estimate_second_moment(s, params_for(s, paths=100, horizon=10))
        for k, (v, h) in enumerate(zip(curve.values, curve.half_widths)):
            self.assertAlmostEqual(v, 0.25 ** k, delta=1e-15)
            self.assertEqual(h, 0.0)
        self.assertFalse(curve.diverged)
        self.assertEqual(curve.horizon, 10)

    def test_unit_modes_are_exact(self):
        s = scalar_iid([1.0, -1.0])
        curve = estimate_second_moment(s, params_for(s, paths=300, horizon=15))
        self.assertEqual(curve.values, [1.0] * 16)
        self.assertEqual(curve.half_widths, [0.0] * 16)

    def test_independent_of_workers(self):
        s = random_markov(np.random.default_rng(41), n=2, m=3, scale=0.7)
        runs = [estimate_second_moment(s, params_for(s, paths=5000, horizon=12,
                                                     workers=w))
                for w in (1, 2, 4)]
        for other in runs[1:]:
            self.assertEqual(other.values, runs[0].values)
            self.assertEqual(other.half_widths, runs[0].half_widths)

    def test_same_seed_same_curve(self):
        s = random_iid(np.random.default_rng(42), n=2, z=3)
        a = estimate_second_moment(s, params_for(s, seed=99))
        b = estimate_second_moment(s, params_for(s, seed=99))
        c = estimate_second_moment(s, params_for(s, seed=100))
        self.assertEqual(a.values, b.values)
        self.assertNotEqual(a.values, c.values)

    def test_paths_replay(self):
        s = random_markov(np.random.default_rng(43), n=2, m=2)
        params = params_for(s, paths=3, horizon=8, seed=1234)
        curve = estimate_second_moment(s, params)
        norms = []
        for i in range(3):
            states, record = sample_path(s, params.initial, 8, path_seed(1234, i))
            self.assertEqual(states.shape, (9, 2))
            self.assertEqual(record.shape, (8,))
            norms.append(np.einsum('hi,hi->h', states, states))
        expected = [math.fsum(col) / 3 for col in np.array(norms).T]
        np.testing.assert_allclose(curve.values, expected, rtol=1e-12)

    def test_against_enumeration(self):
        rng = np.random.default_rng(44)
        models = []
        for k in range(50):
            if k % 3 == 0:
                models.append(random_iid(rng, n=2, z=int(rng.integers(2, 5)), scale=0.8))
            elif k % 3 == 1:
                models.append(random_markov(rng, n=2, m=int(rng.integers(2, 5)), scale=0.8))
            else:
                models.append(random_periodic(rng, n=2, period=2, z=2, scale=0.8))
        for s in models:
            init = default_initial(s)
            exact = enumerate_second_moment(s, init, 6)
            self.assertTrue(exact.exact)
            lifted = exact_second_moments(s, init, 6)
            np.testing.assert_allclose(exact.values, lifted, rtol=1e-10)
            curve = estimate_second_moment(s, params_for(s, paths=10000, horizon=6))
            for v, se, e in zip(curve.values, curve.standard_errors(), exact.values):
                self.assertLessEqual(abs(v - e), 4.0 * se + 1e-12)

    def test_markov_prior(self):
        s = make_markov([[[0.5]], [[1.5]]], [[0.9, 0.1], [0.2, 0.8]])
        init = parse_prior(s, '0.3,0.7')
        exact = enumerate_second_moment(s, init, 6)
        np.testing.assert_allclose(exact.values, exact_second_moments(s, init, 6), rtol=1e-12)
        # first mode distribution is prior @ transition = (0.41, 0.59)
        self.assertAlmostEqual(exact.values[1], 0.41 * 0.25 + 0.59 * 2.25, places=12)

    def test_periodic_phase(self):
        s = random_periodic(np.random.default_rng(45), n=1, period=3, z=2)
        init = parse_prior(s, '2')
        np.testing.assert_allclose(enumerate_second_moment(s, init, 7).values,
                                   exact_second_moments(s, init, 7), rtol=1e-12)

    def test_enumeration_limits(self):
        with self.assertRaises(SimulationError):
            enumerate_second_moment(scalar_iid([0.1, 0.2]), default_initial(scalar_iid([0.1])), 21)
        s = polytopic([np.eye(2)])
        with self.assertRaises(SimulationError):
            enumerate_second_moment(s, default_initial(s), 3)

    def test_divergence_truncates(self):
        s = scalar_iid([1e10])
        with self.assertLogs('momentstab.simulate', 'WARNING'):
            curve = estimate_second_moment(s, params_for(s, paths=10, horizon=12))
        self.assertTrue(curve.diverged)
        self.assertEqual(len(curve.values), 8)


class MartingaleSimulationTest(unittest.TestCase):

    def test_vertex_start_is_deterministic(self):
        a0 = np.array([[0.6, 0.2], [0.0, 0.5]])
        s = polytopic([a0, np.eye(2)], gamma=0.4)
        init = parse_prior(s, '1,0', x0=[1.0, 0.0])
        for sampler in simulate.SAMPLERS:
            curve = estimate_second_moment(s, params_for(s, paths=50, horizon=10,
                                                         initial=init, sampler=sampler))
            x = np.array([1.0, 0.0])
            for k, v in enumerate(curve.values):
                self.assertAlmostEqual(v, float(x @ x), delta=1e-14)
                self.assertEqual(curve.half_widths[k], 0.0)
                x = a0 @ x

    def test_records_stay_on_simplex(self):
        s = polytopic([0.5 * np.eye(2), np.eye(2), -np.eye(2)], gamma=0.3)
        states, record = sample_path(s, default_initial(s), 40, 17)
        self.assertEqual(record.shape, (41, 3))
        np.testing.assert_allclose(record.sum(axis=1), 1.0, atol=1e-14)
        self.assertTrue(np.all(record >= 0.0))
        for k in range(40):
            m = np.einsum('z,zij->ij', record[k], s.vertices)
            np.testing.assert_allclose(states[k + 1], m @ states[k], atol=1e-14)

    def test_frozen_needs_polytopic(self):
        s = scalar_iid([0.5])
        with self.assertRaises(SimulationError):
            estimate_second_moment(s, params_for(s, sampler='frozen'))


class DecayFitTest(unittest.TestCase):

    def test_exact_geometric(self):
        curve = enumerate_second_moment(scalar_iid([0.7]), default_initial(scalar_iid([0.7])), 30)
        fit = estimate_decay_rate(curve)
        self.assertAlmostEqual(fit.lambda_hat, 0.7, places=10)
        self.assertEqual(fit.window, (10, 31))
        self.assertLessEqual(fit.ci[0], fit.lambda_hat)
        self.assertGreaterEqual(fit.ci[1], fit.lambda_hat)

    def test_monte_carlo_rate(self):
        s = scalar_iid([0.8, 0.7])
        curve = estimate_second_moment(s, params_for(s, paths=4000, horizon=60, seed=3))
        fit = estimate_decay_rate(curve)
        self.assertAlmostEqual(fit.lambda_hat, math.sqrt(0.5 * (0.64 + 0.49)), delta=0.01)
        self.assertLessEqual(fit.ci[0], fit.lambda_hat)
        self.assertGreaterEqual(fit.ci[1], fit.lambda_hat)

    def test_rejects_short_or_bad_curves(self):
        short = enumerate_second_moment(scalar_iid([0.7]), default_initial(scalar_iid([0.7])), 5)
        with self.assertRaises(SimulationError):
            estimate_decay_rate(short)
        dead = enumerate_second_moment(scalar_iid([0.0]), default_initial(scalar_iid([0.0])), 12)
        with self.assertRaises(SimulationError):
            estimate_decay_rate(dead)
        ok = enumerate_second_moment(scalar_iid([0.7]), default_initial(scalar_iid([0.7])), 12)
        with self.assertRaises(SimulationError):
            estimate_decay_rate(ok, window=(5, 6))


if __name__ == '__main__':
    unittest.main()
