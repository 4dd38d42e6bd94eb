# tests/test_common.py

import unittest

from momentstab.common import (EXIT_CODES, ConvergenceError, MomentStabError,
                               ModelError, SolverError, Verdict, check_rate)


class ErrorTest(unittest.TestCase):

    def test_description_prefix(self):
        self.assertEqual(str(SolverError('no such P')), 'Solver error: no such P')
        self.assertEqual(str(MomentStabError('a', 'b')), 'Stability analysis error: a b')

    def test_description_override(self):
        e = ModelError('row 2 sums to 0.9', description='Transition error')
        self.assertEqual(str(e), 'Transition error: row 2 sums to 0.9')
        self.assertEqual(ModelError.description, 'Model error')

    def test_builtin_bases(self):
        self.assertIsInstance(ModelError('x'), ValueError)
        self.assertIsInstance(ConvergenceError('x'), ArithmeticError)
        self.assertIsInstance(SolverError('x'), MomentStabError)

    def test_only_known_keywords(self):
        # structured context is carried in the message, not in attributes
        self.assertFalse(hasattr(ModelError('x'), 'context'))


class RateTest(unittest.TestCase):

    def test_open_interval(self):
        self.assertEqual(check_rate('0.25'), 0.25)
        for bad in (0.0, 1.0, -1.0, float('nan')):
            with self.assertRaises(SolverError):
                check_rate(bad)

    def test_exit_codes(self):
        self.assertEqual([EXIT_CODES[v] for v in Verdict], [0, 1, 2, 2])


if __name__ == '__main__':
    unittest.main()
