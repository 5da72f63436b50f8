import unittest
import sys
import os
import logging
import math

# Fix path
sys.path.append(os.getcwd())

from lib.config import ExperimentConfig
from lib.errors import ConfigError
from lib.evaluation import (bound_constants, error_trend, non_increasing, rate_convergence_scan, reliability_trend,
                            run_reliability_trials, simulate_session, strictly_decreasing)
from lib.experiment import build_setup
from lib.set_builder import delta_n

BEC_TRIPLE = {
    'input_law': [[0.5, 0.0], [0.0, 0.5]],
    'y1': {'type': 'bec', 'epsilon': 0.4},
    'y2': {'type': 'bec', 'epsilon': 0.3},
    'z': {'type': 'bec', 'epsilon': 0.7},
}
NOISELESS = {
    'input_law': [[0.5, 0.0], [0.0, 0.5]],
    'y1': {'type': 'bsc', 'p': 0.0},
    'y2': {'type': 'bsc', 'p': 0.0},
    'z': {'type': 'bec', 'epsilon': 0.5},
}


def make_config(channel, n, L, beta, seed=0):
    return ExperimentConfig.from_dict({
        'channel': channel, 'n': n, 'L': L, 'beta': beta, 'seed': seed,
        'construction': {'method': 'exact_bec'},
    })


def make_setup(channel, n, L, beta, seed=0):
    return build_setup(make_config(channel, n, L, beta, seed))


class TestBoundConstants(unittest.TestCase):
    def test_constants_follow_their_definitions(self):
        c = bound_constants(4, 0.3)
        d = delta_n(4, 0.3)
        self.assertAlmostEqual(c.delta_n, d)
        self.assertAlmostEqual(c.delta_1, math.sqrt(2 * 4 * d * math.log(2)))
        r = math.sqrt(4 * d * math.log(2))
        star = 2 * 4 * math.sqrt(4 * r * (8 - math.log2(2 * r)) + d) + 2 * r
        self.assertAlmostEqual(c.delta_star, star)
        self.assertAlmostEqual(c.delta_s, 2 * 4 * d + 2 * star * (16 - math.log2(star)))

    def test_reliability_bound_grows_with_blocks(self):
        c = bound_constants(64, 0.3)
        self.assertAlmostEqual(c.reliability_bound(2), 3 * (64 * c.delta_n + 2 * c.delta_star))
        self.assertLess(c.reliability_bound(2), c.reliability_bound(3))

    def test_to_dict(self):
        data = bound_constants(16, 0.25).to_dict()
        self.assertEqual(data['n'], 16)
        self.assertIn('delta_star', data)


class TestReliability(unittest.TestCase):
    def setUp(self):
        logging.basicConfig(level=logging.CRITICAL)

    def test_noiseless_receivers_never_fail(self):
        setup = make_setup(NOISELESS, 16, 3, 0.3, seed=7)
        self.assertEqual(setup.plan.case_label, 'C')
        report = run_reliability_trials(setup, 40, seed=7)
        self.assertEqual(report.session_errors, 0)
        self.assertEqual(report.block_errors_rx1, 0)
        self.assertEqual(report.block_errors_rx2, 0)
        self.assertEqual(report.per_block_rx1, [0, 0, 0])
        self.assertEqual(report.to_dict()['session_error_rate'], 0.0)

    def test_results_do_not_depend_on_workers(self):
        setup = make_setup(BEC_TRIPLE, 4, 2, 0.4, seed=3)
        serial = run_reliability_trials(setup, 130, seed=3, workers=1)
        parallel = run_reliability_trials(setup, 130, seed=3, workers=2)
        self.assertEqual(serial.to_dict(), parallel.to_dict())

    def test_session_replay(self):
        setup = make_setup(BEC_TRIPLE, 4, 2, 0.4)
        first = simulate_session(setup, seed=5, index=17)
        again = simulate_session(setup, seed=5, index=17)
        self.assertEqual(first, again)
        self.assertEqual(len(first), 2)
        self.assertEqual([r['block'] for r in first[0]], [1, 2])

    def test_needs_trials(self):
        setup = make_setup(BEC_TRIPLE, 4, 2, 0.4)
        with self.assertRaises(ConfigError):
            run_reliability_trials(setup, 0, seed=0)

    def test_error_trend(self):
        setup = make_setup(BEC_TRIPLE, 4, 2, 0.4)
        rows, passed = error_trend(setup, [0.0, 0.4], 30, seed=1)
        self.assertEqual([r['erasure'] for r in rows], [0.4, 0.0])
        self.assertEqual(rows[1]['session_errors'], 0)
        self.assertTrue(passed)

    def test_non_increasing(self):
        self.assertTrue(non_increasing([0.5, 0.3, 0.31], [0.01, 0.01, 0.01]))
        self.assertFalse(non_increasing([0.1, 0.5], [0.01, 0.01]))
        self.assertTrue(non_increasing([0.2], [0.0]))

    def test_strictly_decreasing(self):
        self.assertTrue(strictly_decreasing([0.5, 0.2, 0.05], [0.01, 0.01, 0.005]))
        # a drop inside three combined standard errors is not a drop
        self.assertFalse(strictly_decreasing([0.30, 0.27], [0.01, 0.01]))
        self.assertFalse(strictly_decreasing([0.1, 0.1], [0.0, 0.0]))
        self.assertTrue(strictly_decreasing([0.3, 0.0, 0.0], [0.01, 0.0, 0.0]))
        self.assertTrue(strictly_decreasing([], []))

    def test_reliability_trend_rebuilds_per_block_length(self):
        # Setup
        config = make_config(BEC_TRIPLE, 4, 2, 0.4, seed=1)

        # Action
        rows, passed = reliability_trend(config, [4, 2], 20, seed=1)

        # Assert
        self.assertEqual([r['n'] for r in rows], [2, 4])
        self.assertEqual(rows[0]['case'], 'undefined')
        self.assertEqual(rows[1]['case'], 'C')
        self.assertEqual(rows[1]['trials'], 20)
        self.assertFalse(passed)

    def test_reliability_trend_matches_direct_trials(self):
        config = make_config(BEC_TRIPLE, 4, 2, 0.4, seed=1)
        rows, _ = reliability_trend(config, [4], 25, seed=9)
        direct = run_reliability_trials(make_setup(BEC_TRIPLE, 4, 2, 0.4, seed=1), 25, seed=9)
        self.assertEqual(rows[0]['session_errors'], direct.session_errors)


class TestRateScan(unittest.TestCase):
    def setUp(self):
        logging.basicConfig(level=logging.CRITICAL)
        self.spec = make_setup(BEC_TRIPLE, 4, 2, 0.4).spec

    def test_scan_rows(self):
        rows = rate_convergence_scan(self.spec, 0.4, [2, 4], 'exact_bec', L_list=(2, 4))
        self.assertEqual([(r['n'], r['L'], r['case']) for r in rows],
                         [(2, 2, 'undefined'), (2, 4, 'undefined'), (4, 2, 'C'), (4, 4, 'C')])
        self.assertAlmostEqual(rows[2]['r_w'], 0.25)
        self.assertAlmostEqual(rows[2]['target_r_w'], 0.3)
        self.assertAlmostEqual(rows[2]['gap_r_w'], 0.05)
        # the side-information key is spread over L blocks
        self.assertAlmostEqual(rows[2]['key_rate'], 2 * rows[3]['key_rate'])

    @unittest.skipUnless(os.environ.get("POLAR_SLOW_TESTS"), "slow: long block lengths")
    def test_rates_approach_corner_point(self):
        l8, l16 = rate_convergence_scan(self.spec, 0.1, [4096], 'exact_bec', L_list=(8, 16))
        self.assertNotEqual(l8['case'], 'undefined')
        self.assertLess(abs(l8['r_w'] - 0.3), 0.05)
        self.assertLess(abs(l16['r_w'] - 0.3), 0.05)
        ratio = l8['key_rate'] / l16['key_rate']
        self.assertTrue(1.6 <= ratio <= 2.4, ratio)
        # X = V leaves no randomness to draw, so the rate is zero at every L
        if l8['extra_randomness_rate'] == 0:
            self.assertEqual(l16['extra_randomness_rate'], 0)
        else:
            ratio = l8['extra_randomness_rate'] / l16['extra_randomness_rate']
            self.assertTrue(1.6 <= ratio <= 2.4, ratio)

    @unittest.skipUnless(os.environ.get("POLAR_SLOW_TESTS"), "slow: many trials")
    def test_error_rate_falls_as_legitimate_channels_improve(self):
        setup = make_setup(BEC_TRIPLE, 64, 2, 'auto')
        rows, passed = error_trend(setup, [0.4, 0.3, 0.2, 0.1, 0.0], 200, seed=2, workers=2)
        self.assertTrue(passed)
        self.assertEqual(rows[-1]['session_errors'], 0)

    @unittest.skipUnless(os.environ.get("POLAR_SLOW_TESTS"), "slow: many trials at long block lengths")
    def test_error_rate_falls_as_block_length_grows(self):
        config = make_config(BEC_TRIPLE, 64, 2, 'auto', seed=5)
        rows, passed = reliability_trend(config, [64, 256, 1024], 2000, seed=5, workers=2)
        self.assertTrue(all(r['case'] != 'undefined' for r in rows))
        self.assertTrue(passed, rows)


if __name__ == '__main__':
    unittest.main()
