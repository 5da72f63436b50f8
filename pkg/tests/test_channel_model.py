import unittest
import sys
import os
import logging

import numpy as np

# Fix path
sys.path.append(os.getcwd())

from lib.channel_model import (ComponentChannel, DmsSpec, chi_square_check, conditional_entropy,
                               corner_point_rates, estimate_conditional_entropy, joint_table, sample_outputs,
                               sample_source, validate_and_order)
from lib.errors import ConfigError, DegenerateChannel, PolarChainError


def bec_triple(e1=0.4, e2=0.3, ez=0.7):
    return DmsSpec.from_config({
        'input_law': [[0.5, 0.0], [0.0, 0.5]],
        'y1': {'type': 'bec', 'epsilon': e1},
        'y2': {'type': 'bec', 'epsilon': e2},
        'z': {'type': 'bec', 'epsilon': ez},
    })


class TestChannelModel(unittest.TestCase):
    def setUp(self):
        logging.basicConfig(level=logging.CRITICAL)
        self.spec = bec_triple()

    def test_component_from_config(self):
        bec = ComponentChannel.from_config({'type': 'bec', 'epsilon': 0.25})
        self.assertEqual(bec.output_size, 3)
        np.testing.assert_allclose(bec.matrix, [[0.75, 0.0, 0.25], [0.0, 0.75, 0.25]])
        self.assertEqual(bec.erasure_probability, 0.25)

        self.assertEqual(ComponentChannel.from_config({'type': 'bsc', 'p': 0.0}).erasure_probability, 0.0)
        self.assertEqual(ComponentChannel.from_config({'type': 'bsc', 'p': 0.5}).erasure_probability, 1.0)
        self.assertIsNone(ComponentChannel.from_config({'type': 'bsc', 'p': 0.1}).erasure_probability)

        with self.assertRaises(ConfigError):
            ComponentChannel.from_config({'type': 'awgn'})

    def test_invalid_spec_lists_every_problem(self):
        # Setup
        cfg = {
            'input_law': [[0.5, 0.0], [0.0, 0.4]],
            'y1': {'type': 'matrix', 'rows': [[0.5, 0.4], [0.0, 1.0]]},
            'y2': {'type': 'bsc', 'p': 0.0},
            'z': {'type': 'bec', 'epsilon': 0.5},
        }

        # Action
        with self.assertRaises(ConfigError) as cm:
            DmsSpec.from_config(cfg)

        # Assert
        message = str(cm.exception)
        self.assertIn("input_law sums to", message)
        self.assertIn("Component 'y1' rows [0]", message)
        self.assertTrue(issubclass(ConfigError, PolarChainError))

    def test_missing_components(self):
        with self.assertRaises(ConfigError):
            DmsSpec.from_config({'input_law': [[0.5, 0.0], [0.0, 0.5]], 'y1': {'type': 'bsc', 'p': 0.0}})

    def test_config_round_trip(self):
        self.assertEqual(DmsSpec.from_config(self.spec.to_config()), self.spec)

    def test_joint_table_shapes(self):
        self.assertEqual(joint_table(self.spec, 'V').shape, (1, 2))
        self.assertEqual(joint_table(self.spec, 'V|Z').shape, (3, 2))
        self.assertEqual(joint_table(self.spec, 'X|V').shape, (2, 2))
        self.assertEqual(joint_table(self.spec, 'X|VZ').shape, (6, 2))
        for cond in ('V', 'V|Y1', 'V|Z', 'X|V', 'X|VZ'):
            self.assertAlmostEqual(joint_table(self.spec, cond).sum(), 1.0)
        with self.assertRaises(KeyError):
            joint_table(self.spec, 'Y1|V')

    def test_conditional_entropy_of_erasure_channels(self):
        self.assertAlmostEqual(conditional_entropy(joint_table(self.spec, 'V|Z')), 0.7)
        self.assertAlmostEqual(conditional_entropy(joint_table(self.spec, 'V|Y1')), 0.4)
        self.assertAlmostEqual(conditional_entropy(joint_table(self.spec, 'V')), 1.0)
        self.assertAlmostEqual(conditional_entropy(joint_table(self.spec, 'X|V')), 0.0)

    def test_validate_and_order_keeps_order(self):
        report = validate_and_order(self.spec)
        self.assertFalse(report.swapped)
        self.assertTrue(report.satisfies_assumption)
        self.assertAlmostEqual(report.h_v_given_y1, 0.4)
        self.assertAlmostEqual(report.h_v_given_y2, 0.3)
        self.assertAlmostEqual(report.h_v_given_z, 0.7)

    def test_validate_and_order_swaps_receivers(self):
        report = validate_and_order(bec_triple(e1=0.3, e2=0.4))
        self.assertTrue(report.swapped)
        self.assertEqual(report.spec.y1.erasure_probability, 0.4)
        self.assertEqual(report.spec.y2.erasure_probability, 0.3)

    def test_degenerate_channel(self):
        with self.assertRaises(DegenerateChannel):
            validate_and_order(bec_triple(ez=0.35))

    def test_corner_point_rates(self):
        rates = corner_point_rates(self.spec)
        self.assertAlmostEqual(rates.r_w, 0.3)
        self.assertAlmostEqual(rates.r_s, 0.3)
        self.assertAlmostEqual(rates.r_r, 0.0)

    def test_noiseless_outputs_repeat_input(self):
        spec = DmsSpec.from_config({
            'input_law': [[0.5, 0.0], [0.0, 0.5]],
            'y1': {'type': 'bsc', 'p': 0.0},
            'y2': {'type': 'bsc', 'p': 0.0},
            'z': {'type': 'bec', 'epsilon': 1.0},
        })
        rng = np.random.default_rng(3)
        v, x = sample_source(spec, 64, rng)
        np.testing.assert_array_equal(v, x)
        y1, y2, z = sample_outputs(spec, x, rng)
        np.testing.assert_array_equal(y1, x)
        np.testing.assert_array_equal(y2, x)
        self.assertTrue(np.all(z == 2))

    def test_sampled_statistics(self):
        rng = np.random.default_rng(5)
        estimate, stderr = estimate_conditional_entropy(self.spec, 'V|Z', 20000, rng)
        self.assertLess(abs(estimate - 0.7), 0.03)
        self.assertGreater(stderr, 0.0)
        self.assertGreater(chi_square_check(self.spec, 'z', 1, 20000, rng), 1e-4)


if __name__ == '__main__':
    unittest.main()
