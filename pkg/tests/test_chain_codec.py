import unittest
import sys
import os
import logging

import numpy as np

# Fix path
sys.path.append(os.getcwd())
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from chain_fixtures import case_setup
from lib.chain_codec import ChainEncoder, KeyMaterial, SessionCiphertext, SlotMap, fill_rules, sample_block
from lib.channel_model import DmsSpec
from lib.errors import DimensionMismatch, InfeasiblePlan, LengthMismatch
from lib.polar_core import polar_transform
from lib.set_builder import build_polarized_sets, classify_case, compute_entropies, derive_chaining_plan, \
    partition_high_set


def bec_setup(n=4, beta=0.4):
    spec = DmsSpec.from_config({
        'input_law': [[0.5, 0.0], [0.0, 0.5]],
        'y1': {'type': 'bec', 'epsilon': 0.4},
        'y2': {'type': 'bec', 'epsilon': 0.3},
        'z': {'type': 'bec', 'epsilon': 0.7},
    })
    sets = build_polarized_sets(compute_entropies(spec, n, 'exact_bec'), n, beta)
    partition = partition_high_set(sets)
    plan = derive_chaining_plan(partition, classify_case(partition))
    return spec, sets, plan


class TestSlotMap(unittest.TestCase):
    def setUp(self):
        logging.basicConfig(level=logging.CRITICAL)
        self.spec, self.sets, self.plan = bec_setup()

    def test_confidential_slots_per_block(self):
        slots = SlotMap.build(self.plan, self.sets, 3)
        self.assertEqual(slots.s_slots(1), (0, 1, 2))
        self.assertEqual(slots.s_slots(2), (2,))
        self.assertEqual(slots.s_slots(3), (2,))

    def test_side_information_sets(self):
        slots = SlotMap.build(self.plan, self.sets, 3)
        self.assertEqual(slots.upsilon[1], (0, 1))
        self.assertEqual(slots.upsilon[2], (0,))
        self.assertEqual(slots.phi[1], ())
        self.assertEqual(slots.side_key_length(1), 2)

    def test_fill_rules(self):
        rules = fill_rules(self.sets, 'X|V', 'X|V')
        self.assertEqual(rules, {0: 'argmax', 1: 'argmax', 2: 'argmax', 3: 'argmax'})
        self.assertEqual(fill_rules(self.sets, 'V', 'V'), {})


class TestChainEncoder(unittest.TestCase):
    def setUp(self):
        logging.basicConfig(level=logging.CRITICAL)
        self.spec, self.sets, self.plan = bec_setup()
        self.encoder = ChainEncoder(self.spec, self.sets, self.plan, 2)

    def test_needs_two_blocks(self):
        with self.assertRaises(DimensionMismatch):
            ChainEncoder(self.spec, self.sets, self.plan, 1)

    def test_message_dimensions(self):
        dims = self.encoder.message_dimensions()
        self.assertEqual((dims.w, dims.s_first, dims.s_mid, dims.s_last, dims.r), (1, 3, 1, 1, 0))
        self.assertEqual(dims.s_total(2), 4)
        self.assertEqual(dims.s_total(5), 7)

    def test_key_lengths(self):
        lengths = ChainEncoder(self.spec, self.sets, self.plan, 4).key_lengths()
        self.assertEqual(lengths, {
            'kappa_theta': 0,
            'kappa_gamma': 0,
            'kappa_upsilon_phi_1': 2,
            'kappa_upsilon_phi_2': 1,
            'lambda0_x': 0,
        })

    def test_session_places_messages(self):
        # Setup
        rng = np.random.default_rng(0)
        keys = self.encoder.generate_keys(rng)
        W = [np.array([1], dtype=np.uint8), np.array([0], dtype=np.uint8)]
        S = [np.array([1, 0, 1], dtype=np.uint8), np.array([1], dtype=np.uint8)]
        R = [np.zeros(0, dtype=np.uint8)] * 2

        # Action
        ciphertext, states = self.encoder.encode_with_trace(W, S, R, keys, rng)

        # Assert
        self.assertEqual(ciphertext.x_blocks.shape, (2, 4))
        first, second = states[0].a_tilde, states[1].a_tilde
        self.assertEqual(first[3], 1)
        self.assertEqual(second[3], 0)
        np.testing.assert_array_equal(first[[0, 1, 2]], [1, 0, 1])
        self.assertEqual(second[2], 1)
        # the chained bits of block 1 (R_Lambda) repeat in block 2
        np.testing.assert_array_equal(second[[0, 1]], first[[0, 1]])
        for state in states:
            np.testing.assert_array_equal(state.x, polar_transform(state.a_tilde))

    def test_side_information_is_padded(self):
        rng = np.random.default_rng(1)
        keys = self.encoder.generate_keys(rng)
        W, S, R = self.encoder.random_inputs(rng)
        ciphertext, states = self.encoder.encode_with_trace(W, S, R, keys, rng)
        plain = ciphertext.public_side_info[0] ^ keys.kappa_upsilon_phi_1
        np.testing.assert_array_equal(plain, states[0].a_tilde[[0, 1]])
        plain = ciphertext.public_side_info[1] ^ keys.kappa_upsilon_phi_2
        np.testing.assert_array_equal(plain, states[1].a_tilde[[0]])

    def test_encoding_is_deterministic_per_seed(self):
        def run(seed):
            rng = np.random.default_rng(seed)
            keys = self.encoder.generate_keys(rng)
            W, S, R = self.encoder.random_inputs(rng)
            return self.encoder.encode_session(W, S, R, keys, rng)

        np.testing.assert_array_equal(run(5).x_blocks, run(5).x_blocks)

    def test_input_sizes_are_checked_together(self):
        rng = np.random.default_rng(2)
        keys = self.encoder.generate_keys(rng)
        W = [np.zeros(2, dtype=np.uint8)] * 2
        S = [np.zeros(3, dtype=np.uint8), np.zeros(2, dtype=np.uint8)]
        R = [np.zeros(0, dtype=np.uint8)] * 2
        with self.assertRaises(DimensionMismatch) as cm:
            self.encoder.encode_session(W, S, R, keys, rng)
        self.assertIn("|W_1|=2", str(cm.exception))
        self.assertIn("|S_2|=2", str(cm.exception))

    def test_block_count_checked(self):
        rng = np.random.default_rng(2)
        keys = self.encoder.generate_keys(rng)
        W, S, R = self.encoder.random_inputs(rng)
        with self.assertRaises(DimensionMismatch):
            self.encoder.encode_session(W[:1], S, R, keys, rng)

    def test_form_a_g_rejects_wrong_lengths(self):
        with self.assertRaises(LengthMismatch):
            self.encoder.form_a_g(1, np.zeros(2, dtype=np.uint8))

    def test_form_a_g_first_block(self):
        assignments, pi, lam = self.encoder.form_a_g(1, [1, 1, 0])
        self.assertEqual(assignments, {0: 1, 1: 1, 2: 0})
        self.assertEqual(len(pi), 0)
        np.testing.assert_array_equal(lam, [1, 1])

    def test_form_a_g_detects_double_writes(self):
        _, _, plan = case_setup('A')
        broken = plan.__class__(
            plan.case_label, plan.R1, plan.R1p, plan.R2, plan.R2p, plan.R12, plan.R12p,
            plan.I + plan.R1, plan.R_S, plan.R_Lambda, plan.split_sizes, plan.partition,
        )
        spec, sets, _ = case_setup('A')
        encoder = ChainEncoder(spec, sets, broken, 3)
        s_first = len(encoder.slots.s_slots(1))
        with self.assertRaises(InfeasiblePlan):
            encoder.form_a_g(1, np.zeros(s_first, dtype=np.uint8),
                             theta_bar_next=np.zeros(1, dtype=np.uint8), gamma_bar_next=np.zeros(1, dtype=np.uint8))

    def test_channel_prefix_dimensions(self):
        with self.assertRaises(DimensionMismatch):
            self.encoder.channel_prefix(np.zeros(4, dtype=np.uint8), np.zeros(1, dtype=np.uint8),
                                        np.zeros(0, dtype=np.uint8), np.random.default_rng(0))

    def test_channel_prefix_copies_v_when_x_equals_v(self):
        v = np.array([1, 0, 0, 1], dtype=np.uint8)
        x, lam, _ = self.encoder.channel_prefix(v, np.zeros(0, dtype=np.uint8), np.zeros(0, dtype=np.uint8),
                                                np.random.default_rng(0))
        np.testing.assert_array_equal(x, v)
        self.assertEqual(len(lam), 0)

    def test_serialization(self):
        rng = np.random.default_rng(3)
        keys = self.encoder.generate_keys(rng)
        W, S, R = self.encoder.random_inputs(rng)
        ciphertext = self.encoder.encode_session(W, S, R, keys, rng)
        restored = SessionCiphertext.from_dict(ciphertext.to_dict())
        np.testing.assert_array_equal(restored.x_blocks, ciphertext.x_blocks)
        for a, b in zip(restored.public_side_info, ciphertext.public_side_info):
            np.testing.assert_array_equal(a, b)
        again = KeyMaterial.from_dict(keys.to_dict())
        np.testing.assert_array_equal(again.kappa_upsilon_phi_1, keys.kappa_upsilon_phi_1)


class TestEveryCase(unittest.TestCase):
    def setUp(self):
        logging.basicConfig(level=logging.CRITICAL)

    def test_sessions_encode_for_every_case(self):
        for case in 'ABCD':
            spec, sets, plan = case_setup(case)
            self.assertEqual(plan.case_label, case)
            for L in (2, 3, 4):
                encoder = ChainEncoder(spec, sets, plan, L)
                rng = np.random.default_rng(L)
                keys = encoder.generate_keys(rng)
                W, S, R = encoder.random_inputs(rng)
                ciphertext, states = encoder.encode_with_trace(W, S, R, keys, rng)
                self.assertEqual(ciphertext.x_blocks.shape, (L, 16))
                for i, state in enumerate(states, start=1):
                    np.testing.assert_array_equal(state.a_tilde[list(plan.partition.C)], W[i - 1])
                    np.testing.assert_array_equal(state.a_tilde[list(encoder.slots.s_slots(i))], S[i - 1])

    def test_single_block_sample(self):
        spec, sets, _ = case_setup('C')
        a, t, v, x = sample_block(spec, sets, np.random.default_rng(0))
        np.testing.assert_array_equal(v, polar_transform(a))
        np.testing.assert_array_equal(x, v)
        self.assertEqual(len(t), 16)


if __name__ == '__main__':
    unittest.main()
