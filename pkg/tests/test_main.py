import unittest
from unittest.mock import patch
import sys
import os
import io
import logging
import tempfile
from contextlib import redirect_stdout

import yaml

# Fix path
sys.path.append(os.getcwd())

import main
from lib.leakage import LeakageReport
from lib.utils import read_json

NOISELESS = os.path.join('environments', 'dev', 'noiseless.yaml')
TINY = os.path.join('environments', 'dev', 'tiny_leakage.yaml')


class TestMain(unittest.TestCase):
    def setUp(self):
        logging.basicConfig(level=logging.CRITICAL)
        self.tmp = tempfile.TemporaryDirectory()
        self.out = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def run_cli(self, *argv):
        buffer = io.StringIO()
        with redirect_stdout(buffer):
            code = main.main(list(argv))
        return code, buffer.getvalue()

    def test_construct(self):
        code, output = self.run_cli('construct', '--config', NOISELESS, '--out', self.out)
        self.assertEqual(code, main.EXIT_OK)
        self.assertIn("Case C", output)
        record = read_json(os.path.join(self.out, 'construct.json'))
        self.assertEqual(record['summary']['case'], 'C')
        self.assertEqual(record['seed'], 7)
        self.assertIn('config_hash', record)

    def test_encode_then_decode(self):
        # Action
        code, _ = self.run_cli('encode', '--config', NOISELESS, '--out', self.out)
        self.assertEqual(code, main.EXIT_OK)
        code, output = self.run_cli('decode', '--config', NOISELESS, '--out', self.out)

        # Assert
        self.assertEqual(code, main.EXIT_OK)
        self.assertIn("[+] PASS decode 'receiver 1'", output)
        self.assertIn("[+] PASS decode 'receiver 2'", output)
        decoded = read_json(os.path.join(self.out, 'decoded.json'))
        messages = read_json(os.path.join(self.out, 'messages.json'))
        self.assertEqual(decoded['receiver_1']['S'], messages['S'])
        self.assertEqual(decoded['receiver_2']['W'], messages['W'])

    def test_decode_needs_keys(self):
        self.run_cli('encode', '--config', NOISELESS, '--out', self.out, '--withhold-keys')
        self.assertFalse(os.path.exists(os.path.join(self.out, 'keys.json')))
        code, _ = self.run_cli('decode', '--config', NOISELESS, '--out', self.out)
        self.assertEqual(code, main.EXIT_CONFIG)

    def test_run_and_report(self):
        code, output = self.run_cli('run', '--config', TINY, '--out', self.out, '--suite', 'leakage', '--suite', 'tv')
        self.assertEqual(code, main.EXIT_OK)
        self.assertIn("[+] PASS leakage 'exact_leakage_range'", output)
        report = read_json(os.path.join(self.out, 'report.json'))
        self.assertAlmostEqual(report['suites']['leakage']['exact_leakage_bits'], 0.5)
        self.assertAlmostEqual(report['suites']['tv']['tv_distance'], 0.0)
        self.assertTrue(os.path.exists(os.path.join(self.out, 'checks.csv')))

        code, output = self.run_cli('report', '--config', TINY, '--out', self.out)
        self.assertEqual(code, main.EXIT_OK)
        self.assertIn("Case C", output)

    def test_report_without_run(self):
        code, _ = self.run_cli('report', '--config', TINY, '--out', self.out)
        self.assertEqual(code, main.EXIT_CONFIG)

    def test_reports_are_reproducible(self):
        first = os.path.join(self.out, 'a')
        second = os.path.join(self.out, 'b')
        self.run_cli('run', '--config', NOISELESS, '--out', first, '--workers', '1')
        self.run_cli('run', '--config', NOISELESS, '--out', second, '--workers', '2')
        for name in ('report.json', 'checks.csv'):
            with open(os.path.join(first, name), 'rb') as a, open(os.path.join(second, name), 'rb') as b:
                self.assertEqual(a.read(), b.read(), name)

    def test_seed_override_changes_provenance(self):
        self.run_cli('construct', '--config', NOISELESS, '--out', self.out, '--seed', '8')
        self.assertEqual(read_json(os.path.join(self.out, 'construct.json'))['seed'], 8)

    def test_hard_failure_exit_code(self):
        broken = LeakageReport(exact_leakage_bits=3.0, confidential_bits=2)
        with patch('main.exact_leakage', return_value=broken):
            code, output = self.run_cli('run', '--config', TINY, '--out', self.out, '--suite', 'leakage')
        self.assertEqual(code, main.EXIT_SUITE)
        self.assertIn("[-] FAIL leakage 'exact_leakage_range'", output)

    def test_budget_exit_code(self):
        code, _ = self.run_cli('run', '--config', NOISELESS, '--out', self.out, '--suite', 'leakage')
        self.assertEqual(code, main.EXIT_BUDGET)

    def test_block_length_trend_is_a_hard_check(self):
        # Setup
        path = os.path.join(self.out, 'trend.yaml')
        with open(NOISELESS) as f:
            data = yaml.safe_load(f)
        data['trend'] = {'n_list': [8, 16]}
        with open(path, 'w') as f:
            yaml.safe_dump(data, f)
        rows = [{'n': 8, 'case': 'C', 'session_error_rate': 0.1}, {'n': 16, 'case': 'C', 'session_error_rate': 0.2}]

        # Action
        with patch('main.reliability_trend', return_value=(rows, False)) as trend:
            code, output = self.run_cli('run', '--config', path, '--out', self.out, '--suite', 'trend')

        # Assert
        self.assertEqual(code, main.EXIT_SUITE)
        self.assertIn("[-] FAIL trend 'error_decreases_with_n'", output)
        self.assertEqual(trend.call_args[0][1], [8, 16])
        report = read_json(os.path.join(self.out, 'report.json'))
        self.assertEqual(report['suites']['trend']['block_length'], rows)
        self.assertNotIn('erasure', report['suites']['trend'])
        self.assertTrue(os.path.exists(os.path.join(self.out, 'trend_n.csv')))
        self.assertFalse(os.path.exists(os.path.join(self.out, 'trend.csv')))

    def test_config_exit_codes(self):
        path = os.path.join(self.out, 'bad.yaml')
        with open(NOISELESS) as f:
            data = yaml.safe_load(f)
        data['beta'] = 0.6
        with open(path, 'w') as f:
            yaml.safe_dump(data, f)
        code, _ = self.run_cli('construct', '--config', path, '--out', self.out)
        self.assertEqual(code, main.EXIT_CONFIG)

        code, _ = self.run_cli('construct', '--config', os.path.join(self.out, 'missing.yaml'))
        self.assertEqual(code, main.EXIT_CONFIG)

        code, _ = self.run_cli('run', '--config', NOISELESS, '--out', self.out, '--suite', 'nonsense')
        self.assertEqual(code, main.EXIT_CONFIG)


if __name__ == '__main__':
    unittest.main()
