import argparse
import logging
import os
import sys

import numpy as np
import yaml

from lib.chain_codec import SESSION_FORMAT, SESSION_VERSION, KeyMaterial, SessionCiphertext
from lib.channel_model import TOLERANCE, DmsSpec, sample_outputs
from lib.config import ExperimentConfig, load_config
from lib.decoder import ChainDecoder, block_report
from lib.errors import BudgetExceeded, ConfigError, PolarChainError
from lib.evaluation import (bound_constants, error_trend, rate_convergence_scan, reliability_trend,
                            run_reliability_trials)
from lib.experiment import build_setup
from lib.leakage import exact_leakage, independence_suite, plugin_leakage, tv_distance_check
from lib.set_builder import ChainingPlan, PolarizedSets, SetBuilder, build_polarized_sets, compute_entropies
from lib.utils import (LIBRARY_VERSION, config_hash, derive_rng, format_check, format_sizes, read_json,
                       setup_logging, write_csv, write_json)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SUITE = 3
EXIT_BUDGET = 4


def _provenance(config: ExperimentConfig) -> dict:
    return {'config_hash': config_hash(config.identity()), 'seed': config.seed, 'version': LIBRARY_VERSION}


def _bits_lists(seqs) -> list:
    return [[int(b) for b in s] for s in seqs]


def cmd_construct(config: ExperimentConfig, args) -> int:
    setup = build_setup(config)
    summary = setup.summary()

    print("\n--- Construction ---")
    print(f"Case {summary['case']} (n={setup.n}, beta={setup.sets.beta}, delta_n={setup.sets.delta_n:.4g})")
    if setup.order.swapped:
        print("Receivers exchanged so that receiver 1 is the weaker one.")
    print(format_sizes('partition', summary['partition']))
    print(format_sizes('slots', summary['slots']))
    rates = summary['rates']
    print(f"    rates: R_W={rates['r_w']:.4f}, R_S={rates['r_s']:.4f}, R_R={rates['r_r']:.4f}, "
          f"key={rates['key_rate']:.4f}, extra randomness={rates['extra_randomness_rate']:.4f}")

    write_json(os.path.join(config.out_dir, 'construct.json'), {
        **_provenance(config),
        'summary': summary,
        'sets': setup.sets.to_dict(),
        'plan': setup.plan.to_dict(),
    })
    return EXIT_OK


def cmd_encode(config: ExperimentConfig, args) -> int:
    setup = build_setup(config)
    encoder = setup.encoder()
    keys = encoder.generate_keys(derive_rng(config.seed, 'keys', 0))
    if args.messages:
        given = read_json(args.messages)
        W, S, R = (
            [np.array(block, dtype=np.uint8) for block in given[name]] for name in ('W', 'S', 'R')
        )
    else:
        W, S, R = encoder.random_inputs(derive_rng(config.seed, 'messages', 0))
    ciphertext = encoder.encode_session(W, S, R, keys, derive_rng(config.seed, 'encoder', 0))

    rng = derive_rng(config.seed, 'channel', 0)
    observations = {'y1': [], 'y2': [], 'z': []}
    for x in ciphertext.x_blocks:
        for name, out in zip(('y1', 'y2', 'z'), sample_outputs(setup.spec, x, rng)):
            observations[name].append([int(s) for s in out])

    out = config.out_dir
    write_json(os.path.join(out, 'session.json'), {
        **_provenance(config),
        'format': SESSION_FORMAT,
        'session_version': SESSION_VERSION,
        'L': setup.L,
        'channel': setup.spec.to_config(),
        'sets': setup.sets.to_dict(),
        'plan': setup.plan.to_dict(),
        'ciphertext': ciphertext.to_dict(),
    })
    write_json(os.path.join(out, 'messages.json'), {'W': _bits_lists(W), 'S': _bits_lists(S), 'R': _bits_lists(R)})
    write_json(os.path.join(out, 'observations.json'), observations)
    if args.withhold_keys:
        logging.info("Keys withheld from the output directory")
    else:
        write_json(os.path.join(out, 'keys.json'), keys.to_dict())

    print(f"\nEncoded {setup.L} blocks of length {setup.n} (case {setup.plan.case_label}) into {out}")
    return EXIT_OK


def cmd_decode(config: ExperimentConfig, args) -> int:
    out = config.out_dir
    session = read_json(args.session or os.path.join(out, 'session.json'))
    if session.get('format') != SESSION_FORMAT or session.get('session_version') != SESSION_VERSION:
        raise ConfigError(f"Unsupported session artifact (format={session.get('format')}, "
                          f"version={session.get('session_version')})")
    keys = KeyMaterial.from_dict(read_json(args.keys or os.path.join(out, 'keys.json')))
    observations = read_json(args.observations or os.path.join(out, 'observations.json'))
    spec = DmsSpec.from_config(session['channel'])
    sets = PolarizedSets.from_dict(session['sets'])
    plan = ChainingPlan.from_dict(session['plan'])
    ciphertext = SessionCiphertext.from_dict(session['ciphertext'])
    decoder = ChainDecoder(spec, sets, plan, session['L'])

    messages_path = args.messages or os.path.join(out, 'messages.json')
    reference = read_json(messages_path) if os.path.exists(messages_path) else None

    result = {'config_hash': session['config_hash'], 'seed': session['seed'], 'version': LIBRARY_VERSION}
    print("\n--- Decoding ---")
    for k, name in ((1, 'y1'), (2, 'y2')):
        W_hat, S_hat = decoder.decode(k, keys, ciphertext, np.array(observations[name]))
        entry = {'W': _bits_lists(W_hat), 'S': _bits_lists(S_hat)}
        if reference is not None:
            rows = block_report(reference['W'], reference['S'], W_hat, S_hat)
            entry['blocks'] = rows
            wrong = [r['block'] for r in rows if not (r['w_correct'] and r['s_correct'])]
            status = 'PASS' if not wrong else 'FAIL'
            print(format_check(status, 'decode', f"receiver {k}", f"wrong blocks {wrong}" if wrong else None))
        result[f"receiver_{k}"] = entry
    write_json(os.path.join(out, 'decoded.json'), result)
    return EXIT_OK


def _reliability_check(setup, report) -> dict:
    noiseless = max(setup.order.h_v_given_y1, setup.order.h_v_given_y2) <= TOLERANCE
    return {
        'suite': 'reliability',
        'name': 'noiseless_exact_recovery' if noiseless else 'session_error_rate',
        'passed': report.session_errors == 0 if noiseless else True,
        'hard': noiseless,
        'value': report.session_error_rate,
    }


def cmd_run(config: ExperimentConfig, args) -> int:
    builder = SetBuilder(config.sets_cache, config.workers)
    setup = build_setup(config, builder)
    out = config.out_dir
    report = {**_provenance(config), 'config': config.identity(), 'setup': setup.summary(), 'suites': {}}
    checks = []

    for suite in config.suites:
        logging.info(f"Running suite '{suite}'...")
        if suite == 'reliability':
            trial_report = run_reliability_trials(setup, config.trials, config.seed, config.workers)
            report['suites']['reliability'] = trial_report.to_dict()
            checks.append(_reliability_check(setup, trial_report))
        elif suite == 'trend':
            report['suites']['trend'] = {}
            if config.trend_erasures:
                rows, passed = error_trend(setup, config.trend_erasures, config.trials, config.seed, config.workers)
                report['suites']['trend']['erasure'] = rows
                write_csv(os.path.join(out, 'trend.csv'), rows)
                checks.append({'suite': 'trend', 'name': 'error_monotonicity', 'passed': passed, 'hard': False})
            if config.trend_n:
                rows, passed = reliability_trend(config, config.trend_n, config.trials, config.seed,
                                                 config.workers, builder)
                report['suites']['trend']['block_length'] = rows
                write_csv(os.path.join(out, 'trend_n.csv'), rows)
                checks.append({'suite': 'trend', 'name': 'error_decreases_with_n', 'passed': passed, 'hard': True})
        elif suite == 'leakage':
            leak = exact_leakage(setup, config.budget, config.no_key_ablation)
            report['suites']['leakage'] = leak.to_dict()
            within = 0.0 <= leak.exact_leakage_bits <= leak.confidential_bits
            checks.append({'suite': 'leakage', 'name': 'exact_leakage_range', 'passed': within, 'hard': True,
                           'value': leak.exact_leakage_bits})
        elif suite == 'plugin_leakage':
            leak = plugin_leakage(setup, config.leakage_samples, config.bootstrap, config.seed)
            report['suites']['plugin_leakage'] = leak.to_dict()
            exact = report['suites'].get('leakage', {}).get('exact_leakage_bits')
            if exact is not None:
                lo, hi = leak.plugin_ci
                checks.append({'suite': 'plugin_leakage', 'name': 'exact_within_ci', 'passed': lo <= exact <= hi,
                               'hard': False, 'value': leak.plugin_estimate_bits})
        elif suite == 'tv':
            tv = tv_distance_check(setup.spec, setup.sets, config.budget)
            report['suites']['tv'] = tv.to_dict()
            checks.append({'suite': 'tv', 'name': 'tv_in_unit_interval', 'passed': 0.0 <= tv.tv_distance <= 1.0,
                           'hard': True, 'value': tv.tv_distance})
        elif suite == 'independence':
            previous = None
            if setup.n >= 4:
                profile = compute_entropies(setup.spec, setup.n // 2, config.method, config.samples, config.seed,
                                            config.workers)
                previous = build_polarized_sets(profile, setup.n // 2, setup.sets.beta)
            results = independence_suite(setup, config.budget, previous)
            report['suites']['independence'] = [vars(c) for c in results]
            checks.extend({'suite': 'independence', 'name': c.name, 'passed': c.passed, 'hard': c.hard,
                           'value': c.value} for c in results)
        elif suite == 'scan':
            rows = rate_convergence_scan(setup.spec, config.beta, config.scan_n or [config.n], config.method,
                                         config.scan_L or [config.L], builder, config.samples, config.seed)
            report['suites']['scan'] = rows
            write_csv(os.path.join(out, 'scan.csv'), rows)

    report['constants'] = bound_constants(setup.n, setup.sets.beta).to_dict()
    report['checks'] = checks
    write_json(os.path.join(out, 'report.json'), report)
    write_csv(os.path.join(out, 'checks.csv'), checks, ['suite', 'name', 'passed', 'hard', 'value'])

    print("\n--- Suite Results ---")
    failed = False
    for c in checks:
        status = 'PASS' if c['passed'] else ('FAIL' if c['hard'] else 'WARN')
        print(format_check(status, c['suite'], c['name'], c.get('value')))
        failed = failed or (c['hard'] and not c['passed'])
    return EXIT_SUITE if failed else EXIT_OK


def cmd_report(config: ExperimentConfig, args) -> int:
    path = os.path.join(config.out_dir, 'report.json')
    if not os.path.exists(path):
        raise ConfigError(f"No report found at {path}; run the 'run' command first")
    report = read_json(path)
    setup = report['setup']
    print(f"\n--- Report {report['config_hash'][:12]} (seed {report['seed']}, v{report['version']}) ---")
    print(f"Case {setup['case']}, n={setup['n']}, L={setup['L']}, beta={setup['beta']}")
    print(format_sizes('partition', setup['partition']))
    for name in sorted(report['suites']):
        print(f"    suite '{name}' recorded")
    for c in report['checks']:
        status = 'PASS' if c['passed'] else ('FAIL' if c['hard'] else 'WARN')
        print(format_check(status, c['suite'], c['name'], c.get('value')))
    return EXIT_OK


COMMANDS = {
    'construct': cmd_construct,
    'encode': cmd_encode,
    'decode': cmd_decode,
    'run': cmd_run,
    'report': cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', required=True, help="Experiment YAML/JSON file")
    common.add_argument('--seed', type=int, help="Override the master seed")
    common.add_argument('--workers', type=int, help="Worker processes for trials and Monte-Carlo estimation")
    common.add_argument('--sets-cache', help="Directory of cached polarized sets")
    common.add_argument('--out', help="Output directory")
    common.add_argument('--suite', action='append', help="Suite to run (repeatable)")
    common.add_argument('--verbose', action='store_true', help="Debug logging")

    parser = argparse.ArgumentParser(description="Chained polar coding for the wiretap broadcast channel")
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('construct', parents=[common], help="Build polarized sets and the chaining plan")
    encode = sub.add_parser('encode', parents=[common], help="Encode one session")
    encode.add_argument('--messages', help="JSON file with W, S, R blocks (default: drawn from the seed)")
    encode.add_argument('--withhold-keys', action='store_true', help="Do not write keys.json")
    decode = sub.add_parser('decode', parents=[common], help="Decode a session at both receivers")
    decode.add_argument('--session', help="Session artifact (default: OUT/session.json)")
    decode.add_argument('--keys', help="Key file (default: OUT/keys.json)")
    decode.add_argument('--observations', help="Observation file (default: OUT/observations.json)")
    decode.add_argument('--messages', help="Reference messages for the correctness report")
    sub.add_parser('run', parents=[common], help="Run evaluation suites")
    sub.add_parser('report', parents=[common], help="Summarize the last run")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(logging.DEBUG if args.verbose else logging.INFO)

    try:
        config = load_config(args.config).with_overrides(
            seed=args.seed, workers=args.workers, sets_cache=args.sets_cache, out_dir=args.out, suites=args.suite,
        )
        return COMMANDS[args.command](config, args)
    except BudgetExceeded as e:
        logging.error(e)
        return EXIT_BUDGET
    except (PolarChainError, ValueError, KeyError, yaml.YAMLError, OSError) as e:
        logging.error(e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
