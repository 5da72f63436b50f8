import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from lib.channel_model import ComponentChannel, DmsSpec, corner_point_rates, sample_outputs
from lib.config import ExperimentConfig
from lib.decoder import block_report
from lib.errors import CaseUndefined, ConfigError, InfeasiblePlan
from lib.experiment import ExperimentSetup, build_setup
from lib.set_builder import SetBuilder, delta_n, rate_report
from lib.utils import derive_rng

TREND_SIGMAS = 3.0
CHUNK = 64
M_CONSTANT = 2.0


@dataclass(frozen=True)
class BoundConstants:
    n: int
    beta: float
    delta_n: float
    delta_1: float
    delta_2: float
    delta_star: float
    delta_s: float

    def reliability_bound(self, L: int) -> float:
        return L * (L + 1) / 2 * (self.n * self.delta_n + 2 * self.delta_star)

    def to_dict(self) -> dict:
        return asdict(self)


def bound_constants(n: int, beta: float) -> BoundConstants:
    """The analytic finite-length constants as functions of (n, beta)."""
    d = delta_n(n, beta)
    ln2 = math.log(2)
    d1 = math.sqrt(2 * n * d * ln2)
    d2 = M_CONSTANT * n * math.sqrt(2 * math.sqrt(2) * d1 * (2 * n - math.log2(math.sqrt(2) * d1)) + d)
    root = math.sqrt(n * d * ln2)
    d_star = 2 * n * math.sqrt(4 * root * (2 * n - math.log2(2 * root)) + d) + 2 * root
    d_s = 2 * n * d + 2 * d_star * (4 * n - math.log2(d_star))
    return BoundConstants(n, beta, d, d1, d2, d_star, d_s)


@dataclass
class TrialReport:
    n: int
    L: int
    case_label: str
    trials: int
    block_errors_rx1: int
    block_errors_rx2: int
    session_errors: int
    bound_value: float
    delta_star: float
    per_block_rx1: list = field(default_factory=list)
    per_block_rx2: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)

    def rate(self, count: int) -> float:
        return count / self.trials

    def standard_error(self, count: int) -> float:
        p = self.rate(count)
        return math.sqrt(p * (1 - p) / self.trials)

    @property
    def session_error_rate(self) -> float:
        return self.rate(self.session_errors)

    def to_dict(self) -> dict:
        data = asdict(self)
        data['session_error_rate'] = self.session_error_rate
        data['session_error_se'] = self.standard_error(self.session_errors)
        return data


def simulate_session(setup: ExperimentSetup, seed: int, index: int, channel: DmsSpec = None):
    """
    One encoded session through sampled channels, decoded by both receivers.
    Returns per-block correctness rows for receivers 1 and 2.
    """
    channel = channel or setup.spec
    encoder = setup.encoder()
    keys = encoder.generate_keys(derive_rng(seed, 'keys', index))
    W, S, R = encoder.random_inputs(derive_rng(seed, 'messages', index))
    ciphertext = encoder.encode_session(W, S, R, keys, derive_rng(seed, 'encoder', index))

    rng = derive_rng(seed, 'channel', index)
    y1, y2 = [], []
    for x in ciphertext.x_blocks:
        o1, o2, _ = sample_outputs(channel, x, rng)
        y1.append(o1)
        y2.append(o2)

    decoder = setup.decoder(channel)
    rows = []
    for k, obs in ((1, y1), (2, y2)):
        W_hat, S_hat = decoder.decode(k, keys, ciphertext, np.array(obs))
        rows.append(block_report(W, S, W_hat, S_hat))
    return rows


def _trial_chunk(args):
    setup, channel, seed, indices = args
    return [simulate_session(setup, seed, t, channel) for t in indices]


def _tally(setup: ExperimentSetup, results, trials: int) -> TrialReport:
    L = setup.L
    per_block = {1: [0] * L, 2: [0] * L}
    errors = {1: 0, 2: 0}
    sessions = 0
    for rows_1, rows_2 in results:
        wrong_any = False
        for k, rows in ((1, rows_1), (2, rows_2)):
            wrong = [not (r['w_correct'] and r['s_correct']) for r in rows]
            for i, bad in enumerate(wrong):
                per_block[k][i] += int(bad)
            if any(wrong):
                errors[k] += 1
                wrong_any = True
        sessions += int(wrong_any)
    constants = bound_constants(setup.n, setup.sets.beta)
    return TrialReport(
        setup.n, L, setup.plan.case_label, trials,
        errors[1], errors[2], sessions,
        constants.reliability_bound(L), constants.delta_star,
        per_block[1], per_block[2], constants.to_dict(),
    )


def run_reliability_trials(setup: ExperimentSetup, trials: int, seed: int, workers: int = 1,
                           channel: DmsSpec = None) -> TrialReport:
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    chunks = [list(range(s, min(s + CHUNK, trials))) for s in range(0, trials, CHUNK)]
    jobs = [(setup, channel, seed, idx) for idx in chunks]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_trial_chunk, jobs))
    else:
        parts = [_trial_chunk(job) for job in jobs]
    results = [r for part in parts for r in part]
    report = _tally(setup, results, trials)
    logging.info(
        f"Reliability n={setup.n} L={setup.L}: {report.session_errors}/{trials} session errors "
        f"(rx1 {report.block_errors_rx1}, rx2 {report.block_errors_rx2}); bound {report.bound_value:.3g}"
    )
    return report


def non_increasing(values, errors, sigmas: float = TREND_SIGMAS) -> bool:
    """True when no step increases by more than `sigmas` combined standard errors."""
    for (a, ea), (b, eb) in zip(zip(values, errors), zip(values[1:], errors[1:])):
        if b - a > sigmas * math.hypot(ea, eb):
            return False
    return True


def error_trend(setup: ExperimentSetup, erasures, trials: int, seed: int, workers: int = 1):
    """
    Session error rate over a grid of legitimate-channel erasure probabilities,
    with the sets and plan held fixed. Rows are ordered from the noisiest
    channel to the cleanest. Returns (rows, passed).
    """
    rows = []
    for eps in sorted(erasures, reverse=True):
        bec = ComponentChannel.from_config({'type': 'bec', 'epsilon': eps})
        channel = setup.spec.replace_components(y1=bec, y2=bec)
        report = run_reliability_trials(setup, trials, seed, workers, channel)
        rows.append({
            'erasure': eps,
            'trials': trials,
            'session_errors': report.session_errors,
            'session_error_rate': report.session_error_rate,
            'standard_error': report.standard_error(report.session_errors),
        })
    passed = non_increasing([r['session_error_rate'] for r in rows], [r['standard_error'] for r in rows])
    return rows, passed


def strictly_decreasing(values, errors, sigmas: float = TREND_SIGMAS) -> bool:
    """
    True when every step drops by more than `sigmas` combined standard errors.
    A step from zero observed errors to zero observed errors passes.
    """
    for (a, ea), (b, eb) in zip(zip(values, errors), zip(values[1:], errors[1:])):
        if a == 0 and b == 0:
            continue
        if a - b <= sigmas * math.hypot(ea, eb):
            return False
    return True


def reliability_trend(config: ExperimentConfig, n_list, trials: int, seed: int, workers: int = 1,
                      builder: SetBuilder = None):
    """
    Session error rate as the block length grows, rebuilding the sets and plan
    for every n in `n_list` on the configured channel. Returns (rows, passed);
    passed requires a defined case at every n and a strict drop between neighbours.
    """
    builder = builder or SetBuilder(config.sets_cache, workers)
    rows, rates, errors = [], [], []
    passed = True
    for n in sorted(n_list):
        try:
            setup = build_setup(config, builder, n=n)
        except (CaseUndefined, InfeasiblePlan) as e:
            logging.warning(f"Error trend skips n={n}: {e}")
            rows.append({'n': n, 'case': 'undefined'})
            passed = False
            continue
        report = run_reliability_trials(setup, trials, seed, workers)
        se = report.standard_error(report.session_errors)
        rows.append({
            'n': n,
            'case': setup.plan.case_label,
            'trials': trials,
            'session_errors': report.session_errors,
            'session_error_rate': report.session_error_rate,
            'standard_error': se,
        })
        rates.append(report.session_error_rate)
        errors.append(se)
    passed = passed and strictly_decreasing(rates, errors)
    logging.info(f"Error trend over n={sorted(n_list)}: {'decreasing' if passed else 'not decreasing'}")
    return rows, passed


def rate_convergence_scan(spec: DmsSpec, beta, n_list, method: str, L_list=(2,), builder: SetBuilder = None,
                          samples: int = 100_000, seed: int = 0):
    """Rate report per (n, L) next to the corner-point targets."""
    builder = builder or SetBuilder()
    target = corner_point_rates(spec)
    rows = []
    for n in n_list:
        try:
            sets, _, plan = builder.construct(spec, n, beta, method, samples, seed)
        except (CaseUndefined, InfeasiblePlan) as e:
            logging.warning(f"Rate scan n={n}: no chaining plan ({e})")
            for L in L_list:
                rows.append({'n': n, 'L': L, 'case': 'undefined'})
            continue
        for L in L_list:
            rates = rate_report(plan, sets, n, L)
            rows.append({
                'n': n,
                'L': L,
                'beta': sets.beta,
                'case': plan.case_label,
                'r_w': rates.r_w,
                'r_s': rates.r_s,
                'r_r': rates.r_r,
                'key_rate': rates.key_rate,
                'extra_randomness_rate': rates.extra_randomness_rate,
                'target_r_w': target.r_w,
                'target_r_s': target.r_s,
                'target_r_r': target.r_r,
                'gap_r_w': abs(target.r_w - rates.r_w),
                'gap_r_s': abs(target.r_s - rates.r_s),
                'gap_r_r': abs(target.r_r - rates.r_r),
            })
    return rows
