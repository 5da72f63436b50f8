"""
Exact and estimated information leakage to the eavesdropper.

Exact quantities come from enumerating every branch of the encoder's random
choices: a program is replayed with a BranchingBits source that walks the
choice tree depth first. Deterministic draws (posterior 0 or 1, argmax)
never branch, so the leaves are exactly the outcomes with positive weight.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import entropy

from lib.chain_codec import KeyMaterial, sample_block
from lib.channel_model import TOLERANCE, DmsSpec, sample_outputs
from lib.errors import BudgetExceeded
from lib.evaluation import bound_constants
from lib.experiment import ExperimentSetup
from lib.polar_core import polar_transform
from lib.set_builder import PolarizedSets
from lib.utils import bits_to_int, derive_rng

EXACT_MAX_N = 6
CONFIDENCE = 0.99


class BranchingBits:
    """Bit source that follows a recorded choice prefix, then takes branch 0."""

    def __init__(self, prefix):
        self.prefix = prefix
        self.choices = []
        self.weight = 1.0

    def _branch(self, p1: float) -> int:
        t = len(self.choices)
        bit = self.prefix[t] if t < len(self.prefix) else 0
        self.choices.append(bit)
        self.weight *= p1 if bit else 1.0 - p1
        return bit

    def uniform(self, k: int) -> np.ndarray:
        return np.array([self._branch(0.5) for _ in range(k)], dtype=np.uint8)

    def bernoulli(self, p1: float) -> int:
        if p1 <= TOLERANCE:
            return 0
        if p1 >= 1.0 - TOLERANCE:
            return 1
        return self._branch(p1)


def enumerate_branches(program, max_leaves: int = None):
    """Yields (weight, program(source)) for every leaf of the choice tree."""
    prefix = []
    leaves = 0
    while True:
        source = BranchingBits(prefix)
        result = program(source)
        leaves += 1
        if max_leaves is not None and leaves > max_leaves:
            raise BudgetExceeded(f"Enumeration exceeded {max_leaves} leaves")
        yield source.weight, result
        choices = source.choices
        k = len(choices) - 1
        while k >= 0 and choices[k] == 1:
            k -= 1
        if k < 0:
            return
        prefix = choices[:k] + [1]


def output_law(matrix: np.ndarray, x) -> np.ndarray:
    """Law of the output vector for input vector x, flattened with symbol 0 most significant."""
    law = np.ones(1)
    for symbol in np.asarray(x).ravel():
        law = np.kron(law, matrix[int(symbol)])
    return law


def mutual_information(joint: np.ndarray) -> float:
    """I(A; B) in bits from a 2-D joint table (rows A, columns B)."""
    joint = np.asarray(joint, dtype=float)
    total = joint.sum()
    if total <= 0:
        return 0.0
    joint = joint / total
    value = entropy(joint.sum(axis=1), base=2) + entropy(joint.sum(axis=0), base=2) - entropy(joint.ravel(), base=2)
    return float(max(value, 0.0))


def conditional_mutual_information(joint: np.ndarray) -> float:
    """I(A; B | C) in bits for joint[c, a, b]."""
    joint = np.asarray(joint, dtype=float)
    joint = joint / joint.sum()
    h = lambda t: entropy(t.ravel(), base=2)
    value = h(joint.sum(axis=2)) + h(joint.sum(axis=1)) - h(joint.sum(axis=(1, 2))) - h(joint)
    return float(max(value, 0.0))


@dataclass
class LeakageReport:
    exact_leakage_bits: Optional[float] = None
    no_key_leakage_bits: Optional[float] = None
    plugin_estimate_bits: Optional[float] = None
    plugin_ci: Optional[tuple] = None
    plugin_samples: int = 0
    tv_distance: Optional[float] = None
    delta_star: Optional[float] = None
    confidential_bits: int = 0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        data = asdict(self)
        if self.plugin_ci is not None:
            data['plugin_ci'] = list(self.plugin_ci)
        return data


class _Labels:
    """Assigns dense row indices to hashable outcome labels."""

    def __init__(self):
        self.index = {}

    def __call__(self, label) -> int:
        return self.index.setdefault(label, len(self.index))

    def __len__(self):
        return len(self.index)


def _uniform_bits(setup: ExperimentSetup) -> int:
    encoder = setup.encoder()
    dims = encoder.message_dimensions()
    lengths = encoder.key_lengths()
    slots = encoder.slots
    middle_v = len(slots.not_h_v) - len(setup.sets.L('V'))
    middle_x = setup.n - len(slots.h_xv) - len(setup.sets.L('X|V'))
    return (
        setup.L * dims.w + dims.s_total(setup.L) + setup.L * dims.r
        + lengths['kappa_theta'] + lengths['kappa_gamma'] + lengths['lambda0_x']
        + len(setup.plan.R1) + setup.L * (middle_v + middle_x)
    )


def session_budget(setup: ExperimentSetup) -> float:
    """Upper estimate of (branches x eavesdropper outcomes) for a full session."""
    return 2.0 ** _uniform_bits(setup) * float(setup.spec.z.output_size) ** (setup.n * setup.L)


def _block_branches(sets: PolarizedSets) -> float:
    """Upper estimate of the number of single-block encoder branches."""
    free_v = sets.n - len(sets.L('V'))
    free_x = sets.n - len(sets.L('X|V'))
    return 2.0 ** (free_v + free_x)


def _symbols_to_int(symbols, base: int) -> int:
    value = 0
    for s in symbols:
        value = value * base + int(s)
    return value


def _check_budget(estimate: float, budget: int, what: str):
    if estimate > budget:
        raise BudgetExceeded(f"{what}: estimated enumeration size {estimate:.3g} exceeds budget {budget}")


def _session_program(setup: ExperimentSetup, no_key: bool, label):
    encoder = setup.encoder()
    lengths = encoder.key_lengths()

    def program(source):
        # Side-information keys never reach the channel input, so they stay fixed.
        keys = KeyMaterial(
            np.zeros(lengths['kappa_theta'], dtype=np.uint8) if no_key else source.uniform(lengths['kappa_theta']),
            np.zeros(lengths['kappa_gamma'], dtype=np.uint8) if no_key else source.uniform(lengths['kappa_gamma']),
            np.zeros(lengths['kappa_upsilon_phi_1'], dtype=np.uint8),
            np.zeros(lengths['kappa_upsilon_phi_2'], dtype=np.uint8),
            source.uniform(lengths['lambda0_x']),
        )
        W, S, R = encoder.random_inputs(source)
        ciphertext, states = encoder.encode_with_trace(W, S, R, keys, source)
        return label(W, S, states), ciphertext.x_blocks

    return program


def _secret_label(W, S, states):
    return bits_to_int(np.concatenate([np.asarray(s, dtype=np.uint8) for s in S]))


def _accumulate(program, matrix: np.ndarray, max_leaves: int):
    labels = _Labels()
    rows = {}
    for weight, (label, x_blocks) in enumerate_branches(program, max_leaves):
        row = labels(label)
        law = weight * output_law(matrix, x_blocks)
        rows[row] = rows[row] + law if row in rows else law
    joint = np.array([rows[i] for i in range(len(labels))])
    return joint, labels


def exact_leakage(setup: ExperimentSetup, budget: int, no_key_ablation: bool = False) -> LeakageReport:
    """I(S_1..L; Z_1..L) in bits by exhaustive enumeration of the session."""
    if setup.n > EXACT_MAX_N or setup.L > 2:
        raise BudgetExceeded(f"Exact leakage is limited to n <= {EXACT_MAX_N}, L <= 2 (got n={setup.n}, L={setup.L})")
    _check_budget(session_budget(setup), budget, 'exact leakage')
    dims = setup.encoder().message_dimensions()
    report = LeakageReport(confidential_bits=dims.s_total(setup.L))
    if report.confidential_bits == 0:
        report.exact_leakage_bits = 0.0
        report.no_key_leakage_bits = 0.0 if no_key_ablation else None
        return report

    matrix = setup.spec.z.matrix
    joint, _ = _accumulate(_session_program(setup, False, _secret_label), matrix, budget)
    report.exact_leakage_bits = min(mutual_information(joint), float(report.confidential_bits))
    if no_key_ablation:
        joint, _ = _accumulate(_session_program(setup, True, _secret_label), matrix, budget)
        report.no_key_leakage_bits = mutual_information(joint)
    logging.info(f"Exact leakage n={setup.n} L={setup.L}: {report.exact_leakage_bits:.6g} bits")
    return report


def _plugin_mi(counts: np.ndarray) -> float:
    """Miller-Madow corrected plug-in mutual information in bits."""
    total = counts.sum()
    correction = lambda c: (np.count_nonzero(c) - 1) / (2.0 * total * np.log(2))
    h = lambda c: entropy(c.ravel(), base=2) + correction(c)
    return float(h(counts.sum(axis=1)) + h(counts.sum(axis=0)) - h(counts))


def plugin_leakage(setup: ExperimentSetup, samples: int, bootstrap: int, seed: int) -> LeakageReport:
    """Plug-in I(S; Z) from sampled sessions, with a basic bootstrap interval."""
    encoder = setup.encoder()
    z_size = setup.spec.z.output_size
    secrets, outputs = [], []
    for k in range(samples):
        keys = encoder.generate_keys(derive_rng(seed, 'keys', k))
        W, S, R = encoder.random_inputs(derive_rng(seed, 'messages', k))
        ciphertext = encoder.encode_session(W, S, R, keys, derive_rng(seed, 'encoder', k))
        rng = derive_rng(seed, 'leakage', k)
        z = [sample_outputs(setup.spec, x, rng)[2] for x in ciphertext.x_blocks]
        secrets.append(_secret_label(W, S, None))
        outputs.append(_symbols_to_int(np.concatenate(z), z_size))

    _, s_idx = np.unique(secrets, return_inverse=True)
    _, z_idx = np.unique(outputs, return_inverse=True)
    counts = np.zeros((s_idx.max() + 1, z_idx.max() + 1))
    np.add.at(counts, (s_idx, z_idx), 1)
    estimate = max(_plugin_mi(counts), 0.0)

    rng = derive_rng(seed, 'bootstrap')
    p_hat = (counts / samples).ravel()
    replicas = np.array([
        _plugin_mi(rng.multinomial(samples, p_hat).reshape(counts.shape).astype(float))
        for _ in range(bootstrap)
    ])
    alpha = 1.0 - CONFIDENCE
    lo_q, hi_q = np.quantile(replicas, [alpha / 2, 1 - alpha / 2])
    ci = (max(2 * estimate - hi_q, 0.0), max(2 * estimate - lo_q, 0.0))

    dims = encoder.message_dimensions()
    logging.info(f"Plug-in leakage: {estimate:.4g} bits, {CONFIDENCE:.0%} CI [{ci[0]:.4g}, {ci[1]:.4g}]")
    return LeakageReport(plugin_estimate_bits=estimate, plugin_ci=ci, plugin_samples=samples,
                         confidential_bits=dims.s_total(setup.L))


def _dms_block_law(spec: DmsSpec, a_int: int, t_int: int, n: int) -> float:
    a = np.array([(a_int >> (n - 1 - k)) & 1 for k in range(n)], dtype=np.uint8)
    t = np.array([(t_int >> (n - 1 - k)) & 1 for k in range(n)], dtype=np.uint8)
    v, x = polar_transform(a), polar_transform(t)
    return float(np.prod(spec.p_vx[v, x]))


def tv_distance_check(spec: DmsSpec, sets: PolarizedSets, budget: int) -> LeakageReport:
    """
    Total variation between the single-block encoder law of (A, T) and the
    source law, both exact.
    """
    n = sets.n
    if n > EXACT_MAX_N:
        raise BudgetExceeded(f"TV check is limited to n <= {EXACT_MAX_N}, got n={n}")
    _check_budget(_block_branches(sets), budget, 'TV check')

    q = {}
    for weight, (a, t, _, _) in enumerate_branches(lambda source: sample_block(spec, sets, source), budget):
        key = (bits_to_int(a), bits_to_int(t))
        q[key] = q.get(key, 0.0) + weight

    size = 2 ** n
    p = np.array([[_dms_block_law(spec, a, t, n) for t in range(size)] for a in range(size)])
    q_table = np.zeros_like(p)
    for (a, t), w in q.items():
        q_table[a, t] = w
    tv = float(0.5 * np.abs(q_table - p).sum())
    d_star = bound_constants(n, sets.beta).delta_star
    logging.info(f"TV distance n={n}: {tv:.6g} (delta*={d_star:.3g})")
    return LeakageReport(tv_distance=min(tv, 1.0), delta_star=d_star)


def block_secrecy_quantity(spec: DmsSpec, sets: PolarizedSets, budget: int) -> float:
    """I(A[H_V|Z], T[H_X|VZ]; Z) of one block under the single-block encoder law."""
    h_vz = list(sets.H('V|Z'))
    h_xvz = list(sets.H('X|VZ'))
    _check_budget(_block_branches(sets) * spec.z.output_size ** sets.n, budget, 'block secrecy')

    def program(source):
        a, t, _, x = sample_block(spec, sets, source)
        return (bits_to_int(a[h_vz]), bits_to_int(t[h_xvz])), x

    joint, _ = _accumulate(program, spec.z.matrix, budget)
    return mutual_information(joint)


def one_time_pad_gap(length: int, p1: float = 0.3) -> float:
    """I(Theta; Theta xor kappa) for a biased Theta and a uniform key."""
    def program(source):
        theta = np.array([source.bernoulli(p1) for _ in range(length)], dtype=np.uint8)
        kappa = source.uniform(length)
        return bits_to_int(theta), bits_to_int(theta ^ kappa)

    size = 2 ** length
    joint = np.zeros((size, size))
    for weight, (theta, padded) in enumerate_branches(program):
        joint[theta, padded] += weight
    return mutual_information(joint)


def chained_dependence(setup: ExperimentSetup, budget: int) -> float:
    """
    I(Z_2; earlier block | block-2 conditioning) for L = 2. The conditioning
    is S_2, the chained content of block 2, Lambda_X and the keyed part of W_2;
    the earlier block is (W_1, S_1, Z_1).
    """
    if setup.L != 2:
        setup = setup.with_L(2)
    _check_budget(session_budget(setup), budget, 'chained dependence')
    p = setup.plan.partition
    encoder = setup.encoder()
    chained = sorted(set(p.G) - set(encoder.slots.s_slots(2)))
    keyed = sorted(set(p.C1) | set(p.C12))
    n, z_size = setup.n, setup.spec.z.output_size

    def label(W, S, states):
        second = states[1].a_tilde
        cond = (bits_to_int(S[1]), bits_to_int(second[chained]), bits_to_int(states[1].lambda_x),
                bits_to_int(second[keyed]))
        earlier = (bits_to_int(W[0]), bits_to_int(S[0]))
        return cond, earlier

    joint, labels = _accumulate(_session_program(setup, False, label), setup.spec.z.matrix, budget)
    conds, earliers = _Labels(), _Labels()
    placed = [(conds(c), earliers(e)) for (c, e) in labels.index]
    block = z_size ** n
    table = np.zeros((len(conds), len(earliers), block, block))
    for row, (ci, ei) in enumerate(placed):
        table[ci, ei] += joint[row].reshape(block, block)
    # fold (earlier, Z_1) into one axis against Z_2
    return conditional_mutual_information(table.reshape(len(conds), len(earliers) * block, block))


@dataclass
class SuiteCheck:
    name: str
    passed: bool
    value: float
    hard: bool = True
    detail: str = ''


def independence_suite(setup: ExperimentSetup, budget: int, previous: Optional[PolarizedSets] = None) -> list:
    """
    (a) block secrecy quantity against a smaller block length (trend, soft),
    (b) one-time-pad independence for key lengths 1..3 (exact),
    (c) conditional independence of block 2's output from block 1 (exact).
    """
    checks = []
    value = block_secrecy_quantity(setup.spec, setup.sets, budget)
    if previous is not None:
        before = block_secrecy_quantity(setup.spec, previous, budget)
        checks.append(SuiteCheck('block_secrecy_trend', value <= before + 1e-12, value, hard=False,
                                 detail=f"n={previous.n}: {before:.6g}, n={setup.n}: {value:.6g}"))
    else:
        checks.append(SuiteCheck('block_secrecy', True, value, hard=False, detail=f"n={setup.n}"))

    worst = max(one_time_pad_gap(k) for k in (1, 2, 3))
    checks.append(SuiteCheck('one_time_pad', worst < 1e-10, worst))

    cmi = chained_dependence(setup, budget)
    checks.append(SuiteCheck('chained_independence', cmi < 1e-10, cmi))
    return checks
