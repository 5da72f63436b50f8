import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import entropy

from lib.channel_model import CONDITIONINGS, DmsSpec, joint_table
from lib.errors import CaseUndefined, InfeasiblePlan, MethodUnsupported
from lib.polar_core import polar_transform, sc_surprisal
from lib.utils import config_hash, derive_rng, is_power_of_two, read_json, write_json

METHODS = ('exact_bec', 'monte_carlo', 'enumeration')
ENUMERATION_MAX_N = 8
ENUMERATION_MAX_CELLS = 50_000_000
MC_CHUNK = 2048
CACHE_VERSION = 1
DEFAULT_BETA = 0.3
BETA_GRID = tuple(round(0.49 - 0.01 * k, 2) for k in range(49))

_ERASURE_COMPONENT = {'V|Y1': 'y1', 'V|Y2': 'y2', 'V|Z': 'z'}


def _sorted(indices) -> tuple:
    return tuple(sorted(int(i) for i in indices))


def delta_n(n: int, beta: float) -> float:
    return 2.0 ** (-(n ** beta))


@dataclass(frozen=True)
class EntropyProfile:
    n: int
    method: str
    entropies: dict
    std_errors: Optional[dict] = None
    samples: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            'n': self.n,
            'method': self.method,
            'samples': self.samples,
            'seed': self.seed,
            'entropies': {c: [float(v) for v in e] for c, e in self.entropies.items()},
            'std_errors': None if self.std_errors is None else
            {c: [float(v) for v in e] for c, e in self.std_errors.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'EntropyProfile':
        std = data.get('std_errors')
        return cls(
            data['n'], data['method'],
            {c: np.array(e) for c, e in data['entropies'].items()},
            None if std is None else {c: np.array(e) for c, e in std.items()},
            data.get('samples', 0), data.get('seed', 0),
        )


@dataclass(frozen=True)
class PolarizedSets:
    n: int
    beta: float
    delta_n: float
    high: dict
    low: dict
    entropies: dict = field(compare=False, repr=False)

    def H(self, conditioning: str) -> tuple:
        return self.high[conditioning]

    def L(self, conditioning: str) -> tuple:
        return self.low[conditioning]

    def complement(self, indices) -> tuple:
        return _sorted(set(range(self.n)) - set(indices))

    def to_dict(self) -> dict:
        return {
            'n': self.n,
            'beta': self.beta,
            'delta_n': self.delta_n,
            'high': {c: list(v) for c, v in self.high.items()},
            'low': {c: list(v) for c, v in self.low.items()},
            'entropies': {c: [float(x) for x in v] for c, v in self.entropies.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'PolarizedSets':
        return cls(
            data['n'], data['beta'], data['delta_n'],
            {c: tuple(v) for c, v in data['high'].items()},
            {c: tuple(v) for c, v in data['low'].items()},
            {c: tuple(v) for c, v in data.get('entropies', {}).items()},
        )


@dataclass(frozen=True)
class HighSetPartition:
    G: tuple
    C: tuple
    G0: tuple
    G1: tuple
    G2: tuple
    G12: tuple
    C0: tuple
    C1: tuple
    C2: tuple
    C12: tuple

    def sizes(self) -> dict:
        return {k: len(v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class SplitSizes:
    """Lengths of the first ('1') and second ('2') halves of the chained sequences."""
    psi1: int
    psi2: int
    gamma1: int
    gamma2: int
    theta_bar1: int
    theta_bar2: int
    gamma_bar1: int
    gamma_bar2: int


@dataclass(frozen=True)
class ChainingPlan:
    case_label: str
    R1: tuple
    R1p: tuple
    R2: tuple
    R2p: tuple
    R12: tuple
    R12p: tuple
    I: tuple
    R_S: tuple
    R_Lambda: tuple
    split_sizes: SplitSizes
    partition: HighSetPartition

    SLOT_NAMES = ('R1', 'R1p', 'R2', 'R2p', 'R12', 'R12p', 'I', 'R_S', 'R_Lambda')

    def slots(self) -> dict:
        return {name: getattr(self, name) for name in self.SLOT_NAMES}

    @property
    def I_G2(self) -> tuple:
        return _sorted(set(self.I) & set(self.partition.G2))

    def to_dict(self) -> dict:
        data = {name: list(v) for name, v in self.slots().items()}
        data['case_label'] = self.case_label
        data['split_sizes'] = asdict(self.split_sizes)
        data['partition'] = {k: list(v) for k, v in asdict(self.partition).items()}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'ChainingPlan':
        return cls(
            data['case_label'],
            *(tuple(data[name]) for name in cls.SLOT_NAMES),
            SplitSizes(**data['split_sizes']),
            HighSetPartition(**{k: tuple(v) for k, v in data['partition'].items()}),
        )


@dataclass(frozen=True)
class RateReport:
    n: int
    L: int
    r_w: float
    r_s: float
    r_r: float
    key_rate: float
    extra_randomness_rate: float

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- entropies

def _bec_recursion(eps: float, n: int) -> np.ndarray:
    z = np.array([eps], dtype=float)
    while z.size < n:
        z = np.stack([2 * z - z * z, z * z], axis=1).ravel()
    return z


def _exact_bec(spec: DmsSpec, n: int) -> dict:
    if not spec.v_uniform:
        raise MethodUnsupported("exact_bec requires a uniform V")
    result = {'V': np.ones(n)}
    for cond, name in _ERASURE_COMPONENT.items():
        eps = spec.component(name).erasure_probability
        if not spec.x_equals_v or eps is None:
            raise MethodUnsupported(
                f"exact_bec requires X = V and an erasure component for {cond}; "
                f"use monte_carlo or enumeration"
            )
        result[cond] = _bec_recursion(eps, n)
    result['X|V'] = np.zeros(n)
    result['X|VZ'] = np.zeros(n)
    return result


def _u_order(n: int) -> np.ndarray:
    """perm[u] = x with x . G_n = u, over integer-coded length-n vectors."""
    codes = np.arange(2 ** n)
    x_bits = ((codes[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.uint8)
    u_bits = polar_transform(x_bits)
    u_codes = (u_bits.astype(np.int64) << np.arange(n - 1, -1, -1)).sum(axis=1)
    perm = np.empty(2 ** n, dtype=np.int64)
    perm[u_codes] = codes
    return perm


def _enumerate_conditioning(table: np.ndarray, n: int) -> np.ndarray:
    # Drop side outcomes that never occur; they carry no mass.
    table = table[table.sum(axis=1) > 0]
    sides = table.shape[0]
    if sides ** n * 2 ** n > ENUMERATION_MAX_CELLS:
        raise MethodUnsupported(f"enumeration over {sides}^{n} side outcomes is too large")
    joint = table.copy()
    for _ in range(n - 1):
        joint = np.einsum('ab,cd->acbd', joint, table).reshape(joint.shape[0] * sides, -1)
    joint = joint[:, _u_order(n)]
    entropies = np.zeros(n)
    previous = entropy(joint.sum(axis=1), base=2)
    for j in range(1, n + 1):
        marginal = joint.reshape(joint.shape[0], 2 ** j, 2 ** (n - j)).sum(axis=2)
        current = entropy(marginal.ravel(), base=2)
        entropies[j - 1] = current - previous
        previous = current
    return np.clip(entropies, 0.0, 1.0)


def _monte_carlo_chunk(args):
    table, n, count, seed, c_idx, chunk = args
    rng = derive_rng(seed, 'entropy', c_idx, chunk)
    flat = table.ravel()
    draws = rng.choice(flat.size, size=(count, n), p=flat / flat.sum())
    sides, bits = draws // 2, (draws % 2).astype(np.uint8)
    surprisal = sc_surprisal(table[sides], polar_transform(bits))
    return surprisal.sum(axis=0), (surprisal ** 2).sum(axis=0)


def _monte_carlo(spec: DmsSpec, n: int, samples: int, seed: int, workers: int):
    entropies, std_errors = {}, {}
    for c_idx, cond in enumerate(CONDITIONINGS):
        table = joint_table(spec, cond)
        chunks = [
            (table, n, min(MC_CHUNK, samples - start), seed, c_idx, k)
            for k, start in enumerate(range(0, samples, MC_CHUNK))
        ]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(_monte_carlo_chunk, chunks))
        else:
            parts = [_monte_carlo_chunk(c) for c in chunks]
        total = sum(p[0] for p in parts)
        total_sq = sum(p[1] for p in parts)
        mean = total / samples
        var = np.maximum(total_sq / samples - mean ** 2, 0.0) * samples / max(samples - 1, 1)
        entropies[cond] = np.clip(mean, 0.0, 1.0)
        std_errors[cond] = np.sqrt(var / samples)
    return entropies, std_errors


def compute_entropies(spec: DmsSpec, n: int, method: str, samples: int = 100_000,
                      seed: int = 0, workers: int = 1) -> EntropyProfile:
    """H(U(j) | U[:j], side) for every conditioning and index."""
    if not is_power_of_two(n):
        raise MethodUnsupported(f"n must be a power of two, got {n}")
    if method == 'exact_bec':
        return EntropyProfile(n, method, _exact_bec(spec, n))
    elif method == 'enumeration':
        if n > ENUMERATION_MAX_N:
            raise MethodUnsupported(f"enumeration is limited to n <= {ENUMERATION_MAX_N}, got {n}")
        result = {c: _enumerate_conditioning(joint_table(spec, c), n) for c in CONDITIONINGS}
        return EntropyProfile(n, method, result)
    elif method == 'monte_carlo':
        if samples < 2:
            raise MethodUnsupported("monte_carlo needs at least two samples")
        logging.info(f"Estimating entropies by Monte Carlo: n={n}, samples={samples}, workers={workers}")
        entropies, std_errors = _monte_carlo(spec, n, samples, seed, workers)
        return EntropyProfile(n, method, entropies, std_errors, samples, seed)
    raise MethodUnsupported(f"Unknown construction method '{method}'")


# ---------------------------------------------------------------- sets

def _monotone(entropies: dict) -> dict:
    """Clips estimates so that conditioning never increases entropy."""
    e = {c: np.asarray(v, dtype=float) for c, v in entropies.items()}
    pairs = [('V|Z', 'V'), ('V|Y1', 'V'), ('V|Y2', 'V'), ('X|VZ', 'X|V')]
    for child, parent in pairs:
        excess = e[child] - e[parent]
        if np.any(excess > 1e-9):
            logging.warning(
                f"Clipped {int((excess > 1e-9).sum())} estimates of H({child}) above H({parent})"
            )
        e[child] = np.minimum(e[child], e[parent])
    return e


def build_polarized_sets(entropies, n: int, beta: float) -> PolarizedSets:
    if isinstance(entropies, EntropyProfile):
        entropies = entropies.entropies
    if not 0 < beta < 0.5:
        raise ValueError(f"beta must lie in (0, 1/2), got {beta}")
    for cond in CONDITIONINGS:
        if len(entropies[cond]) != n:
            raise ValueError(f"Entropy vector for {cond} has length {len(entropies[cond])}, expected {n}")
    d = delta_n(n, beta)
    e = _monotone(entropies)
    high = {c: _sorted(np.flatnonzero(e[c] >= 1 - d)) for c in CONDITIONINGS}
    low = {c: _sorted(np.flatnonzero(e[c] <= d)) for c in CONDITIONINGS}
    return PolarizedSets(n, beta, d, high, low, {c: tuple(float(v) for v in e[c]) for c in CONDITIONINGS})


def partition_high_set(sets: PolarizedSets) -> HighSetPartition:
    h_v = set(sets.H('V'))
    g = set(sets.H('V|Z')) & h_v
    c = h_v - g
    l1, l2 = set(sets.L('V|Y1')), set(sets.L('V|Y2'))

    def cells(base):
        return (
            _sorted(base & l1 & l2),
            _sorted((base - l1) & l2),
            _sorted((base & l1) - l2),
            _sorted(base - l1 - l2),
        )

    return HighSetPartition(_sorted(g), _sorted(c), *cells(g), *cells(c))


def classify_case(p: HighSetPartition) -> str:
    g0, g1, g2 = len(p.G0), len(p.G1), len(p.G2)
    c1, c2, c12 = len(p.C1), len(p.C2), len(p.C12)
    if not (g1 - c2 >= g2 - c1 > c12 - g0):
        raise CaseUndefined(
            f"|G1|-|C2|={g1 - c2}, |G2|-|C1|={g2 - c1}, |C12|-|G0|={c12 - g0} "
            f"violate the ordering required for chaining"
        )
    if g1 > c2 and g2 > c1:
        return 'A' if g0 >= c12 else 'B'
    if g1 >= c2 and g2 <= c1 and g0 > c12:
        return 'C'
    if g1 < c2 and g2 < c1 and g0 > c12:
        return 'D'
    raise CaseUndefined("Partition sizes match none of the cases A-D")


def _take(pool, k: int, what: str) -> tuple:
    pool = _sorted(pool)
    if k < 0 or k > len(pool):
        raise InfeasiblePlan(f"{what}: need {k} indices from a pool of {len(pool)}")
    return pool[:k]


def derive_chaining_plan(p: HighSetPartition, case: str) -> ChainingPlan:
    g0, g1, g2 = len(p.G0), len(p.G1), len(p.G2)
    c1, c2, c12 = len(p.C1), len(p.C2), len(p.C12)
    empty = ()
    if case == 'A':
        r1 = _take(p.G2, c1, 'R1')
        r2 = _take(p.G1, c2, 'R2')
        r12 = _take(p.G0, c12, 'R12')
        r1p = r2p = r12p = empty
        split = SplitSizes(c2, 0, c12, 0, c1, 0, c12, 0)
    elif case == 'B':
        extra = c12 - g0
        r1 = _take(p.G2, c1, 'R1')
        r2 = _take(p.G1, c2, 'R2')
        r12 = _sorted(p.G0)
        r1p = _take(set(p.G2) - set(r1), extra, "R1'")
        r2p = _take(set(p.G1) - set(r2), extra, "R2'")
        r12p = empty
        split = SplitSizes(c2, 0, g0, extra, c1, 0, g0, extra)
    elif case == 'C':
        r2 = _take(p.G1, c2, 'R2')
        r12 = _take(p.G0, c12, 'R12')
        r1 = _sorted(set(p.G2) | set(_take(set(p.G0) - set(r12), c1 - g2, 'R1 in G0')))
        r1p = r2p = r12p = empty
        split = SplitSizes(c2, 0, c12, 0, c1, 0, c12, 0)
    elif case == 'D':
        extra = c2 - g1
        r12 = _take(p.G0, c12, 'R12')
        r2 = _sorted(p.G1)
        r12p = _take(set(p.G0) - set(r12), extra, "R12'")
        r1 = _sorted(set(p.G2) | set(_take(set(p.G0) - set(r12) - set(r12p), c1 - g2 - extra, 'R1 in G0')))
        r1p = r2p = empty
        split = SplitSizes(g1, extra, c12, 0, c1 - extra, extra, c12, 0)
    else:
        raise InfeasiblePlan(f"Unknown case label '{case}'")

    taken = set(r1) | set(r1p) | set(r12) | set(r12p)
    i_set = _sorted((set(p.G0) | set(p.G2)) - taken)
    i_g2 = set(i_set) & set(p.G2)
    r_s = _take(set(p.G1) - set(r2) - set(r2p), len(i_g2), 'R_S')
    r_lambda = _sorted(set(p.G12) | (set(p.G1) - set(r2) - set(r2p) - set(r_s)))

    plan = ChainingPlan(case, r1, r1p, r2, r2p, r12, r12p, i_set, r_s, r_lambda, split, p)
    _check_plan(plan)
    logging.info(f"Chaining plan for case {case}: " + ", ".join(f"|{k}|={len(v)}" for k, v in plan.slots().items()))
    return plan


def _check_plan(plan: ChainingPlan):
    p = plan.partition
    slots = plan.slots()
    union = set()
    for name, idx in slots.items():
        overlap = union & set(idx)
        if overlap:
            raise InfeasiblePlan(f"{name} overlaps earlier slots at {sorted(overlap)}")
        union |= set(idx)
    if union != set(p.G):
        raise InfeasiblePlan("Chaining slots do not partition G")
    s = plan.split_sizes
    checks = {
        '|R1|+|R12p| = |C1|': len(plan.R1) + len(plan.R12p) == len(p.C1),
        '|R12|+|R1p| = |C12|': len(plan.R12) + len(plan.R1p) == len(p.C12),
        '|R2|+|R12p| = |C2|': len(plan.R2) + len(plan.R12p) == len(p.C2),
        '|R_S| = |I n G2|': len(plan.R_S) == len(plan.I_G2),
        'split sizes': (
            s.psi1 == len(plan.R2) and s.gamma1 == len(plan.R12) and s.gamma2 == len(plan.R2p)
            and s.theta_bar1 == len(plan.R1) and s.gamma_bar2 == len(plan.R1p)
            and s.psi2 == s.theta_bar2 == len(plan.R12p)
        ),
    }
    failed = [name for name, ok in checks.items() if not ok]
    if failed:
        raise InfeasiblePlan(f"Plan identities violated: {failed}")


def rate_report(plan: ChainingPlan, sets: PolarizedSets, n: int, L: int) -> RateReport:
    p = plan.partition
    h_v = set(sets.H('V'))
    not_h_v = set(range(n)) - h_v
    i_set = set(plan.I)
    s_total = (L - 2) * len(i_set) + len(i_set | set(p.G1) | set(p.G12)) + len(i_set | set(p.G2))
    key_bits = len(p.C1) + len(p.C12)
    for cond in ('V|Y1', 'V|Y2'):
        not_low = set(range(n)) - set(sets.L(cond))
        key_bits += L * len(not_h_v & not_low) + len(h_v & not_low)
    h_xv, h_xvz = set(sets.H('X|V')), set(sets.H('X|VZ'))
    middle_v = not_h_v - set(sets.L('V'))
    middle_x = set(range(n)) - h_xv - set(sets.L('X|V'))
    extra = len(h_xvz) + L * len(middle_v) + L * len(middle_x)
    return RateReport(
        n, L,
        r_w=len(p.C) / n,
        r_s=s_total / (n * L),
        r_r=len(h_xv - h_xvz) / n,
        key_rate=key_bits / (n * L),
        extra_randomness_rate=extra / (n * L),
    )


def select_beta(entropies, n: int, grid=BETA_GRID) -> float:
    """Largest beta in the grid whose partition admits one of the cases A-D."""
    for beta in grid:
        sets = build_polarized_sets(entropies, n, beta)
        try:
            classify_case(partition_high_set(sets))
        except CaseUndefined:
            continue
        logging.info(f"Selected beta={beta} for n={n} (delta_n={delta_n(n, beta):.4g})")
        return beta
    raise CaseUndefined(f"No beta in (0, 1/2) yields a chaining case at n={n}")


class SetBuilder:
    """Builds (and caches) polarized sets and the chaining plan for a channel."""

    def __init__(self, cache_dir: str = None, workers: int = 1):
        self.cache_dir = cache_dir
        self.workers = workers

    def construct(self, spec: DmsSpec, n: int, beta, method: str, samples: int = 100_000, seed: int = 0):
        """Returns (sets, partition, plan). beta may be 'auto'."""
        requested = beta
        profile, cached_beta = self._load(spec, n, requested, method, samples, seed)
        if profile is None:
            profile = compute_entropies(spec, n, method, samples, seed, self.workers)
        if beta == 'auto':
            beta = cached_beta if cached_beta is not None else select_beta(profile, n)
        sets = build_polarized_sets(profile, n, beta)
        partition = partition_high_set(sets)
        case = classify_case(partition)
        plan = derive_chaining_plan(partition, case)
        self._store(spec, n, method, samples, seed, profile, sets, requested)
        return sets, partition, plan

    def cache_key(self, spec: DmsSpec, n: int, beta, method: str, samples: int, seed: int) -> str:
        mc = method == 'monte_carlo'
        return config_hash({
            'channel': spec.to_config(), 'n': n, 'beta': beta, 'method': method,
            'samples': samples if mc else 0, 'seed': seed if mc else 0,
        })

    def _path(self, key: str) -> str:
        return os.path.join(self.cache_dir, f"sets-{key[:16]}.json")

    def _load(self, spec, n, beta, method, samples, seed):
        if not self.cache_dir:
            return None, None
        path = self._path(self.cache_key(spec, n, beta, method, samples, seed))
        if not os.path.exists(path):
            logging.info(f"Set cache miss: {path}")
            return None, None
        record = read_json(path)
        if record.get('version') != CACHE_VERSION:
            logging.warning(f"Ignoring cache record with version {record.get('version')}: {path}")
            return None, None
        logging.info(f"Set cache hit: {path}")
        return EntropyProfile.from_dict(record['profile']), record['sets']['beta']

    def _store(self, spec, n, method, samples, seed, profile, sets, requested_beta):
        if not self.cache_dir:
            return
        path = self._path(self.cache_key(spec, n, requested_beta, method, samples, seed))
        if os.path.exists(path):
            return
        write_json(path, {
            'version': CACHE_VERSION,
            'channel': spec.to_config(),
            'n': n,
            'beta': sets.beta,
            'delta_n': sets.delta_n,
            'method': method,
            'samples': samples,
            'seed': seed,
            'profile': profile.to_dict(),
            'sets': sets.to_dict(),
        })
