import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.stats import chisquare, entropy

from lib.errors import ConfigError, DegenerateChannel

TOLERANCE = 1e-12
COMPONENTS = ('y1', 'y2', 'z')
CONDITIONINGS = ('V', 'V|Y1', 'V|Y2', 'V|Z', 'X|V', 'X|VZ')
_OBSERVED = {'V|Y1': 'y1', 'V|Y2': 'y2', 'V|Z': 'z'}


@dataclass(frozen=True)
class ComponentChannel:
    """One marginal p(out | x) of the broadcast channel, rows indexed by x."""
    kind: str
    rows: tuple
    param: Optional[float] = None

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.rows, dtype=float)

    @property
    def output_size(self) -> int:
        return len(self.rows[0])

    @property
    def erasure_probability(self) -> Optional[float]:
        """Erasure parameter when the component behaves as an erasure channel."""
        if self.kind == 'bec':
            return float(self.param)
        m = self.matrix
        if np.allclose(m[0], m[1], atol=TOLERANCE):
            return 1.0
        if np.all((m < TOLERANCE) | (m > 1 - TOLERANCE)) and not np.any((m[0] > 0.5) & (m[1] > 0.5)):
            return 0.0
        return None

    @classmethod
    def from_config(cls, cfg: dict) -> 'ComponentChannel':
        kind = cfg.get('type')
        if kind == 'bec':
            eps = float(cfg['epsilon'])
            rows = ((1 - eps, 0.0, eps), (0.0, 1 - eps, eps))
            return cls('bec', rows, eps)
        elif kind == 'bsc':
            p = float(cfg['p'])
            return cls('bsc', ((1 - p, p), (p, 1 - p)), p)
        elif kind == 'matrix':
            rows = tuple(tuple(float(v) for v in row) for row in cfg['rows'])
            return cls('matrix', rows)
        raise ConfigError(f"Unknown component channel type '{kind}'")

    def to_config(self) -> dict:
        if self.kind == 'bec':
            return {'type': 'bec', 'epsilon': self.param}
        elif self.kind == 'bsc':
            return {'type': 'bsc', 'p': self.param}
        return {'type': 'matrix', 'rows': [list(r) for r in self.rows]}


@dataclass(frozen=True)
class DmsSpec:
    """
    Joint law p(v, x) * p(y1|x) p(y2|x) p(z|x) over binary v, x.
    input_law[v][x] holds p(v, x).
    """
    input_law: tuple
    y1: ComponentChannel
    y2: ComponentChannel
    z: ComponentChannel

    def __post_init__(self):
        errors = []
        p = np.array(self.input_law, dtype=float)
        if p.shape != (2, 2):
            errors.append(f"input_law must be a 2x2 table, got shape {p.shape}")
        else:
            if np.any(p < 0) or np.any(p > 1):
                errors.append("input_law entries must lie in [0, 1]")
            if abs(p.sum() - 1.0) > TOLERANCE:
                errors.append(f"input_law sums to {p.sum()!r}, expected 1")
        for name in COMPONENTS:
            m = getattr(self, name).matrix
            if m.ndim != 2 or m.shape[0] != 2:
                errors.append(f"Component '{name}' must have exactly two rows (x = 0, 1)")
                continue
            if np.any(m < 0) or np.any(m > 1):
                errors.append(f"Component '{name}' has probabilities outside [0, 1]")
            bad = [i for i, s in enumerate(m.sum(axis=1)) if abs(s - 1.0) > TOLERANCE]
            if bad:
                errors.append(f"Component '{name}' rows {bad} do not sum to 1")
        if errors:
            raise ConfigError("Invalid channel specification:\n" + "\n".join(f"- {e}" for e in errors))

    @property
    def p_vx(self) -> np.ndarray:
        return np.array(self.input_law, dtype=float)

    @property
    def alphabet_sizes(self) -> dict:
        return {name: getattr(self, name).output_size for name in COMPONENTS}

    @property
    def x_equals_v(self) -> bool:
        p = self.p_vx
        return p[0, 1] < TOLERANCE and p[1, 0] < TOLERANCE

    @property
    def v_uniform(self) -> bool:
        return abs(self.p_vx.sum(axis=1)[0] - 0.5) < TOLERANCE

    def component(self, name: str) -> ComponentChannel:
        return getattr(self, name)

    def swapped(self) -> 'DmsSpec':
        return DmsSpec(self.input_law, self.y2, self.y1, self.z)

    def replace_components(self, **components) -> 'DmsSpec':
        parts = {name: components.get(name, getattr(self, name)) for name in COMPONENTS}
        return DmsSpec(self.input_law, parts['y1'], parts['y2'], parts['z'])

    def output_probability(self, x: int, y1: int, y2: int, z: int) -> float:
        return float(self.y1.matrix[x, y1] * self.y2.matrix[x, y2] * self.z.matrix[x, z])

    @classmethod
    def from_config(cls, cfg: dict) -> 'DmsSpec':
        if 'joint' in cfg:
            raise ConfigError("Arbitrary joint output laws are not supported; give y1, y2, z marginals")
        missing = [k for k in ('input_law',) + COMPONENTS if k not in cfg]
        if missing:
            raise ConfigError(f"Channel specification is missing {missing}")
        law = tuple(tuple(float(v) for v in row) for row in cfg['input_law'])
        return cls(law, *(ComponentChannel.from_config(cfg[name]) for name in COMPONENTS))

    def to_config(self) -> dict:
        cfg = {'input_law': [list(row) for row in self.input_law]}
        for name in COMPONENTS:
            cfg[name] = getattr(self, name).to_config()
        return cfg


@dataclass(frozen=True)
class ChannelOrderReport:
    h_v_given_z: float
    h_v_given_y1: float
    h_v_given_y2: float
    satisfies_assumption: bool
    swapped: bool
    spec: DmsSpec = field(repr=False, compare=False, default=None)

    def to_dict(self) -> dict:
        return {
            'h_v_given_z': self.h_v_given_z,
            'h_v_given_y1': self.h_v_given_y1,
            'h_v_given_y2': self.h_v_given_y2,
            'satisfies_assumption': self.satisfies_assumption,
            'swapped': self.swapped,
        }


class RateTriple(NamedTuple):
    r_w: float
    r_s: float
    r_r: float


def joint_table(spec: DmsSpec, conditioning: str) -> np.ndarray:
    """
    Per-symbol joint law of (side outcome, target bit) for a conditioning.
    Row s is the side outcome, column b the target bit (v for the V layer,
    x for the X|V layer). Side outcomes: a single dummy outcome for 'V',
    the observed symbol for 'V|Yk'/'V|Z', v for 'X|V', v*|Z|+z for 'X|VZ'.
    """
    p = spec.p_vx
    if conditioning == 'V':
        return p.sum(axis=1)[None, :]
    if conditioning in _OBSERVED:
        w = spec.component(_OBSERVED[conditioning]).matrix
        # p(v, o) = sum_x p(v, x) w(o | x)
        return (p @ w).T
    if conditioning == 'X|V':
        return p.copy()
    if conditioning == 'X|VZ':
        w = spec.z.matrix
        table = p[:, None, :] * w.T[None, :, :]
        return table.reshape(-1, 2)
    raise KeyError(f"Unknown conditioning '{conditioning}'")


def side_outcomes(spec: DmsSpec, conditioning: str, v=None, y1=None, y2=None, z=None, n=None) -> np.ndarray:
    """Maps observation vectors to row indices of joint_table(spec, conditioning)."""
    observed = {'y1': y1, 'y2': y2, 'z': z}
    if conditioning == 'V':
        return np.zeros(n if n is not None else len(v), dtype=np.int64)
    if conditioning in _OBSERVED:
        return np.asarray(observed[_OBSERVED[conditioning]], dtype=np.int64)
    if conditioning == 'X|V':
        return np.asarray(v, dtype=np.int64)
    if conditioning == 'X|VZ':
        return np.asarray(v, dtype=np.int64) * spec.z.output_size + np.asarray(z, dtype=np.int64)
    raise KeyError(f"Unknown conditioning '{conditioning}'")


def conditional_entropy(joint: np.ndarray) -> float:
    """H(B | S) in bits for a joint table joint[s, b]."""
    joint = np.asarray(joint, dtype=float)
    h_joint = entropy(joint.ravel(), base=2)
    h_side = entropy(joint.sum(axis=1), base=2)
    return float(max(h_joint - h_side, 0.0))


def validate_and_order(spec: DmsSpec) -> ChannelOrderReport:
    h_z = conditional_entropy(joint_table(spec, 'V|Z'))
    h_y1 = conditional_entropy(joint_table(spec, 'V|Y1'))
    h_y2 = conditional_entropy(joint_table(spec, 'V|Y2'))
    swapped = False
    if h_y1 < h_y2:
        logging.info("H(V|Y1) < H(V|Y2): exchanging the roles of the legitimate receivers")
        spec = spec.swapped()
        h_y1, h_y2 = h_y2, h_y1
        swapped = True

    satisfies = h_z > h_y1 + TOLERANCE
    if not satisfies:
        raise DegenerateChannel(
            f"H(V|Z)={h_z:.6f} does not exceed H(V|Y1)={h_y1:.6f}; the secrecy rate would be zero"
        )
    return ChannelOrderReport(h_z, h_y1, h_y2, satisfies, swapped, spec)


def corner_point_rates(spec: DmsSpec) -> RateTriple:
    """(I(V;Z), I(V;Y1) - I(V;Z), I(X;Z|V)) in bits per channel use."""
    h_v = float(entropy(spec.p_vx.sum(axis=1), base=2))
    h_v_z = conditional_entropy(joint_table(spec, 'V|Z'))
    h_v_y1 = conditional_entropy(joint_table(spec, 'V|Y1'))

    p = spec.p_vx
    w = spec.z.matrix
    # H(Z|V) - H(Z|X), using the Markov chain V - X - Z
    p_vz = p @ w
    h_z_v = conditional_entropy(p_vz)
    p_x = p.sum(axis=0)
    h_z_x = float(sum(p_x[x] * entropy(w[x], base=2) for x in range(2) if p_x[x] > 0))

    return RateTriple(
        max(h_v - h_v_z, 0.0),
        max(h_v_z - h_v_y1, 0.0),
        max(h_z_v - h_z_x, 0.0),
    )


def sample_source(spec: DmsSpec, n: int, rng: np.random.Generator):
    """Draws n i.i.d. (v, x) pairs."""
    flat = spec.p_vx.ravel()
    draws = rng.choice(4, size=n, p=flat / flat.sum())
    return (draws // 2).astype(np.uint8), (draws % 2).astype(np.uint8)


def _sample_rows(matrix: np.ndarray, inputs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cumulative = np.cumsum(matrix[inputs], axis=1)
    u = rng.random(len(inputs))
    out = (u[:, None] >= cumulative).sum(axis=1)
    return np.minimum(out, matrix.shape[1] - 1).astype(np.int64)


def sample_outputs(spec: DmsSpec, x_block, rng: np.random.Generator):
    """Independent draws of (y1, y2, z) for each symbol of x_block."""
    x = np.asarray(x_block, dtype=np.int64)
    return tuple(_sample_rows(spec.component(name).matrix, x, rng) for name in COMPONENTS)


def estimate_conditional_entropy(spec: DmsSpec, conditioning: str, samples: int, rng: np.random.Generator):
    """Plug-in estimate of H(target | side) from sampled pairs, with standard error."""
    table = joint_table(spec, conditioning)
    flat = table.ravel()
    draws = rng.choice(flat.size, size=samples, p=flat / flat.sum())
    counts = np.bincount(draws, minlength=flat.size).reshape(table.shape).astype(float)
    side_counts = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide='ignore', invalid='ignore'):
        cond = np.where(side_counts > 0, counts / side_counts, 0.0)
    surprisal = -np.log2(cond.ravel()[draws])
    return float(surprisal.mean()), float(surprisal.std(ddof=1) / np.sqrt(samples))


def chi_square_check(spec: DmsSpec, component: str, x: int, samples: int, rng: np.random.Generator) -> float:
    """p-value of a chi-square goodness-of-fit test of sampled outputs for input x."""
    row = spec.component(component).matrix[x]
    outputs = _sample_rows(row[None, :], np.zeros(samples, dtype=np.int64), rng)
    observed = np.bincount(outputs, minlength=row.size)
    keep = row > 0
    if keep.sum() < 2:
        return 1.0 if observed[~keep].sum() == 0 else 0.0
    return float(chisquare(observed[keep], row[keep] * samples).pvalue)
