"""
Polar transform and successive-cancellation (SC) recursions for source
coding with side information.

The transform is u = x . G_n with G_n = [[1,0],[1,1]]^(kron m) in natural
index order. It is its own inverse, so the same butterfly maps polarized
vectors back to source blocks.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from lib.channel_model import DmsSpec, joint_table, side_outcomes
from lib.errors import DimensionMismatch
from lib.utils import is_power_of_two

RULES = ('uniform', 'sample', 'argmax')


def polar_transform(u) -> np.ndarray:
    """Butterfly evaluation of u . G_n over GF(2); works on (..., n) arrays."""
    x = np.array(u, dtype=np.uint8, copy=True)
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise DimensionMismatch(f"Block length must be a power of two, got {n}")
    lead = x.shape[:-1]
    half = n // 2
    while half >= 1:
        view = x.reshape(lead + (n // (2 * half), 2, half))
        view[..., 0, :] ^= view[..., 1, :]
        half //= 2
    return x


@dataclass(frozen=True, eq=False)
class ScContext:
    """
    Conditioning structure of one SC pass. `table` is joint_table(spec,
    conditioning) and `outcomes` the per-symbol row index into it, so the
    per-symbol weight of bit b is table[outcomes[k], b].
    """
    conditioning: str
    table: np.ndarray
    outcomes: np.ndarray

    @property
    def layer(self) -> str:
        return 'X|V' if self.conditioning.startswith('X') else 'V'

    @property
    def n(self) -> int:
        return self.outcomes.shape[-1]

    def weights(self) -> np.ndarray:
        w = self.table[self.outcomes]
        return w if w.ndim == 3 else w[None, :, :]

    @classmethod
    def build(cls, spec: DmsSpec, conditioning: str, n: int = None, **observations) -> 'ScContext':
        outcomes = side_outcomes(spec, conditioning, n=n, **observations)
        if n is not None and outcomes.shape[-1] != n:
            raise DimensionMismatch(f"Side information has length {outcomes.shape[-1]}, expected {n}")
        if not is_power_of_two(int(outcomes.shape[-1])):
            raise DimensionMismatch(f"Block length must be a power of two, got {outcomes.shape[-1]}")
        return cls(conditioning, joint_table(spec, conditioning), outcomes)


@dataclass(frozen=True)
class IndexPosterior:
    p0: float


class RandomBits:
    """Randomness source for SC filling, backed by a numpy Generator."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def uniform(self, k: int) -> np.ndarray:
        return self.rng.integers(0, 2, size=k, dtype=np.uint8)

    def bernoulli(self, p1: float) -> int:
        return int(self.rng.random() < p1)


def as_source(rng):
    return rng if hasattr(rng, 'bernoulli') else RandomBits(rng)


def _normalize(q: np.ndarray) -> np.ndarray:
    total = q.sum(axis=-1, keepdims=True)
    out = np.full_like(q, 0.5)
    np.divide(q, total, out=out, where=np.broadcast_to(total > 0, q.shape))
    return out


def sc_walk(weights: np.ndarray, decide: Callable, known_mask=None, known_values=None):
    """
    Runs the SC recursion over a batch of blocks.

    weights: (B, n, 2) per-symbol joint weights.
    decide(j, p0) -> (B,) bits for index j, where p0 is the posterior of 0
    given the decided prefix. Leaves inside fully-known subtrees skip the
    posterior computation and take known_values directly.

    Returns (u, x): the decided polarized vectors and their re-encoding.
    """
    weights = np.asarray(weights, dtype=float)
    batch, n, _ = weights.shape
    u = np.zeros((batch, n), dtype=np.uint8)
    if known_mask is not None:
        known_mask = np.asarray(known_mask, dtype=bool)
        known_values = np.asarray(known_values, dtype=np.uint8).reshape(-1, n)

    def walk(q, offset):
        m = q.shape[1]
        if known_mask is not None and known_mask[offset:offset + m].all():
            seg = np.broadcast_to(known_values[:, offset:offset + m], (batch, m))
            u[:, offset:offset + m] = seg
            return polar_transform(seg)
        if m == 1:
            total = q[:, 0, 0] + q[:, 0, 1]
            p0 = np.full(batch, 0.5)
            np.divide(q[:, 0, 0], total, out=p0, where=total > 0)
            bit = np.asarray(decide(offset, p0), dtype=np.uint8).reshape(batch)
            u[:, offset] = bit
            return bit[:, None]
        h = m // 2
        qa, qb = q[:, :h], q[:, h:]
        qs = np.empty_like(qa)
        qs[..., 0] = qa[..., 0] * qb[..., 0] + qa[..., 1] * qb[..., 1]
        qs[..., 1] = qa[..., 1] * qb[..., 0] + qa[..., 0] * qb[..., 1]
        s = walk(_normalize(qs), offset)
        flip = s.astype(bool)
        qc = np.empty_like(qb)
        qc[..., 0] = np.where(flip, qa[..., 1], qa[..., 0]) * qb[..., 0]
        qc[..., 1] = np.where(flip, qa[..., 0], qa[..., 1]) * qb[..., 1]
        xb = walk(_normalize(qc), offset + h)
        return np.concatenate([s ^ xb, xb], axis=1)

    x = walk(_normalize(weights), 0)
    return u, x


def fill_bit(p0: float, rule: str, source) -> int:
    if rule == 'uniform':
        return int(source.uniform(1)[0])
    elif rule == 'sample':
        return source.bernoulli(1.0 - p0)
    elif rule == 'argmax':
        return 0 if p0 >= 0.5 else 1
    raise ValueError(f"Unknown fill rule '{rule}'")


def sc_posterior(ctx: ScContext, j: int, prefix) -> IndexPosterior:
    """P(U(j) = 0 | U[:j] = prefix, side information) for a single block."""
    prefix = np.asarray(prefix, dtype=np.uint8)
    if not 0 <= j < ctx.n or len(prefix) != j:
        raise DimensionMismatch(f"Index {j} needs a prefix of length {j}, got {len(prefix)}")
    found = {}

    def decide(idx, p0):
        if idx < j:
            return prefix[idx:idx + 1]
        if idx == j:
            found['p0'] = float(p0[0])
        return np.zeros(1, dtype=np.uint8)

    sc_walk(ctx.weights()[:1], decide)
    return IndexPosterior(found['p0'])


def sc_fill_bit(ctx: ScContext, j: int, prefix, rule: str, rng) -> int:
    posterior = sc_posterior(ctx, j, prefix)
    return fill_bit(posterior.p0, rule, as_source(rng))


def sc_fill(ctx: ScContext, known: dict, rules, source):
    """
    Completes one block: indices in `known` take their value, every other
    index j is filled with rules[j] ('sample' or 'argmax') in SC order.
    Returns (u, x) as 1-D arrays.
    """
    n = ctx.n
    mask = np.zeros(n, dtype=bool)
    values = np.zeros(n, dtype=np.uint8)
    for idx, bit in known.items():
        mask[idx] = True
        values[idx] = bit

    def decide(idx, p0):
        if mask[idx]:
            return values[idx:idx + 1]
        return np.array([fill_bit(float(p0[0]), rules[idx], source)], dtype=np.uint8)

    u, x = sc_walk(ctx.weights()[:1], decide, mask, values)
    return u[0], x[0]


def sc_decode_with_side_info(ctx: ScContext, known: dict) -> np.ndarray:
    """Argmax SC decoding of the indices missing from `known`."""
    u, _ = sc_fill(ctx, known, _ArgmaxRules(), None)
    unknown = ctx.n - len(known)
    logging.debug(f"SC decoded {unknown} of {ctx.n} indices ({ctx.conditioning})")
    return u


class _ArgmaxRules:
    def __getitem__(self, idx):
        return 'argmax'


def sc_surprisal(weights: np.ndarray, true_u: np.ndarray) -> np.ndarray:
    """
    -log2 of the realized posterior of each true bit, shape (B, n).
    The decided prefix is always the true one.
    """
    true_u = np.asarray(true_u, dtype=np.uint8)
    batch, n = true_u.shape
    out = np.zeros((batch, n))

    def decide(idx, p0):
        bits = true_u[:, idx]
        prob = np.where(bits == 0, p0, 1.0 - p0)
        out[:, idx] = -np.log2(np.maximum(prob, 1e-300))
        return bits

    sc_walk(weights, decide)
    return out
