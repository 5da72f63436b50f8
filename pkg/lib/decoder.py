import logging
from dataclasses import dataclass

import numpy as np

from lib.chain_codec import KeyMaterial, SessionCiphertext, SlotMap
from lib.channel_model import DmsSpec
from lib.errors import DimensionMismatch, InfeasiblePlan
from lib.polar_core import ScContext, sc_decode_with_side_info
from lib.set_builder import ChainingPlan, PolarizedSets

_OBSERVATION = {1: ('V|Y1', 'y1'), 2: ('V|Y2', 'y2')}


@dataclass(frozen=True, eq=False)
class ReceiverContext:
    receiver_id: int
    spec: DmsSpec
    keys: KeyMaterial
    plan: ChainingPlan
    sets: PolarizedSets
    slots: SlotMap
    upsilon: np.ndarray
    phi: np.ndarray

    @property
    def L(self) -> int:
        return self.slots.L

    @classmethod
    def build(cls, receiver_id: int, spec: DmsSpec, keys: KeyMaterial, plan: ChainingPlan,
              sets: PolarizedSets, L: int, ciphertext: SessionCiphertext) -> 'ReceiverContext':
        """Decrypts the receiver's public side information with its key."""
        if receiver_id not in _OBSERVATION:
            raise ValueError(f"receiver_id must be 1 or 2, got {receiver_id}")
        slots = SlotMap.build(plan, sets, L)
        key = keys.side_key(receiver_id)
        public = np.asarray(ciphertext.public_side_info[receiver_id - 1], dtype=np.uint8)
        expected = slots.side_key_length(receiver_id)
        if len(public) != expected or len(key) != expected:
            raise DimensionMismatch(
                f"Receiver {receiver_id}: side information has {len(public)} bits, key {len(key)}, "
                f"plan expects {expected}"
            )
        plain = public ^ key
        n_up = len(slots.upsilon[receiver_id])
        phi = plain[n_up:].reshape(L, len(slots.phi[receiver_id]))
        return cls(receiver_id, spec, keys, plan, sets, slots, plain[:n_up], phi)


def _split(seq, first: int):
    return seq[:first], seq[first:]


def _zeros(size: int) -> np.ndarray:
    return np.zeros(size, dtype=np.uint8)


def _place(known: dict, indices, bits):
    for idx, bit in zip(indices, np.asarray(bits, dtype=np.uint8)):
        known[idx] = int(bit)


def audit_known_set(ctx: ReceiverContext, known: dict, block: int):
    """The known bits must cover every index outside L_V|Yk; receiver 2 may know more."""
    cond = _OBSERVATION[ctx.receiver_id][0]
    required = set(range(ctx.sets.n)) - set(ctx.sets.L(cond))
    have = set(known)
    missing = required - have
    if missing:
        raise InfeasiblePlan(f"Receiver {ctx.receiver_id}, block {block}: side information misses {sorted(missing)}")
    if ctx.receiver_id == 1 and have != required:
        raise InfeasiblePlan(f"Receiver 1, block {block}: unexpected known indices {sorted(have - required)}")


def _decode_block(ctx: ReceiverContext, observation, known: dict, block: int) -> np.ndarray:
    audit_known_set(ctx, known, block)
    cond, name = _OBSERVATION[ctx.receiver_id]
    sc_ctx = ScContext.build(ctx.spec, cond, n=ctx.sets.n, **{name: np.asarray(observation)})
    return sc_decode_with_side_info(sc_ctx, known)


def _check_observations(ctx: ReceiverContext, blocks):
    blocks = np.asarray(blocks)
    if blocks.shape != (ctx.L, ctx.sets.n):
        raise DimensionMismatch(f"Expected observations of shape {(ctx.L, ctx.sets.n)}, got {blocks.shape}")
    return blocks


def _messages(ctx: ReceiverContext, a_hat: np.ndarray):
    p = ctx.plan.partition
    w = [a_hat[i, list(p.C)] for i in range(ctx.L)]
    s = [a_hat[i, list(ctx.slots.s_slots(i + 1))] for i in range(ctx.L)]
    return w, s


def decode_rx1(ctx: ReceiverContext, y1_blocks):
    """Forward-chained decoding. Returns (W_hat, S_hat), one array per block."""
    y1_blocks = _check_observations(ctx, y1_blocks)
    plan, split, slots = ctx.plan, ctx.plan.split_sizes, ctx.slots
    p = plan.partition
    L, n = ctx.L, ctx.sets.n
    a_hat = np.zeros((L, n), dtype=np.uint8)

    known = {}
    _place(known, slots.upsilon[1], ctx.upsilon)
    _place(known, slots.phi[1], ctx.phi[0])
    a_hat[0] = _decode_block(ctx, y1_blocks[0], known, 1)
    lambda_hat = a_hat[0, list(plan.R_Lambda)]

    psi_prev, gamma_prev = _zeros(len(p.C2)), _zeros(len(p.C12))
    for i in range(1, L):
        a = a_hat[i - 1]
        psi_i, gamma_i = a[list(p.C2)], a[list(p.C12)]
        _, ps2_prev = _split(psi_prev, split.psi1)
        gm1_prev, _ = _split(gamma_prev, split.gamma1)

        theta_bar_next = np.concatenate([a[list(plan.R1)], a[list(plan.R12p)] ^ ps2_prev]).astype(np.uint8)
        gamma_bar_next = np.concatenate([a[list(plan.R12)] ^ gm1_prev, a[list(plan.R1p)]]).astype(np.uint8)
        ps1_i, _ = _split(psi_i, split.psi1)
        _, gm2_i = _split(gamma_i, split.gamma1)

        known = {}
        _place(known, p.C1, theta_bar_next ^ ctx.keys.kappa_theta)
        _place(known, p.C12, gamma_bar_next ^ ctx.keys.kappa_gamma)
        _place(known, plan.R2, ps1_i)
        _place(known, plan.R2p, gm2_i)
        _place(known, plan.R_S, a[list(plan.I_G2)])
        _place(known, plan.R_Lambda, lambda_hat)
        _place(known, slots.phi[1], ctx.phi[i])
        a_hat[i] = _decode_block(ctx, y1_blocks[i], known, i + 1)
        psi_prev, gamma_prev = psi_i, gamma_i

    logging.debug(f"Receiver 1 decoded {L} blocks")
    return _messages(ctx, a_hat)


def decode_rx2(ctx: ReceiverContext, y2_blocks):
    """Backward-chained decoding, starting from block L."""
    y2_blocks = _check_observations(ctx, y2_blocks)
    plan, split, slots = ctx.plan, ctx.plan.split_sizes, ctx.slots
    p = plan.partition
    L, n = ctx.L, ctx.sets.n
    a_hat = np.zeros((L, n), dtype=np.uint8)

    known = {}
    _place(known, slots.upsilon[2], ctx.upsilon)
    _place(known, slots.phi[2], ctx.phi[L - 1])
    a_hat[L - 1] = _decode_block(ctx, y2_blocks[L - 1], known, L)
    lambda_hat = a_hat[L - 1, list(plan.R_Lambda)]

    theta_bar_next, gamma_bar_next = _zeros(len(p.C1)), _zeros(len(p.C12))
    for i in range(L, 1, -1):
        a = a_hat[i - 1]
        theta_bar_i = a[list(p.C1)] ^ ctx.keys.kappa_theta
        gamma_bar_i = a[list(p.C12)] ^ ctx.keys.kappa_gamma
        _, tb2_next = _split(theta_bar_next, split.theta_bar1)
        gb1_next, _ = _split(gamma_bar_next, split.gamma_bar1)

        psi_prev = np.concatenate([a[list(plan.R2)], a[list(plan.R12p)] ^ tb2_next]).astype(np.uint8)
        gamma_prev = np.concatenate([a[list(plan.R12)] ^ gb1_next, a[list(plan.R2p)]]).astype(np.uint8)
        tb1_i, _ = _split(theta_bar_i, split.theta_bar1)
        _, gb2_i = _split(gamma_bar_i, split.gamma_bar1)

        known = {}
        _place(known, p.C2, psi_prev)
        _place(known, p.C12, gamma_prev)
        _place(known, plan.R1, tb1_i)
        _place(known, plan.R1p, gb2_i)
        _place(known, plan.I_G2, a[list(plan.R_S)])
        _place(known, plan.R_Lambda, lambda_hat)
        _place(known, slots.phi[2], ctx.phi[i - 2])
        a_hat[i - 2] = _decode_block(ctx, y2_blocks[i - 2], known, i - 1)
        theta_bar_next, gamma_bar_next = theta_bar_i, gamma_bar_i

    logging.debug(f"Receiver 2 decoded {L} blocks")
    return _messages(ctx, a_hat)


def block_report(W, S, W_hat, S_hat) -> list:
    """Per-block correctness of one receiver's estimates."""
    rows = []
    for i, (w, s, wh, sh) in enumerate(zip(W, S, W_hat, S_hat), start=1):
        w_ok = np.array_equal(np.asarray(w, dtype=np.uint8), np.asarray(wh, dtype=np.uint8))
        s_ok = np.array_equal(np.asarray(s, dtype=np.uint8), np.asarray(sh, dtype=np.uint8))
        rows.append({'block': i, 'w_correct': bool(w_ok), 's_correct': bool(s_ok)})
    return rows


class ChainDecoder:
    """Both legitimate receivers of one session."""

    def __init__(self, spec: DmsSpec, sets: PolarizedSets, plan: ChainingPlan, L: int):
        self.spec = spec
        self.sets = sets
        self.plan = plan
        self.L = L

    def context(self, receiver_id: int, keys: KeyMaterial, ciphertext: SessionCiphertext) -> ReceiverContext:
        return ReceiverContext.build(receiver_id, self.spec, keys, self.plan, self.sets, self.L, ciphertext)

    def decode(self, receiver_id: int, keys: KeyMaterial, ciphertext: SessionCiphertext, observations):
        ctx = self.context(receiver_id, keys, ciphertext)
        if receiver_id == 1:
            return decode_rx1(ctx, observations)
        return decode_rx2(ctx, observations)
