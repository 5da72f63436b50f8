import logging
from dataclasses import dataclass, field
import numpy as np

from lib.channel_model import DmsSpec
from lib.errors import DimensionMismatch, InfeasiblePlan, LengthMismatch
from lib.polar_core import ScContext, as_source, sc_fill
from lib.set_builder import ChainingPlan, PolarizedSets

SESSION_FORMAT = 'polar-chain-session'
SESSION_VERSION = 1


def _bits(values) -> np.ndarray:
    return np.asarray(values, dtype=np.uint8).ravel()


def _split(seq: np.ndarray, first: int):
    return seq[:first], seq[first:]


def fill_rules(sets: PolarizedSets, high: str, low: str) -> dict:
    """'argmax' on the low set, 'sample' elsewhere, for every index outside the high set."""
    high_set, low_set = set(sets.H(high)), set(sets.L(low))
    return {j: ('argmax' if j in low_set else 'sample') for j in range(sets.n) if j not in high_set}


def sample_block(spec: DmsSpec, sets: PolarizedSets, rng):
    """
    One block drawn from the single-block encoder law: uniform bits on
    H_V and H_X|V, SC sampling on the middle sets, argmax on the low sets.
    Returns (a_tilde, t_tilde, v, x).
    """
    source = as_source(rng)
    h_v, h_xv = sets.H('V'), sets.H('X|V')
    known_v = dict(zip(h_v, source.uniform(len(h_v)).tolist()))
    a, v = sc_fill(ScContext.build(spec, 'V', n=sets.n), known_v, fill_rules(sets, 'V', 'V'), source)
    known_x = dict(zip(h_xv, source.uniform(len(h_xv)).tolist()))
    t, x = sc_fill(ScContext.build(spec, 'X|V', v=v), known_x, fill_rules(sets, 'X|V', 'X|V'), source)
    return a, t, v, x


@dataclass(frozen=True)
class SlotMap:
    """
    Index homes of every sequence, shared by the encoder and both decoders.
    Blocks are numbered 1..L.
    """
    n: int
    L: int
    plan: ChainingPlan
    h_v: tuple
    not_h_v: tuple
    v_rules: dict
    h_xv: tuple
    h_xvz: tuple
    h_xv_minus: tuple
    x_rules: dict
    upsilon: dict
    phi: dict

    @classmethod
    def build(cls, plan: ChainingPlan, sets: PolarizedSets, L: int) -> 'SlotMap':
        n = sets.n
        everything = set(range(n))
        h_v = set(sets.H('V'))
        not_h_v = everything - h_v
        v_rules = fill_rules(sets, 'V', 'V')
        h_xv, h_xvz = set(sets.H('X|V')), set(sets.H('X|VZ'))
        x_rules = fill_rules(sets, 'X|V', 'X|V')
        upsilon, phi = {}, {}
        for k, cond in ((1, 'V|Y1'), (2, 'V|Y2')):
            not_low = everything - set(sets.L(cond))
            upsilon[k] = tuple(sorted(h_v & not_low))
            phi[k] = tuple(sorted(not_h_v & not_low))
        return cls(
            n, L, plan,
            tuple(sorted(h_v)), tuple(sorted(not_h_v)), v_rules,
            tuple(sorted(h_xv)), tuple(sorted(h_xvz)), tuple(sorted(h_xv - h_xvz)), x_rules,
            upsilon, phi,
        )

    @property
    def C(self):
        return self.plan.partition.C

    def s_slots(self, i: int) -> tuple:
        p = self.plan.partition
        base = set(self.plan.I)
        if i == 1:
            base |= set(p.G1) | set(p.G12)
        elif i == self.L:
            base |= set(p.G2)
        return tuple(sorted(base))

    def side_key_length(self, k: int) -> int:
        return len(self.upsilon[k]) + self.L * len(self.phi[k])


@dataclass(frozen=True)
class MessageDimensions:
    w: int
    s_first: int
    s_mid: int
    s_last: int
    r: int

    def s_size(self, i: int, L: int) -> int:
        if i == 1:
            return self.s_first
        return self.s_last if i == L else self.s_mid

    def s_total(self, L: int) -> int:
        return self.s_first + self.s_last + (L - 2) * self.s_mid


@dataclass(frozen=True, eq=False)
class KeyMaterial:
    kappa_theta: np.ndarray
    kappa_gamma: np.ndarray
    kappa_upsilon_phi_1: np.ndarray
    kappa_upsilon_phi_2: np.ndarray
    lambda0_x: np.ndarray

    FIELDS = ('kappa_theta', 'kappa_gamma', 'kappa_upsilon_phi_1', 'kappa_upsilon_phi_2', 'lambda0_x')

    def side_key(self, k: int) -> np.ndarray:
        return self.kappa_upsilon_phi_1 if k == 1 else self.kappa_upsilon_phi_2

    def to_dict(self) -> dict:
        return {name: [int(b) for b in getattr(self, name)] for name in self.FIELDS}

    @classmethod
    def from_dict(cls, data: dict) -> 'KeyMaterial':
        return cls(*(_bits(data[name]) for name in cls.FIELDS))


@dataclass(eq=False)
class BlockState:
    index: int
    a_tilde: np.ndarray
    psi: np.ndarray
    gamma: np.ndarray
    theta_bar: np.ndarray
    gamma_bar: np.ndarray
    pi: np.ndarray
    lambda_v: np.ndarray
    lambda_x: np.ndarray
    t_tilde: np.ndarray = field(repr=False, default=None)
    x: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True, eq=False)
class SessionCiphertext:
    x_blocks: np.ndarray
    public_side_info: tuple

    def to_dict(self) -> dict:
        return {
            'x_blocks': [[int(b) for b in block] for block in self.x_blocks],
            'public_side_info': [[int(b) for b in info] for info in self.public_side_info],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'SessionCiphertext':
        return cls(
            np.array(data['x_blocks'], dtype=np.uint8),
            tuple(_bits(info) for info in data['public_side_info']),
        )


class ChainEncoder:
    """L-block chained encoder with channel prefixing."""

    def __init__(self, spec: DmsSpec, sets: PolarizedSets, plan: ChainingPlan, L: int):
        if L < 2:
            raise DimensionMismatch(f"Chaining needs at least two blocks, got L={L}")
        self.spec = spec
        self.sets = sets
        self.plan = plan
        self.L = L
        self.n = sets.n
        self.slots = SlotMap.build(plan, sets, L)

    def message_dimensions(self) -> MessageDimensions:
        p = self.plan.partition
        i_set = set(self.plan.I)
        return MessageDimensions(
            w=len(p.C),
            s_first=len(i_set | set(p.G1) | set(p.G12)),
            s_mid=len(i_set),
            s_last=len(i_set | set(p.G2)),
            r=len(self.slots.h_xv_minus),
        )

    def key_lengths(self) -> dict:
        p = self.plan.partition
        return {
            'kappa_theta': len(p.C1),
            'kappa_gamma': len(p.C12),
            'kappa_upsilon_phi_1': self.slots.side_key_length(1),
            'kappa_upsilon_phi_2': self.slots.side_key_length(2),
            'lambda0_x': len(self.slots.h_xvz),
        }

    def generate_keys(self, rng) -> KeyMaterial:
        source = as_source(rng)
        lengths = self.key_lengths()
        return KeyMaterial(*(source.uniform(lengths[name]) for name in KeyMaterial.FIELDS))

    def random_inputs(self, rng):
        """Uniform (W, S, R) of the sizes given by message_dimensions."""
        source = as_source(rng)
        dims = self.message_dimensions()
        w = [source.uniform(dims.w) for _ in range(self.L)]
        s = [source.uniform(dims.s_size(i, self.L)) for i in range(1, self.L + 1)]
        r = [source.uniform(dims.r) for _ in range(self.L)]
        return w, s, r

    def _check_inputs(self, W, S, R, keys: KeyMaterial):
        dims = self.message_dimensions()
        errors = []
        for name, seqs in (('W', W), ('S', S), ('R', R)):
            if len(seqs) != self.L:
                errors.append(f"{name} has {len(seqs)} blocks, expected {self.L}")
        if not errors:
            for i in range(1, self.L + 1):
                if len(W[i - 1]) != dims.w:
                    errors.append(f"|W_{i}|={len(W[i - 1])}, expected {dims.w}")
                if len(S[i - 1]) != dims.s_size(i, self.L):
                    errors.append(f"|S_{i}|={len(S[i - 1])}, expected {dims.s_size(i, self.L)}")
                if len(R[i - 1]) != dims.r:
                    errors.append(f"|R_{i}|={len(R[i - 1])}, expected {dims.r}")
        for name, length in self.key_lengths().items():
            if len(getattr(keys, name)) != length:
                errors.append(f"|{name}|={len(getattr(keys, name))}, expected {length}")
        if errors:
            raise DimensionMismatch("Encoder inputs do not match the plan:\n" + "\n".join(f"- {e}" for e in errors))

    def form_a_g(self, i: int, s_i, theta_bar_next=None, gamma_bar_next=None, psi_prev=None,
                 gamma_prev=None, pi_prev=None, lambda_v_prev=None):
        """
        Assignments of block i inside G. Missing neighbours (first and last
        block) are None and act as all-zero sequences in XOR slots.
        Returns (assignments, pi_i, lambda_v_i).
        """
        plan, split = self.plan, self.plan.split_sizes
        p = plan.partition
        assignments = {}

        def put(indices, bits, name):
            bits = _bits(bits)
            if len(bits) != len(indices):
                raise LengthMismatch(f"Block {i}: slot {name} has {len(indices)} positions, got {len(bits)} bits")
            for idx, bit in zip(indices, bits):
                if idx in assignments:
                    raise InfeasiblePlan(f"Block {i}: index {idx} written twice ({name})")
                assignments[idx] = int(bit)

        def or_zeros(seq, size):
            return np.zeros(size, dtype=np.uint8) if seq is None else _bits(seq)

        put(self.slots.s_slots(i), s_i, f"S_{i}")
        tb1, tb2 = _split(or_zeros(theta_bar_next, len(p.C1)), split.theta_bar1)
        gb1, gb2 = _split(or_zeros(gamma_bar_next, len(p.C12)), split.gamma_bar1)
        ps1, ps2 = _split(or_zeros(psi_prev, len(p.C2)), split.psi1)
        gm1, gm2 = _split(or_zeros(gamma_prev, len(p.C12)), split.gamma1)
        if len(gm1) != len(gb1) or len(ps2) != len(tb2):
            raise LengthMismatch(f"Block {i}: chained halves have mismatched lengths")

        put(plan.R12, gm1 ^ gb1, 'R12')
        put(plan.R12p, ps2 ^ tb2, "R12'")
        if i < self.L:
            put(plan.R1, tb1, 'R1')
            put(plan.R1p, gb2, "R1'")
        if i >= 2:
            put(plan.R2, ps1, 'R2')
            put(plan.R2p, gm2, "R2'")
            put(plan.R_S, or_zeros(pi_prev, len(plan.R_S)), 'R_S')
            put(plan.R_Lambda, or_zeros(lambda_v_prev, len(plan.R_Lambda)), 'R_Lambda')

        pi_i = np.array([assignments[j] for j in plan.I_G2], dtype=np.uint8)
        lambda_v_i = np.array([assignments[j] for j in plan.R_Lambda], dtype=np.uint8)
        return assignments, pi_i, lambda_v_i

    def channel_prefix(self, v_block, r_i, lambda_x_prev, rng):
        """Second polar stage V -> X. Returns (x_block, lambda_x_i, t_tilde)."""
        r_i, lambda_x_prev = _bits(r_i), _bits(lambda_x_prev)
        if len(r_i) != len(self.slots.h_xv_minus) or len(lambda_x_prev) != len(self.slots.h_xvz):
            raise DimensionMismatch(
                f"Channel prefix expects |R|={len(self.slots.h_xv_minus)}, |Lambda_X|={len(self.slots.h_xvz)}; "
                f"got {len(r_i)}, {len(lambda_x_prev)}"
            )
        known = dict(zip(self.slots.h_xvz, lambda_x_prev.tolist()))
        known.update(zip(self.slots.h_xv_minus, r_i.tolist()))
        ctx = ScContext.build(self.spec, 'X|V', v=_bits(v_block))
        t, x = sc_fill(ctx, known, self.slots.x_rules, as_source(rng))
        return x, lambda_x_prev.copy(), t

    def encode_session(self, W, S, R, keys: KeyMaterial, rng) -> SessionCiphertext:
        ciphertext, _ = self.encode_with_trace(W, S, R, keys, rng)
        return ciphertext

    def encode_with_trace(self, W, S, R, keys: KeyMaterial, rng):
        """Returns (SessionCiphertext, [BlockState per block])."""
        self._check_inputs(W, S, R, keys)
        source = as_source(rng)
        n, L = self.n, self.L
        p = self.plan.partition
        g = set(p.G)

        a = np.zeros((L, n), dtype=np.uint8)
        for i in range(L):
            a[i, list(p.C)] = _bits(W[i])

        # Theta_bar_i and Gamma_bar_i only depend on W_i, so they exist before any block is formed.
        theta_bar = {i: a[i - 1, list(p.C1)] ^ keys.kappa_theta for i in range(2, L + 1)}
        gamma_bar = {i: a[i - 1, list(p.C12)] ^ keys.kappa_gamma for i in range(2, L + 1)}

        v_ctx = ScContext.build(self.spec, 'V', n=n)
        states = []
        psi_prev = gamma_prev = pi_prev = lambda_prev = None
        lambda_x = keys.lambda0_x
        for i in range(1, L + 1):
            assignments, pi_i, lambda_i = self.form_a_g(
                i, S[i - 1], theta_bar.get(i + 1), gamma_bar.get(i + 1),
                psi_prev, gamma_prev, pi_prev, lambda_prev,
            )
            missing = sorted(g - set(assignments))
            if missing:
                allowed = set(self.plan.R1) & set(p.G0)
                if i != L or not set(missing) <= allowed:
                    raise InfeasiblePlan(f"Block {i}: indices {missing} of G received no content")
                assignments.update(zip(missing, source.uniform(len(missing)).tolist()))
            for idx, bit in assignments.items():
                a[i - 1, idx] = bit

            known = {j: int(a[i - 1, j]) for j in self.slots.h_v}
            u, v = sc_fill(v_ctx, known, self.slots.v_rules, source)
            a[i - 1] = u
            x, lambda_x, t = self.channel_prefix(v, R[i - 1], lambda_x, source)

            state = BlockState(
                index=i,
                a_tilde=u.copy(),
                psi=u[list(p.C2)],
                gamma=u[list(p.C12)],
                theta_bar=theta_bar.get(i, np.zeros(0, dtype=np.uint8)),
                gamma_bar=gamma_bar.get(i, np.zeros(0, dtype=np.uint8)),
                pi=pi_i,
                lambda_v=lambda_i,
                lambda_x=lambda_x,
                t_tilde=t,
                x=x,
            )
            states.append(state)
            psi_prev, gamma_prev, pi_prev, lambda_prev = state.psi, state.gamma, pi_i, lambda_i
            logging.debug(f"Encoded block {i}/{L}")

        side_info = []
        for k, block in ((1, 0), (2, L - 1)):
            upsilon = a[block, list(self.slots.upsilon[k])]
            phi = [a[i, list(self.slots.phi[k])] for i in range(L)]
            plain = np.concatenate([upsilon] + phi).astype(np.uint8)
            side_info.append(plain ^ keys.side_key(k))

        x_blocks = np.array([s.x for s in states], dtype=np.uint8)
        return SessionCiphertext(x_blocks, tuple(side_info)), states

    def sample_block(self, rng):
        return sample_block(self.spec, self.sets, rng)
