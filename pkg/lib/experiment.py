import logging
from dataclasses import dataclass

from lib.chain_codec import ChainEncoder
from lib.channel_model import ChannelOrderReport, DmsSpec, validate_and_order
from lib.config import ExperimentConfig
from lib.decoder import ChainDecoder
from lib.set_builder import ChainingPlan, HighSetPartition, PolarizedSets, RateReport, SetBuilder, rate_report


@dataclass(frozen=True, eq=False)
class ExperimentSetup:
    """Everything fixed for a run: the (ordered) channel, the sets and the plan."""
    spec: DmsSpec
    order: ChannelOrderReport
    sets: PolarizedSets
    partition: HighSetPartition
    plan: ChainingPlan
    L: int

    @property
    def n(self) -> int:
        return self.sets.n

    def encoder(self) -> ChainEncoder:
        return ChainEncoder(self.spec, self.sets, self.plan, self.L)

    def decoder(self, spec: DmsSpec = None) -> ChainDecoder:
        return ChainDecoder(spec or self.spec, self.sets, self.plan, self.L)

    def rates(self) -> RateReport:
        return rate_report(self.plan, self.sets, self.n, self.L)

    def with_L(self, L: int) -> 'ExperimentSetup':
        return ExperimentSetup(self.spec, self.order, self.sets, self.partition, self.plan, L)

    def summary(self) -> dict:
        return {
            'n': self.n,
            'L': self.L,
            'beta': self.sets.beta,
            'delta_n': self.sets.delta_n,
            'case': self.plan.case_label,
            'swapped': self.order.swapped,
            'partition': self.partition.sizes(),
            'slots': {name: len(idx) for name, idx in self.plan.slots().items()},
            'rates': self.rates().to_dict(),
        }


def build_setup(config: ExperimentConfig, builder: SetBuilder = None, n: int = None,
                spec: DmsSpec = None) -> ExperimentSetup:
    """Orders the receivers, builds the polarized sets and derives the chaining plan."""
    builder = builder or SetBuilder(config.sets_cache, config.workers)
    order = validate_and_order(spec or config.spec())
    n = n or config.n
    sets, partition, plan = builder.construct(order.spec, n, config.beta, config.method, config.samples, config.seed)
    logging.info(f"Setup ready: n={n}, L={config.L}, beta={sets.beta}, case {plan.case_label}")
    return ExperimentSetup(order.spec, order, sets, partition, plan, config.L)
