"""Order-free multi-label classification toolkit.

Sequence decoding over label sets with optimal-completion training, a
binary-relevance auxiliary head, two decoder-integration strategies, and
brute-force oracles that certify the training targets and the decoding
search on small label spaces.
"""

from .data import Dataset, Instance, LabelSpace, SyntheticSpec, Vocabulary, synth_generate
from .decoding import beam_search, br_threshold_predict, joint_decode, logistic_rescore
from .metrics import MetricsReport, evaluate
from .model import Model, ModelConfig
from .ocd import PrefixState, ocd_loss, optimal_policy, optimal_q, reward
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "Instance",
    "LabelSpace",
    "MetricsReport",
    "Model",
    "ModelConfig",
    "PrefixState",
    "SyntheticSpec",
    "TrainConfig",
    "Vocabulary",
    "beam_search",
    "br_threshold_predict",
    "evaluate",
    "joint_decode",
    "logistic_rescore",
    "ocd_loss",
    "optimal_policy",
    "optimal_q",
    "reward",
    "synth_generate",
    "train",
]
