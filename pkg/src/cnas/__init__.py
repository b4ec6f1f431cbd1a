"""Continual neural architecture search for class-incremental learning.

A task network classifies all classes seen so far; each time new classes
arrive, candidate expansions are generated by function-preserving
morphisms, scored on validation data, steered by two REINFORCE actors,
and adopted only when the expansion gate deems growth beneficial.
"""
from .arch import (ArchDescriptor, ExpansionAction, LayerSpec, deepen_sites,
                   descriptor_of, expand_output, instantiate, widen_sites)
from .checkpoint import load_network, save_network
from .controller import (Actor, Episode, SearchState, encode_state, entropy,
                         normalize_rewards, reinforce_update, sample_action)
from .data import (LabeledDataset, load_cifar100, remap_labels,
                   synthetic_dataset)
from .driver import (LearnerState, Scenario, StepReport, StreamStep,
                     average_incremental_accuracy, incremental_learn,
                     make_stream, run_baseline)
from .morphisms import apply_actions, net2deeper, net2wider
from .network import Network, count_params
from .search import (CandidateResult, SearchConfig, arch_search,
                     heuristic_func, should_expand)
from .training import TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "ArchDescriptor", "ExpansionAction", "LayerSpec", "deepen_sites",
    "descriptor_of", "expand_output", "instantiate", "widen_sites",
    "load_network", "save_network",
    "Actor", "Episode", "SearchState", "encode_state", "entropy",
    "normalize_rewards", "reinforce_update", "sample_action",
    "LabeledDataset", "load_cifar100", "remap_labels", "synthetic_dataset",
    "LearnerState", "Scenario", "StepReport", "StreamStep",
    "average_incremental_accuracy", "incremental_learn", "make_stream",
    "run_baseline",
    "apply_actions", "net2deeper", "net2wider",
    "Network", "count_params",
    "CandidateResult", "SearchConfig", "arch_search", "heuristic_func",
    "should_expand",
    "TrainConfig", "evaluate", "train",
]
