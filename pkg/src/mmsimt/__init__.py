"""Multimodal simultaneous machine translation lab."""

from .data import Corpus, Vocabulary, load_features, load_parallel, synth_task, write_features
from .estimator import SimultaneousTranslator
from .metrics import average_lagging, average_proportion, consecutive_wait
from .model import ModelConfig, TranslationModel
from .policies import ActionTrace, PolicyConfig, consecutive_greedy, simulate_wait_if_diff, simulate_wait_k

__version__ = "0.1.0"

__all__ = [
    "ActionTrace", "Corpus", "ModelConfig", "PolicyConfig", "SimultaneousTranslator", "TranslationModel",
    "Vocabulary", "average_lagging", "average_proportion", "consecutive_greedy", "consecutive_wait",
    "load_features", "load_parallel", "simulate_wait_if_diff", "simulate_wait_k", "synth_task",
    "write_features",
]
