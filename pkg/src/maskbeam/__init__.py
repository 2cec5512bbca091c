"""maskbeam: black-box textual adversarial attacks via mask-then-infill
perturbations and probability-difference-guided beam search."""

from .core import (
    ActionKind,
    AttackConfig,
    AttackRecord,
    Instance,
    LabelSet,
    MASK_TOKEN,
    ProbDist,
    TextSequence,
    is_fooled,
    probability_difference,
)
from .models import ModelBundle
from .search import attack, attack_greedy, exhaustive_attack

__all__ = [
    "ActionKind",
    "AttackConfig",
    "AttackRecord",
    "Instance",
    "LabelSet",
    "MASK_TOKEN",
    "ModelBundle",
    "ProbDist",
    "TextSequence",
    "attack",
    "attack_greedy",
    "exhaustive_attack",
    "is_fooled",
    "probability_difference",
]

__version__ = "0.1.0"
