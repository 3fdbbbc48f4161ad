"""Knowledge-graph embeddings: RotatE, TransE, multi-semantic components."""

from .evaluate import eval_link_prediction, filtered_rank
from .models import RotatEModel, TransEModel, load_embeddings, rotate_apply, rotate_score, save_embeddings, transe_score
from .msre import (
    AngleVectorSet,
    MsreModel,
    SemanticComponentSet,
    collect_relation_angles,
    complete,
    derive_components,
    finetune_components,
    msre_score,
    reduced_angles,
    relation_angle_vector,
)
from .patterns import PatternVerdict, check_pattern
from .store import TripleStore
from .train import KgeTrainConfig, negative_sampling_loss, train_rotate, train_transe

__all__ = [
    "AngleVectorSet",
    "KgeTrainConfig",
    "MsreModel",
    "PatternVerdict",
    "RotatEModel",
    "SemanticComponentSet",
    "TransEModel",
    "TripleStore",
    "check_pattern",
    "collect_relation_angles",
    "complete",
    "derive_components",
    "eval_link_prediction",
    "filtered_rank",
    "finetune_components",
    "load_embeddings",
    "msre_score",
    "negative_sampling_loss",
    "reduced_angles",
    "relation_angle_vector",
    "rotate_apply",
    "rotate_score",
    "save_embeddings",
    "train_rotate",
    "train_transe",
]
