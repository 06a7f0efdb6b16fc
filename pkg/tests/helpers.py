"""Shared builders for fixtures used across test modules."""

from __future__ import annotations

from emoqueue.congraph import InfluenceWeights
from emoqueue.emolex import ClassifiedComment, EmotionKind, EmotionVector
from emoqueue.harness import SimulationConfig
from emoqueue.ingest import RawRecord
from emoqueue.regulator import ThresholdConfig

INTENSITY_ONLY = InfluenceWeights(intensity=1.0, pagerank=0.0, depth=0.0, replies=0.0)


def make_comment(
    comment_id: str,
    parent_id: str | None,
    created_at: float,
    kind: EmotionKind | None = None,
    intensity: float = 0.0,
    author: str = "u",
    vector: EmotionVector | None = None,
    text: str = "",
) -> ClassifiedComment:
    if kind is None and vector is None:
        return ClassifiedComment(
            comment_id, author, parent_id, created_at, text, EmotionVector.zero(), None, 0.0
        )
    if vector is None:
        vector = EmotionVector.unit(kind)
    return ClassifiedComment(
        comment_id, author, parent_id, created_at, text, vector, kind, intensity
    )


def make_record(
    record_id: str,
    parent_id: str | None,
    created_at: float,
    text: str,
    author: str = "u",
) -> RawRecord:
    return RawRecord(
        id=record_id, parent_id=parent_id, author=author, created_at=created_at, text=text
    )


def intensity_only_config(**overrides) -> SimulationConfig:
    """Config where influence reduces to intensity, for hand-computable boards."""
    defaults = dict(weights=INTENSITY_ONLY)
    defaults.update(overrides)
    return SimulationConfig(**defaults)


def no_decay_thresholds(**overrides) -> ThresholdConfig:
    defaults = dict(decay_gamma=0.0)
    defaults.update(overrides)
    return ThresholdConfig(**defaults)
