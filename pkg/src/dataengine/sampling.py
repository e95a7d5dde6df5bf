"""Adaptive Bad-case Sampling: inverse-score type weighting, in-context pair
selection, and half-random / half-similar query-image selection.

All randomness flows through one caller-owned ``random.Random`` so a batch is
bitwise reproducible under a fixed seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import IO, Optional

import numpy as np

from .catalog import Catalog
from .errors import ClassificationError, ConfigError, EngineError, SchemaError
from .pool import BadCasePool, SampledPair
from .question_types import QuestionType
from .records import AbilityScoreboard

DEFAULT_SCORE_FLOOR = 0.05
MAX_TYPE_REDRAWS = 5

WEIGHT_MODES = ("inverse", "one-minus")


@dataclass(frozen=True)
class TypeDistribution:
    weights: dict[QuestionType, float]
    floor: float

    def __post_init__(self):
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"weights sum to {total}, expected 1")
        if any(w <= 0 for w in self.weights.values()):
            raise ConfigError("all weights must be positive")


def type_weights(
    scoreboard: AbilityScoreboard,
    type_map: dict[str, QuestionType],
    eps: float = DEFAULT_SCORE_FLOOR,
    mode: str = "inverse",
) -> TypeDistribution:
    """Per-type sampling weights from per-dimension scores.

    Default rule is w = 1 / max(s, eps); the "one-minus" alternative uses
    w = max(1 - s, eps). Dimensions sharing a question type pool their
    correct/total counts. The type universe is the mapping's codomain; mapped
    types with no scored dimension get the maximum raw weight before
    normalization (unknown ability is treated as weakest).
    """
    if not 0 < eps <= 1:
        raise ConfigError(f"eps must be in (0, 1], got {eps}")
    if mode not in WEIGHT_MODES:
        raise ConfigError(f"unknown weight mode {mode!r}")
    if not scoreboard.entries:
        raise ConfigError("scoreboard is empty")

    counts: dict[QuestionType, list[int]] = {}
    for dim, entry in scoreboard.entries.items():
        qtype = type_map.get(dim)
        if qtype is None:
            from .question_types import parse_question_type

            qtype = parse_question_type(dim)
        if qtype is None:
            continue
        acc = counts.setdefault(qtype, [0, 0])
        acc[0] += entry.correct
        acc[1] += entry.total

    raw: dict[QuestionType, float] = {}
    for qtype, (correct, total) in counts.items():
        score = correct / total
        if mode == "inverse":
            raw[qtype] = 1.0 / max(score, eps)
        else:
            raw[qtype] = max(1.0 - score, eps)
    if not raw:
        raise ConfigError("no scoreboard dimension maps to any question type")

    ceiling = max(raw.values())
    for qtype in set(type_map.values()):
        raw.setdefault(qtype, ceiling)

    total_raw = sum(raw.values())
    weights = {qtype: w / total_raw for qtype, w in raw.items()}
    # renormalize away float dust so the distribution invariant holds exactly
    drift = sum(weights.values())
    weights = {qtype: w / drift for qtype, w in weights.items()}
    return TypeDistribution(weights=weights, floor=eps)


def draw_type(dist: TypeDistribution, rng: random.Random) -> QuestionType:
    """One draw from the distribution; iteration order is canonical-name order."""
    u = rng.random()
    acc = 0.0
    ordered = sorted(dist.weights.items(), key=lambda kv: kv[0].value)
    for qtype, weight in ordered:
        acc += weight
        if u < acc:
            return qtype
    return ordered[-1][0]


@dataclass
class EmbeddingIndex:
    dim: int
    ids: list[str] = field(default_factory=list)
    matrix: Optional[np.ndarray] = None  # (n, dim), unit rows
    _row: dict[str, int] = field(default_factory=dict)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._row

    def __len__(self) -> int:
        return len(self.ids)

    def vector(self, image_id: str) -> np.ndarray:
        return self.matrix[self._row[image_id]]


def load_embeddings(source: IO) -> EmbeddingIndex:
    """Parse "image_id<TAB>v1,v2,...,vd" lines; vectors are unit-normalized."""
    ids: list[str] = []
    vectors: list[np.ndarray] = []
    dim = None
    for lineno, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line:
            continue
        image_id, sep, values = line.partition("\t")
        if not sep:
            raise SchemaError("expected image_id<TAB>vector", line=lineno)
        try:
            vec = np.array([float(v) for v in values.split(",")], dtype=np.float64)
        except ValueError as exc:
            raise SchemaError(f"bad vector: {exc}", line=lineno) from exc
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise SchemaError(f"vector length {len(vec)} != {dim}", line=lineno)
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise SchemaError(f"zero-norm vector for {image_id!r}", line=lineno)
        ids.append(image_id)
        vectors.append(vec / norm)
    index = EmbeddingIndex(dim=dim or 0, ids=ids)
    index.matrix = np.vstack(vectors) if vectors else np.zeros((0, dim or 0))
    index._row = {image_id: i for i, image_id in enumerate(ids)}
    return index


def nearest(
    index: EmbeddingIndex,
    anchor_id: str,
    k: int,
    exclude: Optional[set[str]] = None,
) -> list[tuple[str, float]]:
    """Top-k by cosine similarity, anchor and excludes removed, ties broken by
    ascending image_id."""
    if anchor_id not in index:
        raise EngineError(f"anchor {anchor_id!r} not in embedding index")
    if k < 1:
        raise ConfigError("k must be >= 1")
    exclude = exclude or set()
    sims = index.matrix @ index.vector(anchor_id)
    scored = [
        (image_id, float(sims[i]))
        for i, image_id in enumerate(index.ids)
        if image_id != anchor_id and image_id not in exclude
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


@dataclass(frozen=True)
class QuerySeed:
    qtype: QuestionType
    in_context: SampledPair
    image_id: str
    image_mode: str  # random | similar
    seed_trace: dict

    def to_json(self) -> dict:
        return {
            "qtype": self.qtype.value,
            "in_context": [c.to_json() for c in self.in_context.cases],
            "in_context_duplicated": self.in_context.duplicated,
            "image_id": self.image_id,
            "image_mode": self.image_mode,
            "seed_trace": self.seed_trace,
        }


def _draw_pooled_type(
    dist: TypeDistribution, pool: BadCasePool, rng: random.Random
) -> tuple[QuestionType, int]:
    stats = pool.stats()
    for redraw in range(MAX_TYPE_REDRAWS + 1):
        qtype = draw_type(dist, rng)
        if stats[qtype] > 0:
            return qtype, redraw
    if not any(stats.values()):
        raise ClassificationError("bad-case pool is empty for every question type")
    # fall back to the globally most-populated type
    fallback = max(stats, key=lambda qt: (stats[qt], qt.value))
    return fallback, MAX_TYPE_REDRAWS + 1


def build_query_seeds(
    scoreboard: AbilityScoreboard,
    pool: BadCasePool,
    catalog: Catalog,
    index: Optional[EmbeddingIndex],
    n: int,
    type_map: dict[str, QuestionType],
    rng: random.Random,
    eps: float = DEFAULT_SCORE_FLOOR,
    weight_mode: str = "inverse",
) -> list[QuerySeed]:
    """Build n query seeds: ceil(n/2) with randomly chosen images, floor(n/2)
    anchored on the first in-context case's image via the embedding index.

    Image ids never repeat within one batch while unused catalog images remain.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    if len(catalog) == 0:
        raise ConfigError("catalog is empty")
    dist = type_weights(scoreboard, type_map, eps=eps, mode=weight_mode)

    used: set[str] = set()
    seeds: list[QuerySeed] = []
    for position in range(n):
        mode = "random" if position % 2 == 0 else "similar"
        qtype, redraws = _draw_pooled_type(dist, pool, rng)
        pair = pool.sample_pairs(qtype, rng)
        fallback = False

        image_id = None
        if mode == "similar":
            anchor = pair.cases[0].base.image_id
            if index is not None and anchor in index:
                for candidate, _sim in nearest(index, anchor, k=len(index), exclude=used):
                    if candidate in catalog:
                        image_id = candidate
                        break
            if image_id is None:
                mode, fallback = "random", True

        if image_id is None:
            unused = [i for i in catalog.image_ids() if i not in used]
            if not unused:
                raise EngineError("catalog exhausted: every image already used in this batch")
            image_id = rng.choice(unused)

        used.add(image_id)
        seeds.append(
            QuerySeed(
                qtype=qtype,
                in_context=pair,
                image_id=image_id,
                image_mode=mode,
                seed_trace={
                    "position": position,
                    "type_redraws": redraws,
                    "image_fallback": fallback,
                },
            )
        )
    return seeds
