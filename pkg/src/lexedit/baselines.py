"""Feature-threshold baselines for complex word identification.

Character length, vowel count, syllable count (maximal vowel groups), corpus
frequency (rarer means more complex), and the discriminator's start-token
attention all reduce to a score-vs-threshold rule producing edit sequences.
"""

from __future__ import annotations

from collections import Counter
from enum import Enum

from .corpus import AnnotatedInstance, SentenceTokens
from .edit_predictor import KEEP, MASK, EditSequence, is_punctuation


class FeatureKind(str, Enum):
    CHARACTER_LENGTH = "character_length"
    SYLLABLE_COUNT = "syllable_count"
    VOWEL_COUNT = "vowel_count"
    CORPUS_FREQUENCY = "corpus_frequency"
    ATTENTION = "attention"


_VOWELS = set("aeiou")


def build_frequency_table(sentences: list[SentenceTokens]) -> Counter:
    """Word occurrence counts over a reference corpus (typically the simple side)."""
    table: Counter = Counter()
    for sent in sentences:
        table.update(sent.tokens)
    return table


def feature_score(word: str, kind: FeatureKind, freq: Counter | None = None) -> float:
    """Numeric complexity proxy for one word under the given feature."""
    kind = FeatureKind(kind)
    lowered = word.lower()
    if kind is FeatureKind.CHARACTER_LENGTH:
        return float(sum(ch.isalpha() for ch in lowered))
    if kind is FeatureKind.VOWEL_COUNT:
        return float(sum(ch in _VOWELS for ch in lowered))
    if kind is FeatureKind.SYLLABLE_COUNT:
        groups = 0
        in_group = False
        for ch in lowered:
            if ch in _VOWELS:
                if not in_group:
                    groups += 1
                in_group = True
            else:
                in_group = False
        return float(max(groups, 1))
    if kind is FeatureKind.CORPUS_FREQUENCY:
        if freq is None:
            raise ValueError("corpus_frequency scoring needs a frequency table")
        return float(freq.get(lowered, 0))
    raise ValueError(f"feature {kind} has no per-word score; use threshold_cwi")


def threshold_cwi(
    sentence: SentenceTokens,
    kind: FeatureKind,
    threshold: float,
    *,
    freq: Counter | None = None,
    discriminator=None,
) -> EditSequence:
    """Label M where the feature crosses the threshold.

    Length-like features (and attention) mask at score >= threshold; frequency
    masks at score < threshold since rarer words are the complex ones.
    Punctuation is always kept, as is the implicit start marker.
    """
    kind = FeatureKind(kind)
    if kind is FeatureKind.ATTENTION:
        if discriminator is None:
            raise ValueError("attention baseline needs a trained discriminator")
        scores = list(discriminator.attention_scores(sentence))
    elif kind is FeatureKind.CORPUS_FREQUENCY:
        scores = [feature_score(tok, kind, freq) for tok in sentence.tokens]
    else:
        scores = [feature_score(tok, kind) for tok in sentence.tokens]
    labels = []
    for tok, score in zip(sentence.tokens, scores):
        if kind is FeatureKind.CORPUS_FREQUENCY:
            complex_here = score < threshold
        else:
            complex_here = score >= threshold
        if is_punctuation(tok):
            complex_here = False
        labels.append(MASK if complex_here else KEEP)
    return EditSequence(tuple(labels))


def tune_threshold(
    instances: list[AnnotatedInstance],
    kind: FeatureKind,
    grid: list[float],
    *,
    freq: Counter | None = None,
    discriminator=None,
) -> tuple[float, float]:
    """Grid-search the threshold maximizing CWI F1; ties pick the smallest.

    Returns (best_threshold, best_f1).
    """
    from .evaluation import cwi_metrics

    if not grid:
        raise ValueError("threshold grid must be non-empty")
    gold = [{inst.complex_index} for inst in instances]
    best_threshold = None
    best_f1 = -1.0
    for threshold in sorted(grid):
        preds = []
        for inst in instances:
            edits = threshold_cwi(inst.sentence, kind, threshold, freq=freq, discriminator=discriminator)
            preds.append(set(edits.mask_positions()))
        f1 = cwi_metrics(preds, gold).f1
        if f1 > best_f1:
            best_f1 = f1
            best_threshold = threshold
    return best_threshold, best_f1
