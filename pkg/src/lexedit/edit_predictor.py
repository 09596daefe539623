"""Per-token keep/mask prediction and application.

The predictor scores every token with a keep probability via a linear head
over encoder states; decoding thresholds those probabilities into K/M labels
and applying them swaps M positions for the reserved mask symbol.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .corpus import SentenceTokens
from .encoder import (
    MASK_TOKEN,
    EncoderConfig,
    TransformerTextEncoder,
    Vocabulary,
    load_checkpoint,
    save_checkpoint,
)

KEEP = "K"
MASK = "M"

KEEP_CLASS = 0
MASK_CLASS = 1


@dataclass(frozen=True)
class EditProbs:
    """Per-token keep probabilities; mask probability is the complement."""

    p_keep: tuple[float, ...]

    def __post_init__(self):
        if not isinstance(self.p_keep, tuple):
            object.__setattr__(self, "p_keep", tuple(self.p_keep))
        if any(not 0.0 <= p <= 1.0 for p in self.p_keep):
            raise ValueError("keep probabilities must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.p_keep)


@dataclass(frozen=True)
class EditSequence:
    """Per-token labels over {K, M}."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if not isinstance(self.labels, tuple):
            object.__setattr__(self, "labels", tuple(self.labels))
        if any(lab not in (KEEP, MASK) for lab in self.labels):
            raise ValueError(f"edit labels must be {KEEP!r} or {MASK!r}")

    def __len__(self) -> int:
        return len(self.labels)

    def mask_positions(self) -> tuple[int, ...]:
        return tuple(i for i, lab in enumerate(self.labels) if lab == MASK)


def serialize_edits(edits: EditSequence) -> str:
    return " ".join(edits.labels)


def parse_edits(text: str) -> EditSequence:
    return EditSequence(tuple(text.split()))


def is_punctuation(token: str) -> bool:
    """True for tokens with no alphanumeric characters; they are never masked."""
    return not any(ch.isalnum() for ch in token)


class EditPredictor(nn.Module):
    """Encoder plus a two-way token head producing keep/mask probabilities."""

    def __init__(self, vocab: Vocabulary, config: EncoderConfig):
        super().__init__()
        self.encoder = TransformerTextEncoder(vocab, config)
        with torch.random.fork_rng():
            torch.manual_seed(config.seed + 2)
            self.head = nn.Linear(config.hidden_dim, 2)

    @property
    def vocab(self) -> Vocabulary:
        return self.encoder.vocab

    def forward_ids(self, ids: torch.Tensor, padding_mask: torch.Tensor | None = None,
                    train_mode: bool = False) -> torch.Tensor:
        """Token logits [B, L, 2]; row 0 of every sequence is the start marker."""
        embedded = self.encoder.embed(ids)
        states = self.encoder.encode(embedded, padding_mask=padding_mask, train_mode=train_mode)
        return self.head(states)

    def keep_probs_batch(self, ids: torch.Tensor, padding_mask: torch.Tensor | None = None,
                         train_mode: bool = False) -> torch.Tensor:
        """Keep probabilities [B, L] over all encoder rows, start marker included."""
        logits = self.forward_ids(ids, padding_mask=padding_mask, train_mode=train_mode)
        return F.softmax(logits, dim=-1)[..., KEEP_CLASS]

    def predict_probs(self, sentence: SentenceTokens) -> EditProbs:
        """Keep probability for each content token, deterministic in eval mode."""
        prepared = self.encoder.prepare(sentence)
        ids = torch.tensor([prepared.ids], dtype=torch.long)
        with torch.no_grad():
            p_keep = self.keep_probs_batch(ids, train_mode=False)[0]
        rows = torch.tensor(prepared.word_rows, dtype=torch.long)
        return EditProbs(tuple(float(p) for p in p_keep[rows]))

    def save(self, path) -> None:
        save_checkpoint(path, "editor", self.encoder.config, self.vocab, self.state_dict())

    @classmethod
    def load(cls, path) -> "EditPredictor":
        payload = load_checkpoint(path, expected_kind="editor")
        predictor = cls(payload["vocab"], payload["config"])
        predictor.load_state_dict(payload["state_dict"])
        predictor.eval()
        return predictor


def decode(probs: EditProbs, threshold: float = 0.5, tokens: tuple[str, ...] | None = None) -> EditSequence:
    """Threshold keep probabilities into labels: M iff p_keep < threshold.

    Ties keep.  When the token strings are supplied, pure-punctuation tokens
    are clamped to K; the start marker is implicit and always kept.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    if tokens is not None and len(tokens) != len(probs):
        raise ValueError(f"got {len(tokens)} tokens for {len(probs)} probabilities")
    labels = []
    for i, p in enumerate(probs.p_keep):
        label = MASK if p < threshold else KEEP
        if tokens is not None and is_punctuation(tokens[i]):
            label = KEEP
        labels.append(label)
    return EditSequence(tuple(labels))


def apply_edits(sentence: SentenceTokens, edits: EditSequence) -> SentenceTokens:
    """Replace M positions with the mask symbol, keeping order and K tokens intact."""
    if len(edits) != len(sentence):
        raise ValueError(f"edit sequence length {len(edits)} != sentence length {len(sentence)}")
    tokens = tuple(
        MASK_TOKEN if lab == MASK else tok for tok, lab in zip(sentence.tokens, edits.labels)
    )
    return SentenceTokens(tokens, has_cls=sentence.has_cls)
