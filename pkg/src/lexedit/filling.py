"""Difficulty-aware cloze filling.

The fill input pairs the original sentence with its masked version, separated
by a fixed natural-language instruction announcing that the second sentence is
the simpler one.  A masked-LM predicts each mask independently; candidates are
filtered (ascii-lowercase only, no morphological variants of the complex word)
and the top survivor replaces the mask in the final sentence.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field

import torch
from torch import nn
from torch.nn import functional as F

from .corpus import NonParallelCorpus, SentenceTokens
from .edit_predictor import EditSequence, decode, apply_edits
from .encoder import (
    CLS_TOKEN,
    MASK_TOKEN,
    SEP_TOKEN,
    EncoderConfig,
    SequenceTooLongError,
    TransformerTextEncoder,
    Vocabulary,
    load_checkpoint,
    save_checkpoint,
)
from .stemming import porter_stem
from .utils import TrainingError, pad_batch

INSTRUCTION_TEXT = "The simpler version of the previous sentence is:"


def instruction_tokens() -> tuple[str, ...]:
    """The instruction split on whitespace; surface form preserved."""
    return tuple(INSTRUCTION_TEXT.split())


_LOWER_ALPHA = re.compile(r"^[a-z]+$")


@dataclass(frozen=True)
class FillInput:
    """Full cloze sequence: [CLS] original [SEP] instruction masked [SEP].

    mask_positions index into `sequence`; masked_offset is where the masked
    copy starts, so the original word behind mask position p sits at
    sequence[1 + (p - masked_offset)].
    """

    sequence: tuple[str, ...]
    type_ids: tuple[int, ...]
    mask_positions: tuple[int, ...]
    masked_offset: int

    def source_word(self, position: int) -> str:
        return self.sequence[1 + (position - self.masked_offset)]


def build_fill_input(original: SentenceTokens, masked: SentenceTokens) -> FillInput:
    """Lay out the paired cloze input and locate the mask slots."""
    if len(original) != len(masked):
        raise ValueError(
            f"original has {len(original)} tokens but masked has {len(masked)}"
        )
    for orig_tok, masked_tok in zip(original.tokens, masked.tokens):
        if masked_tok != orig_tok and masked_tok != MASK_TOKEN:
            raise ValueError(
                f"masked sentence may differ only at mask tokens, found {masked_tok!r} for {orig_tok!r}"
            )
    instr = instruction_tokens()
    first = (CLS_TOKEN,) + original.tokens + (SEP_TOKEN,)
    second = instr + masked.tokens + (SEP_TOKEN,)
    sequence = first + second
    type_ids = (0,) * len(first) + (1,) * len(second)
    masked_offset = len(first) + len(instr)
    mask_positions = tuple(
        masked_offset + i for i, tok in enumerate(masked.tokens) if tok == MASK_TOKEN
    )
    return FillInput(
        sequence=sequence,
        type_ids=type_ids,
        mask_positions=mask_positions,
        masked_offset=masked_offset,
    )


def filter_candidates(ranked: list[tuple[str, float]], complex_word: str) -> list[tuple[str, float]]:
    """Drop non-ascii-lowercase candidates and anything stemming like the complex word."""
    complex_lower = complex_word.lower()
    complex_stem = porter_stem(complex_lower)
    out: list[tuple[str, float]] = []
    seen: set[str] = set()
    for word, score in ranked:
        lowered = word.lower()
        if not _LOWER_ALPHA.match(lowered):
            continue
        if lowered == complex_lower or porter_stem(lowered) == complex_stem:
            continue
        if lowered in seen:
            continue
        seen.add(lowered)
        out.append((lowered, score))
    return out


class ToyMaskedLmFiller(nn.Module):
    """Small masked-LM over the paired cloze format, tied output embeddings."""

    def __init__(self, vocab: Vocabulary, config: EncoderConfig):
        super().__init__()
        self.encoder = TransformerTextEncoder(vocab, config)
        with torch.random.fork_rng():
            torch.manual_seed(config.seed + 3)
            self.output_bias = nn.Parameter(torch.zeros(len(vocab)))
        self.trained = False

    @property
    def vocab(self) -> Vocabulary:
        return self.encoder.vocab

    def logits(self, ids: torch.Tensor, type_ids: torch.Tensor,
               padding_mask: torch.Tensor | None = None, train_mode: bool = False) -> torch.Tensor:
        embedded = self.encoder.embed(ids, type_ids=type_ids)
        states = self.encoder.encode(embedded, padding_mask=padding_mask, train_mode=train_mode)
        return states @ self.encoder.token_embeddings.weight.T + self.output_bias

    def predict_candidates(self, fill_input: FillInput, k: int = 10) -> list[list[tuple[str, float]]]:
        """Per-mask ranked substitution candidates, filtered and capped at k."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if not self.trained:
            raise TrainingError("filling model has not been trained")
        if not fill_input.mask_positions:
            return []
        ids = torch.tensor([self.vocab.encode(fill_input.sequence)], dtype=torch.long)
        types = torch.tensor([fill_input.type_ids], dtype=torch.long)
        with torch.no_grad():
            logits = self.logits(ids, types, train_mode=False)[0]
        word_ids = self.vocab.word_ids()
        results = []
        for position in fill_input.mask_positions:
            probs = F.softmax(logits[position], dim=-1)
            ranked = sorted(
                ((self.vocab.token_of(i), float(probs[i])) for i in word_ids),
                key=lambda ws: -ws[1],
            )
            filtered = filter_candidates(ranked, fill_input.source_word(position))
            results.append(filtered[:k])
        return results

    def save(self, path) -> None:
        save_checkpoint(path, "filler", self.encoder.config, self.vocab, self.state_dict(),
                        extra={"trained": self.trained})

    @classmethod
    def load(cls, path) -> "ToyMaskedLmFiller":
        payload = load_checkpoint(path, expected_kind="filler")
        filler = cls(payload["vocab"], payload["config"])
        filler.load_state_dict(payload["state_dict"])
        filler.trained = bool(payload["extra"].get("trained", False))
        filler.eval()
        return filler


def train_toy_filler(
    corpus: NonParallelCorpus,
    vocab: Vocabulary,
    config: EncoderConfig,
    *,
    epochs: int = 10,
    batch_size: int = 32,
    learning_rate: float = 1e-3,
    mask_rate: float = 0.3,
    seed: int = 0,
) -> ToyMaskedLmFiller:
    """Train the cloze model on self-pairs from both corpus sides.

    Each example pairs a sentence with a randomly masked copy of itself in the
    full fill-input layout; the model learns to restore the originals, which at
    inference time lets frame context and the instruction pick the simple slot
    fillers.
    """
    sentences = list(corpus.complex_sentences) + list(corpus.simple_sentences)
    filler = ToyMaskedLmFiller(vocab, config)
    optimizer = torch.optim.Adam(filler.parameters(), lr=learning_rate)
    rng = random.Random(seed)
    torch.manual_seed(seed)
    pad_id = vocab.pad_id

    for _ in range(epochs):
        order = rng.sample(range(len(sentences)), len(sentences))
        filler.train()
        for start in range(0, len(order), batch_size):
            batch = [sentences[i] for i in order[start : start + batch_size]]
            id_rows, type_rows, target_rows = [], [], []
            for sent in batch:
                mask_at = [i for i in range(len(sent)) if rng.random() < mask_rate]
                if not mask_at:
                    mask_at = [rng.randrange(len(sent))]
                masked_tokens = tuple(
                    MASK_TOKEN if i in set(mask_at) else tok for i, tok in enumerate(sent.tokens)
                )
                fi = build_fill_input(sent, SentenceTokens(masked_tokens))
                ids = vocab.encode(fi.sequence)
                targets = [-100] * len(ids)
                for pos in fi.mask_positions:
                    targets[pos] = vocab.id_of(fi.source_word(pos))
                id_rows.append(ids)
                type_rows.append(list(fi.type_ids))
                target_rows.append(targets)
            ids, pad_mask = pad_batch(id_rows, pad_id)
            types, _ = pad_batch(type_rows, 0)
            targets, _ = pad_batch(target_rows, -100)
            logits = filler.logits(ids, types, padding_mask=pad_mask, train_mode=True)
            loss = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1),
                                   ignore_index=-100)
            if not torch.isfinite(loss):
                raise TrainingError("filling model loss diverged")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    filler.eval()
    filler.trained = True
    return filler


@dataclass(frozen=True)
class SimplificationResult:
    original: SentenceTokens
    edits: EditSequence
    masked: SentenceTokens
    candidates: tuple[tuple[tuple[str, float], ...], ...]
    final: SentenceTokens

    def __post_init__(self):
        if len(self.final) != len(self.original):
            raise ValueError("final sentence must preserve token count")


def simplify_sentence(
    sentence: SentenceTokens,
    predictor,
    filler,
    *,
    k: int = 10,
    threshold: float = 0.5,
) -> SimplificationResult:
    """Full pipeline for one sentence: predict edits, mask, fill, substitute.

    Masks whose filtered candidate list comes back empty are restored to the
    original word; the output never contains a mask symbol.
    """
    probs = predictor.predict_probs(sentence)
    edits = decode(probs, threshold=threshold, tokens=sentence.tokens)
    masked = apply_edits(sentence, edits)
    mask_indices = edits.mask_positions()
    if not mask_indices:
        return SimplificationResult(
            original=sentence, edits=edits, masked=masked, candidates=(), final=sentence
        )
    fill_input = build_fill_input(sentence, masked)
    candidates = filler.predict_candidates(fill_input, k=k)
    final_tokens = list(sentence.tokens)
    for mask_idx, cand in zip(mask_indices, candidates):
        if cand:
            final_tokens[mask_idx] = cand[0][0]
    return SimplificationResult(
        original=sentence,
        edits=edits,
        masked=masked,
        candidates=tuple(tuple(c) for c in candidates),
        final=SentenceTokens(tuple(final_tokens), has_cls=sentence.has_cls),
    )
