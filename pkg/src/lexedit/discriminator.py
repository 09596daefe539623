"""Binary style discriminator: complex vs simple, pretrained then frozen.

The classifier head reads the start-token representation.  Once pretrained it
never updates again; a parameter checksum enforces that downstream.  Its final
attention layer doubles as a token-importance source for the attention
baseline.
"""

from __future__ import annotations

import copy
import math
import random
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .corpus import NonParallelCorpus, SentenceTokens, split_dev
from .encoder import (
    EncoderConfig,
    TransformerTextEncoder,
    Vocabulary,
    load_checkpoint,
    parameter_checksum,
    save_checkpoint,
)
from .utils import TrainingError, chunked, pad_batch

COMPLEX_CLASS = 0
SIMPLE_CLASS = 1


class NotTrainedError(RuntimeError):
    """Classification or attention requested from an untrained discriminator."""


@dataclass(frozen=True)
class StyleProbability:
    p_complex: float
    p_simple: float

    def __post_init__(self):
        for p in (self.p_complex, self.p_simple):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
        if abs(self.p_complex + self.p_simple - 1.0) > 1e-6:
            raise ValueError("style probabilities must sum to 1")


class StyleDiscriminator(nn.Module):
    """Encoder plus a two-way linear head over the sentence representation."""

    def __init__(self, vocab: Vocabulary, config: EncoderConfig):
        super().__init__()
        self.encoder = TransformerTextEncoder(vocab, config)
        with torch.random.fork_rng():
            torch.manual_seed(config.seed + 1)
            self.head = nn.Linear(config.hidden_dim, 2)
        self.trained = False

    @property
    def vocab(self) -> Vocabulary:
        return self.encoder.vocab

    def forward_ids(self, ids: torch.Tensor, padding_mask: torch.Tensor | None = None,
                    keep_probs: torch.Tensor | None = None, train_mode: bool = False):
        """Return (logits [B, 2], start-token states [B, d])."""
        embedded = self.encoder.embed(ids, keep_probs=keep_probs)
        states = self.encoder.encode(embedded, padding_mask=padding_mask, train_mode=train_mode)
        h1 = states[:, 0]
        return self.head(h1), h1

    def forward_embedded(self, embedded: torch.Tensor, padding_mask: torch.Tensor | None = None,
                         train_mode: bool = False):
        """Same head pass over an externally built (e.g. soft-masked) embedding."""
        states = self.encoder.encode(embedded, padding_mask=padding_mask, train_mode=train_mode)
        h1 = states[:, 0]
        return self.head(h1), h1

    def _require_trained(self):
        if not self.trained:
            raise NotTrainedError("discriminator has not been pretrained")

    def classify(self, sentence: SentenceTokens | None = None, *,
                 embedded: torch.Tensor | None = None) -> StyleProbability:
        """Style probability of a sentence, or of a pre-embedded soft-masked sequence."""
        self._require_trained()
        if (sentence is None) == (embedded is None):
            raise ValueError("pass exactly one of sentence or embedded")
        with torch.no_grad():
            if sentence is not None:
                prepared = self.encoder.prepare(sentence)
                ids = torch.tensor([prepared.ids], dtype=torch.long)
                logits, _ = self.forward_ids(ids)
            else:
                if embedded.dim() == 2:
                    embedded = embedded.unsqueeze(0)
                logits, _ = self.forward_embedded(embedded)
            probs = F.softmax(logits[0], dim=-1)
        return StyleProbability(p_complex=float(probs[COMPLEX_CLASS]), p_simple=float(probs[SIMPLE_CLASS]))

    def classify_batch(self, sentences: list[SentenceTokens]) -> list[StyleProbability]:
        self._require_trained()
        ids, mask = pad_batch([list(self.encoder.prepare(s).ids) for s in sentences], self.encoder.pad_id)
        with torch.no_grad():
            logits, _ = self.forward_ids(ids, padding_mask=mask)
            probs = F.softmax(logits, dim=-1)
        return [
            StyleProbability(p_complex=float(p[COMPLEX_CLASS]), p_simple=float(p[SIMPLE_CLASS]))
            for p in probs
        ]

    def attention_scores(self, sentence: SentenceTokens) -> tuple[float, ...]:
        """Start-token attention over content tokens, head-averaged, renormalized."""
        self._require_trained()
        prepared = self.encoder.prepare(sentence)
        ids = torch.tensor([prepared.ids], dtype=torch.long)
        with torch.no_grad():
            embedded = self.encoder.embed(ids)
            _, attn = self.encoder.encode(embedded, train_mode=False, need_attention=True)
        row = attn[0, 0, 1:]  # queries from the start token, excluding itself
        total = float(row.sum())
        if total <= 0:
            return tuple(1.0 / len(sentence) for _ in sentence.tokens)
        return tuple(float(v) / total for v in row)

    def freeze_checksum(self) -> str:
        return parameter_checksum(self)

    def save(self, path) -> None:
        save_checkpoint(
            path, "discriminator", self.encoder.config, self.vocab, self.state_dict(),
            extra={"trained": self.trained,
                   "style_labels": {"complex": COMPLEX_CLASS, "simple": SIMPLE_CLASS}},
        )

    @classmethod
    def load(cls, path) -> "StyleDiscriminator":
        payload = load_checkpoint(path, expected_kind="discriminator")
        disc = cls(payload["vocab"], payload["config"])
        disc.load_state_dict(payload["state_dict"])
        disc.trained = bool(payload["extra"].get("trained", False))
        disc.eval()
        return disc


@dataclass
class PretrainResult:
    discriminator: StyleDiscriminator
    dev_accuracy: float
    history: list[dict]


def _accuracy(disc: StyleDiscriminator, sentences: list[SentenceTokens], labels: list[int],
              batch_size: int = 64) -> float:
    correct = 0
    with torch.no_grad():
        for chunk in chunked(list(range(len(sentences))), batch_size):
            ids, mask = pad_batch(
                [list(disc.encoder.prepare(sentences[i]).ids) for i in chunk], disc.encoder.pad_id
            )
            logits, _ = disc.forward_ids(ids, padding_mask=mask)
            pred = logits.argmax(dim=-1)
            correct += sum(int(pred[j]) == labels[i] for j, i in enumerate(chunk))
    return correct / len(sentences)


def pretrain_discriminator(
    corpus: NonParallelCorpus,
    config: EncoderConfig,
    *,
    vocab: Vocabulary | None = None,
    epochs: int = 10,
    batch_size: int = 32,
    learning_rate: float = 1e-3,
    patience: int = 3,
    dev_fraction: float = 0.1,
    seed: int = 0,
) -> PretrainResult:
    """Train the style classifier on balanced mini-batches; keep the best-dev state.

    The returned model is marked trained and is meant to be frozen from here on.
    """
    if vocab is None:
        vocab = Vocabulary.from_corpus(corpus)
    train, dev = split_dev(corpus, dev_fraction, seed)
    disc = StyleDiscriminator(vocab, config)
    optimizer = torch.optim.Adam(disc.parameters(), lr=learning_rate)
    rng = random.Random(seed)
    torch.manual_seed(seed)

    dev_sentences = list(dev.complex_sentences) + list(dev.simple_sentences)
    dev_labels = [COMPLEX_CLASS] * len(dev.complex_sentences) + [SIMPLE_CLASS] * len(dev.simple_sentences)

    half = max(1, batch_size // 2)
    n_balanced = min(len(train.complex_sentences), len(train.simple_sentences))
    best_acc = -1.0
    best_state = None
    bad_epochs = 0
    history: list[dict] = []
    last_finite = 0.0

    for epoch in range(epochs):
        cx_order = rng.sample(range(len(train.complex_sentences)), n_balanced)
        sp_order = rng.sample(range(len(train.simple_sentences)), n_balanced)
        disc.train()
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_balanced, half):
            cx = [train.complex_sentences[i] for i in cx_order[start : start + half]]
            sp = [train.simple_sentences[i] for i in sp_order[start : start + half]]
            batch = cx + sp
            labels = torch.tensor([COMPLEX_CLASS] * len(cx) + [SIMPLE_CLASS] * len(sp))
            ids, mask = pad_batch([list(disc.encoder.prepare(s).ids) for s in batch], disc.encoder.pad_id)
            logits, _ = disc.forward_ids(ids, padding_mask=mask, train_mode=True)
            loss = F.cross_entropy(logits, labels)
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"discriminator loss diverged at epoch {epoch}; last finite loss {last_finite:.6f}"
                )
            last_finite = float(loss.detach())
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += last_finite
            n_batches += 1
        disc.eval()
        disc.trained = True  # needed so accuracy evaluation may classify
        acc = _accuracy(disc, dev_sentences, dev_labels)
        history.append({"epoch": epoch, "loss": epoch_loss / max(1, n_batches), "dev_accuracy": acc})
        if acc > best_acc:
            best_acc = acc
            best_state = copy.deepcopy(disc.state_dict())
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= patience:
                break

    if best_state is not None:
        disc.load_state_dict(best_state)
    disc.eval()
    disc.trained = True
    if not math.isfinite(best_acc):
        raise TrainingError("discriminator pretraining produced no finite dev accuracy")
    return PretrainResult(discriminator=disc, dev_accuracy=best_acc, history=history)
