"""Contextual encoder: embedding sum with differentiable keep-probability gating.

Per-token vectors are the sum of token, type, and position embeddings; an
optional keep probability scales the token embedding only, which keeps
masking decisions differentiable.  A small trainable transformer is the
default backend; a pretrained masked-LM adapter with the same surface lives
in `lexedit.hf`.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .corpus import SentenceTokens

PAD_TOKEN = "[PAD]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
MASK_TOKEN = "[MASK]"
UNK_TOKEN = "[UNK]"
SPECIAL_TOKENS = (PAD_TOKEN, CLS_TOKEN, SEP_TOKEN, MASK_TOKEN, UNK_TOKEN)

CHECKPOINT_VERSION = 1


class EncoderError(Exception):
    """Encoder misuse: bad shapes, bad config, or unknown checkpoint format."""


class SequenceTooLongError(EncoderError):
    """Input exceeds the position table; truncation is never silent."""


class Vocabulary:
    """Token/id mapping with reserved special symbols at the front."""

    def __init__(self, words):
        self._tokens: list[str] = list(SPECIAL_TOKENS)
        index = {tok: i for i, tok in enumerate(self._tokens)}
        for word in words:
            if word not in index:
                index[word] = len(self._tokens)
                self._tokens.append(word)
        self._index = index

    @classmethod
    def from_corpus(cls, corpus, extra_words=()) -> "Vocabulary":
        seen: dict[str, None] = {}
        for side in (corpus.complex_sentences, corpus.simple_sentences):
            for sent in side:
                for tok in sent.tokens:
                    seen.setdefault(tok, None)
        for word in extra_words:
            seen.setdefault(word, None)
        return cls(seen.keys())

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id_of(self, token: str) -> int:
        if token in self._index:
            return self._index[token]
        lowered = token.lower()
        return self._index.get(lowered, self._index[UNK_TOKEN])

    def token_of(self, idx: int) -> str:
        return self._tokens[idx]

    def encode(self, tokens) -> list[int]:
        return [self.id_of(t) for t in tokens]

    @property
    def pad_id(self) -> int:
        return self._index[PAD_TOKEN]

    @property
    def cls_id(self) -> int:
        return self._index[CLS_TOKEN]

    @property
    def sep_id(self) -> int:
        return self._index[SEP_TOKEN]

    @property
    def mask_id(self) -> int:
        return self._index[MASK_TOKEN]

    def word_ids(self) -> list[int]:
        """Ids of ordinary words (specials excluded), for candidate ranking."""
        return list(range(len(SPECIAL_TOKENS), len(self._tokens)))

    def to_list(self) -> list[str]:
        return list(self._tokens)

    @classmethod
    def from_list(cls, tokens: list[str]) -> "Vocabulary":
        if tuple(tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise EncoderError("vocabulary list does not start with the reserved specials")
        return cls(tokens[len(SPECIAL_TOKENS) :])


@dataclass(frozen=True)
class EncoderConfig:
    depth: int = 2
    heads: int = 4
    hidden_dim: int = 64
    max_len: int = 64
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim % self.heads != 0:
            raise EncoderError(f"hidden_dim {self.hidden_dim} not divisible by heads {self.heads}")
        if min(self.depth, self.heads, self.hidden_dim, self.max_len) < 1:
            raise EncoderError("depth, heads, hidden_dim, and max_len must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise EncoderError(f"dropout must be in [0, 1), got {self.dropout}")


@dataclass(frozen=True)
class HiddenStates:
    """Per-token hidden vectors plus the first token's vector as sentence rep."""

    states: torch.Tensor
    sentence_rep: torch.Tensor


@dataclass(frozen=True)
class PreparedSentence:
    """Encoder-unit view of one sentence.

    ids: encoder input ids (sentence-start marker included).
    row_word_index: for every row, the 0-based word it belongs to, or -1 for
    special rows.  word_rows: the first row of each word, used to read
    word-level predictions.  The trainable backend is word-per-row; subword
    backends broadcast keep probabilities over all rows of a word.
    """

    ids: tuple[int, ...]
    row_word_index: tuple[int, ...]
    word_rows: tuple[int, ...]


class _EncoderBlock(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        d = config.hidden_dim
        self.attn = nn.MultiheadAttention(d, config.heads, dropout=config.dropout, batch_first=True)
        self.ff = nn.Sequential(nn.Linear(d, 4 * d), nn.GELU(), nn.Linear(4 * d, d))
        self.norm1 = nn.LayerNorm(d)
        self.norm2 = nn.LayerNorm(d)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x, key_padding_mask=None, need_weights=False):
        attn_out, attn_weights = self.attn(
            x, x, x,
            key_padding_mask=key_padding_mask,
            need_weights=need_weights,
            average_attn_weights=True,
        )
        x = self.norm1(x + self.dropout(attn_out))
        x = self.norm2(x + self.dropout(self.ff(x)))
        return x, attn_weights


class TransformerTextEncoder(nn.Module):
    """Small bidirectional transformer over word-level tokens."""

    def __init__(self, vocab: Vocabulary, config: EncoderConfig):
        super().__init__()
        self.vocab = vocab
        self.config = config
        d = config.hidden_dim
        with torch.random.fork_rng():
            torch.manual_seed(config.seed)
            self.token_embeddings = nn.Embedding(len(vocab), d, padding_idx=vocab.pad_id)
            self.type_embeddings = nn.Embedding(2, d)
            self.position_embeddings = nn.Embedding(config.max_len, d)
            # No normalization between the embedding sum and the first block:
            # keep-probability scaling must stay proportional all the way into
            # attention, otherwise soft-masked tokens get renormalized back up
            # and the style classifier barely reacts until keep is near zero.
            self.input_dropout = nn.Dropout(config.dropout)
            self.blocks = nn.ModuleList(_EncoderBlock(config) for _ in range(config.depth))

    @property
    def pad_id(self) -> int:
        return self.vocab.pad_id

    def prepare(self, sentence: SentenceTokens) -> PreparedSentence:
        ids = [self.vocab.cls_id] + self.vocab.encode(sentence.tokens)
        n = len(sentence)
        return PreparedSentence(
            ids=tuple(ids),
            row_word_index=(-1,) + tuple(range(n)),
            word_rows=tuple(range(1, n + 1)),
        )

    def embed(self, token_ids: torch.Tensor, keep_probs: torch.Tensor | None = None,
              type_ids: torch.Tensor | None = None) -> torch.Tensor:
        """Sum token, type, and position embeddings for [B, L] ids.

        When keep_probs is given it scales the token embedding only; type and
        position embeddings are untouched, and the output stays differentiable
        with respect to keep_probs.  No normalization or dropout happens here.
        """
        if token_ids.dim() != 2:
            raise EncoderError(f"token_ids must be [B, L], got shape {tuple(token_ids.shape)}")
        B, L = token_ids.shape
        if L > self.config.max_len:
            raise SequenceTooLongError(f"sequence length {L} exceeds max_len {self.config.max_len}")
        tok = self.token_embeddings(token_ids)
        if keep_probs is not None:
            if keep_probs.shape != token_ids.shape:
                raise EncoderError(
                    f"keep_probs shape {tuple(keep_probs.shape)} does not match ids {tuple(token_ids.shape)}"
                )
            tok = tok * keep_probs.unsqueeze(-1)
        if type_ids is None:
            type_ids = torch.zeros_like(token_ids)
        positions = torch.arange(L, device=token_ids.device).unsqueeze(0).expand(B, L)
        return tok + self.type_embeddings(type_ids) + self.position_embeddings(positions)

    def encode(self, embedded: torch.Tensor, padding_mask: torch.Tensor | None = None,
               train_mode: bool = False, need_attention: bool = False):
        """Run the transformer stack over an embedded [B, L, d] batch.

        Deterministic when train_mode is False (dropout off).  Returns the
        per-token states, plus the final block's start-token attention map when
        need_attention is set.
        """
        if embedded.dim() != 3:
            raise EncoderError(f"embedded must be [B, L, d], got shape {tuple(embedded.shape)}")
        if embedded.shape[1] > self.config.max_len:
            raise SequenceTooLongError(
                f"sequence length {embedded.shape[1]} exceeds max_len {self.config.max_len}"
            )
        if not torch.isfinite(embedded).all():
            raise EncoderError("embedded input contains non-finite values")
        was_training = self.training
        self.train(train_mode)
        try:
            x = self.input_dropout(embedded)
            attn = None
            for i, block in enumerate(self.blocks):
                want = need_attention and i == len(self.blocks) - 1
                x, weights = block(x, key_padding_mask=padding_mask, need_weights=want)
                if want:
                    attn = weights
        finally:
            self.train(was_training)
        if need_attention:
            return x, attn
        return x

    # Sentence-level conveniences -------------------------------------------------

    def _keep_vector(self, sentence: SentenceTokens, keep_probs) -> torch.Tensor:
        n = len(sentence)
        if keep_probs is None:
            raise EncoderError("keep_probs is None")
        if isinstance(keep_probs, torch.Tensor):
            kp = keep_probs.to(dtype=self.token_embeddings.weight.dtype)
        else:
            kp = torch.tensor(list(keep_probs), dtype=self.token_embeddings.weight.dtype)
        if kp.shape != (n,):
            raise EncoderError(f"keep_probs must have length {n}, got shape {tuple(kp.shape)}")
        if ((kp < 0) | (kp > 1)).any():
            raise EncoderError("keep_probs entries must lie in [0, 1]")
        one = torch.ones(1, dtype=kp.dtype)
        return torch.cat([one, kp]).unsqueeze(0)

    def embed_sentence(self, sentence: SentenceTokens, keep_probs=None) -> torch.Tensor:
        """Embed one sentence (start marker prepended, its keep prob pinned to 1)."""
        prepared = self.prepare(sentence)
        ids = torch.tensor([prepared.ids], dtype=torch.long)
        kp = None if keep_probs is None else self._keep_vector(sentence, keep_probs)
        return self.embed(ids, keep_probs=kp)[0]

    def encode_sentence(self, sentence: SentenceTokens, keep_probs=None,
                        train_mode: bool = False) -> HiddenStates:
        embedded = self.embed_sentence(sentence, keep_probs=keep_probs).unsqueeze(0)
        states = self.encode(embedded, train_mode=train_mode)[0]
        return HiddenStates(states=states, sentence_rep=states[0])


def parameter_checksum(module: nn.Module) -> str:
    """Order-stable digest over every parameter tensor, for frozen-model checks."""
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode("utf-8"))
        array = tensor.detach().cpu().numpy()
        digest.update(str(array.dtype).encode("utf-8"))
        digest.update(str(array.shape).encode("utf-8"))
        digest.update(np.ascontiguousarray(array).tobytes())
    return digest.hexdigest()


def save_checkpoint(path, kind: str, config: EncoderConfig, vocab: Vocabulary,
                    state_dict: dict, extra: dict | None = None) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "kind": kind,
        "config": asdict(config),
        "vocab": vocab.to_list(),
        "state_dict": state_dict,
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path, expected_kind: str | None = None) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise EncoderError(f"checkpoint {path} has no format_version field")
    if payload["format_version"] != CHECKPOINT_VERSION:
        raise EncoderError(
            f"checkpoint {path} has format_version {payload['format_version']}, "
            f"expected {CHECKPOINT_VERSION}"
        )
    if expected_kind is not None and payload.get("kind") != expected_kind:
        raise EncoderError(f"checkpoint {path} is {payload.get('kind')!r}, expected {expected_kind!r}")
    payload["config"] = EncoderConfig(**payload["config"])
    payload["vocab"] = Vocabulary.from_list(payload["vocab"])
    return payload
