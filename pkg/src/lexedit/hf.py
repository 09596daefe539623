"""Optional pretrained masked-LM backend (requires the `transformers` package).

Provides the same word-level surface as the built-in transformer: keep
probabilities gate the token embedding only and broadcast to every subtoken of
a word, while word-level predictions read the first subtoken's row.  Intended
for full-scale runs; the toy backend covers CI.
"""

from __future__ import annotations

import torch

from .corpus import SentenceTokens
from .encoder import EncoderError, HiddenStates, PreparedSentence
from .filling import filter_candidates, INSTRUCTION_TEXT
from .encoder import MASK_TOKEN


def _require_transformers():
    try:
        import transformers
    except ImportError as exc:  # pragma: no cover - environment dependent
        raise EncoderError(
            "the pretrained backend needs the 'transformers' package (pip install lexedit[hf])"
        ) from exc
    return transformers


class PretrainedMlmEncoder:
    """Word-level adapter over a BERT-family encoder."""

    def __init__(self, model, tokenizer):
        if not getattr(tokenizer, "is_fast", False):
            raise EncoderError("the pretrained backend needs a fast tokenizer (word alignment)")
        self.model = model
        self.tokenizer = tokenizer
        self.model.eval()

    @classmethod
    def from_pretrained(cls, name_or_path: str) -> "PretrainedMlmEncoder":
        transformers = _require_transformers()
        model = transformers.AutoModel.from_pretrained(name_or_path)
        tokenizer = transformers.AutoTokenizer.from_pretrained(name_or_path, use_fast=True)
        return cls(model, tokenizer)

    @property
    def pad_id(self) -> int:
        return self.tokenizer.pad_token_id

    @property
    def max_len(self) -> int:
        return int(self.model.config.max_position_embeddings)

    def prepare(self, sentence: SentenceTokens) -> PreparedSentence:
        encoding = self.tokenizer(list(sentence.tokens), is_split_into_words=True,
                                  add_special_tokens=True)
        word_ids = encoding.word_ids()
        ids = encoding["input_ids"]
        if len(ids) > self.max_len:
            raise EncoderError(f"sequence of {len(ids)} subtokens exceeds model maximum {self.max_len}")
        row_word_index = tuple(-1 if w is None else w for w in word_ids)
        word_rows = []
        seen = set()
        for row, w in enumerate(row_word_index):
            if w >= 0 and w not in seen:
                seen.add(w)
                word_rows.append(row)
        if len(word_rows) != len(sentence):
            raise EncoderError("tokenizer dropped a word; cannot align word-level predictions")
        return PreparedSentence(ids=tuple(ids), row_word_index=row_word_index,
                                word_rows=tuple(word_rows))

    def embed(self, token_ids: torch.Tensor, keep_probs: torch.Tensor | None = None,
              type_ids: torch.Tensor | None = None) -> torch.Tensor:
        """Token/type/position embedding sum over subtoken ids, pre-normalization."""
        if token_ids.dim() != 2:
            raise EncoderError(f"token_ids must be [B, L], got {tuple(token_ids.shape)}")
        emb = self.model.embeddings
        tok = emb.word_embeddings(token_ids)
        if keep_probs is not None:
            if keep_probs.shape != token_ids.shape:
                raise EncoderError("keep_probs shape does not match token_ids")
            tok = tok * keep_probs.unsqueeze(-1)
        if type_ids is None:
            type_ids = torch.zeros_like(token_ids)
        B, L = token_ids.shape
        positions = torch.arange(L, device=token_ids.device).unsqueeze(0).expand(B, L)
        return tok + emb.token_type_embeddings(type_ids) + emb.position_embeddings(positions)

    def encode(self, embedded: torch.Tensor, padding_mask: torch.Tensor | None = None,
               train_mode: bool = False, need_attention: bool = False):
        emb = self.model.embeddings
        was_training = self.model.training
        self.model.train(train_mode)
        try:
            x = emb.dropout(emb.LayerNorm(embedded))
            if padding_mask is None:
                attention_mask = torch.ones(embedded.shape[:2], dtype=torch.long,
                                            device=embedded.device)
            else:
                attention_mask = (~padding_mask).long()
            extended = self.model.get_extended_attention_mask(attention_mask, embedded.shape[:2])
            outputs = self.model.encoder(x, attention_mask=extended,
                                         output_attentions=need_attention)
        finally:
            self.model.train(was_training)
        states = outputs.last_hidden_state
        if need_attention:
            attn = outputs.attentions[-1].mean(dim=1)  # head average, last layer
            return states, attn
        return states

    def _expand_keep(self, prepared: PreparedSentence, keep_probs) -> torch.Tensor:
        dtype = self.model.embeddings.word_embeddings.weight.dtype
        if isinstance(keep_probs, torch.Tensor):
            word_keep = keep_probs.to(dtype)
        else:
            word_keep = torch.tensor(list(keep_probs), dtype=dtype)
        n_words = max((w for w in prepared.row_word_index if w >= 0), default=-1) + 1
        if word_keep.shape != (n_words,):
            raise EncoderError(f"keep_probs must have length {n_words}")
        rows = []
        for w in prepared.row_word_index:
            rows.append(word_keep[w] if w >= 0 else torch.ones((), dtype=dtype))
        return torch.stack(rows).unsqueeze(0)

    def embed_sentence(self, sentence: SentenceTokens, keep_probs=None) -> torch.Tensor:
        prepared = self.prepare(sentence)
        ids = torch.tensor([prepared.ids], dtype=torch.long)
        expanded = None if keep_probs is None else self._expand_keep(prepared, keep_probs)
        return self.embed(ids, keep_probs=expanded)[0]

    def encode_sentence(self, sentence: SentenceTokens, keep_probs=None,
                        train_mode: bool = False) -> HiddenStates:
        embedded = self.embed_sentence(sentence, keep_probs=keep_probs).unsqueeze(0)
        states = self.encode(embedded, train_mode=train_mode)[0]
        return HiddenStates(states=states, sentence_rep=states[0])


class PretrainedMaskedLmFiller:
    """Cloze filling with a pretrained masked-LM over the paired prompt format."""

    def __init__(self, model, tokenizer):
        self.model = model
        self.tokenizer = tokenizer
        self.model.eval()
        self.trained = True

    @classmethod
    def from_pretrained(cls, name_or_path: str) -> "PretrainedMaskedLmFiller":
        transformers = _require_transformers()
        model = transformers.AutoModelForMaskedLM.from_pretrained(name_or_path)
        tokenizer = transformers.AutoTokenizer.from_pretrained(name_or_path, use_fast=True)
        return cls(model, tokenizer)

    def predict_for_pair(self, original: SentenceTokens, masked: SentenceTokens,
                         k: int = 10) -> list[list[tuple[str, float]]]:
        """Ranked, filtered candidates for each mask in the masked sentence."""
        mask_word_indices = [i for i, tok in enumerate(masked.tokens) if tok == MASK_TOKEN]
        if not mask_word_indices:
            return []
        text_a = original.text()
        text_b = INSTRUCTION_TEXT + " " + " ".join(
            self.tokenizer.mask_token if tok == MASK_TOKEN else tok for tok in masked.tokens
        )
        inputs = self.tokenizer(text_a, text_b, return_tensors="pt")
        with torch.no_grad():
            logits = self.model(**inputs).logits[0]
        mask_rows = (inputs["input_ids"][0] == self.tokenizer.mask_token_id).nonzero(as_tuple=True)[0]
        if len(mask_rows) != len(mask_word_indices):
            raise EncoderError("mask token count changed under subword tokenization")
        results = []
        for row, word_idx in zip(mask_rows.tolist(), mask_word_indices):
            probs = torch.softmax(logits[row], dim=-1)
            top = torch.topk(probs, min(10 * k, probs.shape[-1]))
            ranked = [
                (self.tokenizer.convert_ids_to_tokens(int(idx)), float(score))
                for score, idx in zip(top.values, top.indices)
            ]
            filtered = filter_candidates(ranked, original.tokens[word_idx])
            results.append(filtered[:k])
        return results
