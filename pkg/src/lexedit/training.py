"""Edit-predictor training against a frozen discriminator.

Three signals drive the predictor: a confusion loss (P_D - alpha)^2 pulling
the soft-masked sentence toward an unconfident style score, an invariance
loss 1 - cos(h1, h1_conf) preserving the sentence representation, and a
pseudo-label cross entropy distilled from a language-model oracle.  Their
weighted sum is optimized with Adam while the discriminator never moves.
"""

from __future__ import annotations

import copy
import json
import math
import random
from dataclasses import asdict, dataclass

import torch
from torch.nn import functional as F

from .corpus import SentenceTokens
from .discriminator import COMPLEX_CLASS, NotTrainedError, StyleDiscriminator
from .edit_predictor import EditPredictor, EditProbs, EditSequence, MASK, decode
from .llm_oracle import OracleCache, PseudoLabels, annotate
from .utils import TrainingError, pad_batch

_EPS = 1e-8
_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.lambda1 == self.lambda2 == self.lambda3 == 0:
            raise ValueError("at least one loss weight must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-5
    freeze_epochs: int = 4
    patience: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not 0 <= self.freeze_epochs < self.epochs:
            raise ValueError("freeze_epochs must be smaller than epochs")
        if self.patience < 1:
            raise ValueError("patience must be positive")


@dataclass
class TrainStepRecord:
    epoch: int
    step: int
    conf: float
    inv: float
    llm: float
    combined: float
    dev_metric: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def confusion_loss(p_complex, alpha):
    """(P_D - alpha)^2; zero exactly when the style score hits alpha."""
    return (p_complex - alpha) ** 2


def invariance_loss(h_orig: torch.Tensor, h_conf: torch.Tensor, eps: float = _EPS) -> torch.Tensor:
    """1 - cosine similarity along the last dimension.

    The denominator is sqrt(|x|^2 * |y|^2), clamped at eps^2 before the root
    so zero vectors stay finite; identical inputs give exactly 0, opposite
    inputs exactly 2.
    """
    num = (h_orig * h_conf).sum(dim=-1)
    sq = (h_orig * h_orig).sum(dim=-1) * (h_conf * h_conf).sum(dim=-1)
    den = torch.sqrt(sq.clamp_min(eps * eps))
    cos = (num / den).clamp(-1.0, 1.0)
    return 1.0 - cos


def llm_loss(probs: EditProbs, pseudo: EditSequence, align_mask) -> float:
    """Cross entropy of predicted edit probabilities against pseudo labels.

    Averaged over aligned tokens only; zero when nothing is aligned (such an
    instance contributes nothing).
    """
    if not (len(probs) == len(pseudo) == len(align_mask)):
        raise ValueError("probs, pseudo labels, and align_mask lengths differ")
    total = 0.0
    count = 0
    for p, label, aligned in zip(probs.p_keep, pseudo.labels, align_mask):
        if not aligned:
            continue
        target = (1.0 - p) if label == MASK else p
        total += -math.log(max(target, _PROB_FLOOR))
        count += 1
    if count == 0:
        return 0.0
    return total / count


def llm_loss_tensor(p_keep: torch.Tensor, mask_target: torch.Tensor, align: torch.Tensor) -> torch.Tensor:
    """Batched differentiable pseudo-label loss.

    p_keep [B, L] keep probabilities; mask_target [B, L] true where the pseudo
    label is M; align [B, L] true where the verdict applies.  Per sentence the
    aligned token losses are averaged; unaligned sentences contribute zero, and
    the batch value is the mean over sentences.
    """
    target_prob = torch.where(mask_target, 1.0 - p_keep, p_keep).clamp_min(_PROB_FLOOR)
    token_loss = -torch.log(target_prob) * align.to(target_prob.dtype)
    counts = align.sum(dim=-1)
    per_sentence = token_loss.sum(dim=-1) / counts.clamp_min(1)
    return per_sentence.mean()


def combined_loss(conf, inv, llm, weights: LossWeights):
    return weights.lambda1 * conf + weights.lambda2 * inv + weights.lambda3 * llm


@dataclass
class EditorTrainResult:
    predictor: EditPredictor
    records: list[TrainStepRecord]
    best_dev_f1: float
    checksum: str


def _pseudo_target_tensors(batch_pseudo: list[PseudoLabels], width: int):
    B = len(batch_pseudo)
    mask_target = torch.zeros(B, width, dtype=torch.bool)
    align = torch.zeros(B, width, dtype=torch.bool)
    for i, pl in enumerate(batch_pseudo):
        for j, (label, aligned) in enumerate(zip(pl.labels.labels, pl.align_mask)):
            mask_target[i, j] = label == MASK
            align[i, j] = aligned
    return mask_target, align


def _dev_pseudo_f1(predictor: EditPredictor, dev: list[tuple[SentenceTokens, PseudoLabels]],
                   threshold: float = 0.5) -> float:
    """Macro CWI F1 of decoded predictions against pseudo labels on the dev slice."""
    from .evaluation import cwi_metrics

    preds, gold = [], []
    for sentence, pseudo in dev:
        if pseudo.aligned_count() == 0:
            continue
        probs = predictor.predict_probs(sentence)
        edits = decode(probs, threshold=threshold, tokens=sentence.tokens)
        preds.append(set(edits.mask_positions()))
        gold.append({i for i, lab in enumerate(pseudo.labels.labels) if lab == MASK})
    if not preds:
        return 0.0
    return cwi_metrics(preds, gold).f1


def train_editor(
    predictor: EditPredictor,
    discriminator: StyleDiscriminator,
    sentences: list[SentenceTokens],
    oracle,
    cache: OracleCache | None = None,
    *,
    weights: LossWeights,
    schedule: TrainSchedule,
    dev_fraction: float = 0.1,
    decode_threshold: float = 0.5,
    retries: int = 3,
    log_path=None,
) -> EditorTrainResult:
    """Train the edit predictor on complex-side sentences only.

    Pseudo labels are fetched once up front (cache first).  Every step routes
    the predictor's keep probabilities through the frozen discriminator as a
    soft mask, combines the three losses, and updates predictor parameters
    only; the predictor's encoder stays frozen for the first freeze_epochs.
    Early stopping watches dev F1 against pseudo labels.  The discriminator
    checksum must be identical before and after.
    """
    if not discriminator.trained:
        raise NotTrainedError("discriminator must be pretrained before editor training")
    if predictor.vocab.to_list() != discriminator.vocab.to_list():
        raise TrainingError("predictor and discriminator vocabularies differ")
    checksum_before = discriminator.freeze_checksum()
    for param in discriminator.parameters():
        param.requires_grad_(False)
    discriminator.eval()

    pseudo = annotate(sentences, oracle, cache, retries=retries)
    pairs = list(zip(sentences, pseudo))
    rng = random.Random(schedule.seed)
    order = list(range(len(pairs)))
    rng.shuffle(order)
    n_dev = max(1, int(len(pairs) * dev_fraction))
    if n_dev >= len(pairs):
        raise TrainingError(f"not enough sentences ({len(pairs)}) for a dev slice")
    dev_pairs = [pairs[i] for i in order[:n_dev]]
    train_pairs = [pairs[i] for i in order[n_dev:]]

    optimizer = torch.optim.Adam(predictor.parameters(), lr=schedule.learning_rate)
    torch.manual_seed(schedule.seed)
    pad_id = predictor.encoder.pad_id

    records: list[TrainStepRecord] = []
    best_f1 = -1.0
    best_state = None
    bad_epochs = 0
    step = 0

    for epoch in range(schedule.epochs):
        frozen = epoch < schedule.freeze_epochs
        for param in predictor.encoder.parameters():
            param.requires_grad_(not frozen)
        epoch_order = rng.sample(range(len(train_pairs)), len(train_pairs))
        predictor.train()
        for start in range(0, len(epoch_order), schedule.batch_size):
            batch = [train_pairs[i] for i in epoch_order[start : start + schedule.batch_size]]
            batch_sentences = [s for s, _ in batch]
            batch_pseudo = [p for _, p in batch]
            prepared = [predictor.encoder.prepare(s) for s in batch_sentences]
            ids, pad_mask = pad_batch([list(p.ids) for p in prepared], pad_id)

            p_keep = predictor.keep_probs_batch(ids, padding_mask=pad_mask, train_mode=True)
            # Start marker and padding rows never get soft-masked.
            pinned = torch.zeros_like(p_keep, dtype=torch.bool)
            pinned[:, 0] = True
            pinned |= pad_mask
            keep_for_disc = torch.where(pinned, torch.ones_like(p_keep), p_keep)

            with torch.no_grad():
                plain = discriminator.encoder.embed(ids)
                _, h_orig = discriminator.forward_embedded(plain, padding_mask=pad_mask)
            soft = discriminator.encoder.embed(ids, keep_probs=keep_for_disc)
            logits_d, h_conf = discriminator.forward_embedded(soft, padding_mask=pad_mask)
            p_complex = F.softmax(logits_d, dim=-1)[:, COMPLEX_CLASS]

            conf = confusion_loss(p_complex, weights.alpha).mean()
            inv = invariance_loss(h_orig, h_conf).mean()
            content = p_keep[:, 1:]
            width = content.shape[1]
            mask_target, align = _pseudo_target_tensors(batch_pseudo, width)
            llm = llm_loss_tensor(content, mask_target, align)
            total = combined_loss(conf, inv, llm, weights)
            if not torch.isfinite(total):
                dump = " | ".join(s.text() for s in batch_sentences[:8])
                raise TrainingError(f"non-finite loss at epoch {epoch} step {step}; batch: {dump}")

            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            records.append(
                TrainStepRecord(
                    epoch=epoch, step=step,
                    conf=float(conf.detach()), inv=float(inv.detach()),
                    llm=float(llm.detach()), combined=float(total.detach()),
                )
            )
            step += 1

        predictor.eval()
        dev_f1 = _dev_pseudo_f1(predictor, dev_pairs, threshold=decode_threshold)
        records.append(
            TrainStepRecord(
                epoch=epoch, step=step,
                conf=float("nan"), inv=float("nan"), llm=float("nan"), combined=float("nan"),
                dev_metric=dev_f1,
            )
        )
        if dev_f1 > best_f1:
            best_f1 = dev_f1
            best_state = copy.deepcopy(predictor.state_dict())
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= schedule.patience:
                break

    if best_state is not None:
        predictor.load_state_dict(best_state)
    predictor.eval()
    for param in predictor.parameters():
        param.requires_grad_(True)

    checksum_after = discriminator.freeze_checksum()
    if checksum_after != checksum_before:
        raise TrainingError("frozen discriminator parameters drifted during editor training")

    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record.as_dict()) + "\n")

    return EditorTrainResult(
        predictor=predictor, records=records, best_dev_f1=best_f1, checksum=checksum_after
    )
