"""Non-parallel style corpora, annotated test sets, and a synthetic toy world.

Corpora are two pools of sentences, one complex-styled and one simple-styled,
with no alignment between them.  Annotated instances carry a gold complex-word
position and a rank-ordered substitution list, in a single TSV per dataset.
The toy world plants complex/simple synonym pairs into shared sentence frames
so the whole pipeline can be exercised and scored at desk scale.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)


class CorpusError(Exception):
    """Missing, empty, or structurally invalid corpus data."""


def tokenize(text: str) -> tuple[str, ...]:
    """Canonical token unit: lowercase, whitespace-separated words."""
    return tuple(text.strip().lower().split())


@dataclass(frozen=True)
class SentenceTokens:
    """Word-level token sequence; a sentence-start marker is implicit."""

    tokens: tuple[str, ...]
    has_cls: bool = True

    def __post_init__(self):
        if not isinstance(self.tokens, tuple):
            object.__setattr__(self, "tokens", tuple(self.tokens))
        if len(self.tokens) < 1:
            raise CorpusError("a sentence needs at least one token")
        if any(tok == "" for tok in self.tokens):
            raise CorpusError("empty token in sentence")

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class NonParallelCorpus:
    """Two unaligned sentence pools: complex-styled and simple-styled."""

    complex_sentences: tuple[SentenceTokens, ...]
    simple_sentences: tuple[SentenceTokens, ...]

    def __post_init__(self):
        for name in ("complex_sentences", "simple_sentences"):
            value = getattr(self, name)
            if not isinstance(value, tuple):
                object.__setattr__(self, name, tuple(value))
        if not self.complex_sentences or not self.simple_sentences:
            raise CorpusError("both corpus sides must be non-empty")

    def sizes(self) -> tuple[int, int]:
        return len(self.complex_sentences), len(self.simple_sentences)


@dataclass(frozen=True)
class AnnotatedInstance:
    """Test sentence with one gold complex position and ranked substitutions."""

    sentence: SentenceTokens
    complex_index: int
    gold_substitutions: tuple[str, ...]

    def __post_init__(self):
        if not isinstance(self.gold_substitutions, tuple):
            object.__setattr__(self, "gold_substitutions", tuple(self.gold_substitutions))
        if not 0 <= self.complex_index < len(self.sentence):
            raise CorpusError(
                f"complex_index {self.complex_index} out of range for "
                f"{len(self.sentence)}-token sentence"
            )
        if not self.gold_substitutions:
            raise CorpusError("gold_substitutions must be non-empty")
        for word in self.gold_substitutions:
            if not word or word != word.lower() or " " in word:
                raise CorpusError(f"gold substitution {word!r} is not a single lowercase word")

    @property
    def complex_word(self) -> str:
        return self.sentence.tokens[self.complex_index]


def _read_sentence_file(path: str | Path) -> tuple[SentenceTokens, ...]:
    p = Path(path)
    if not p.exists():
        raise CorpusError(f"corpus file not found: {p}")
    sentences: list[SentenceTokens] = []
    skipped = 0
    with open(p, "rb") as fh:
        for raw in fh:
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                skipped += 1
                continue
            tokens = tokenize(line)
            if not tokens:
                skipped += 1
                continue
            sentences.append(SentenceTokens(tokens))
    if skipped:
        logger.warning("skipped %d blank or undecodable lines in %s", skipped, p)
    if not sentences:
        raise CorpusError(f"no usable sentences in {p}")
    return tuple(sentences)


def load_nonparallel(complex_path: str | Path, simple_path: str | Path) -> NonParallelCorpus:
    """Load one sentence per line from the two style files."""
    return NonParallelCorpus(
        complex_sentences=_read_sentence_file(complex_path),
        simple_sentences=_read_sentence_file(simple_path),
    )


def save_nonparallel(corpus: NonParallelCorpus, complex_path: str | Path, simple_path: str | Path) -> None:
    """Write the corpus back as plain text, one sentence per line."""
    for path, side in ((complex_path, corpus.complex_sentences), (simple_path, corpus.simple_sentences)):
        with open(path, "w", encoding="utf-8") as fh:
            for sent in side:
                fh.write(sent.text() + "\n")


def load_annotated(path: str | Path) -> list[AnnotatedInstance]:
    """Parse an annotated TSV: sentence, complex_index, complex_word, rank:word columns."""
    p = Path(path)
    if not p.exists():
        raise CorpusError(f"annotated file not found: {p}")
    instances: list[AnnotatedInstance] = []
    with open(p, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            cols = line.rstrip("\n").split("\t")
            if len(cols) < 4:
                raise CorpusError(f"{p}:{lineno}: expected at least 4 tab-separated columns")
            sentence = SentenceTokens(tokenize(cols[0]))
            try:
                index = int(cols[1])
            except ValueError:
                raise CorpusError(f"{p}:{lineno}: complex_index {cols[1]!r} is not an integer")
            if not 0 <= index < len(sentence):
                raise CorpusError(f"{p}:{lineno}: complex_index {index} out of range")
            stated = cols[2].strip().lower()
            if sentence.tokens[index] != stated:
                raise CorpusError(
                    f"{p}:{lineno}: token at index {index} is "
                    f"{sentence.tokens[index]!r}, not the stated complex word {stated!r}"
                )
            ranked: list[tuple[int, str]] = []
            for col in cols[3:]:
                col = col.strip()
                if not col:
                    continue
                rank_str, sep, word = col.partition(":")
                if not sep or not word:
                    raise CorpusError(f"{p}:{lineno}: malformed substitution column {col!r}")
                try:
                    rank = int(rank_str)
                except ValueError:
                    raise CorpusError(f"{p}:{lineno}: malformed rank in column {col!r}")
                ranked.append((rank, word.strip().lower()))
            ranked.sort(key=lambda rw: rw[0])
            instances.append(
                AnnotatedInstance(
                    sentence=sentence,
                    complex_index=index,
                    gold_substitutions=tuple(word for _, word in ranked),
                )
            )
    if not instances:
        raise CorpusError(f"no usable instances in {p}")
    return instances


def save_annotated(instances: list[AnnotatedInstance], path: str | Path) -> None:
    """Serialize annotated instances to the TSV format understood by load_annotated."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            subs = "\t".join(f"{rank}:{word}" for rank, word in enumerate(inst.gold_substitutions, start=1))
            fh.write(f"{inst.sentence.text()}\t{inst.complex_index}\t{inst.complex_word}\t{subs}\n")


def split_dev(
    corpus: NonParallelCorpus, fraction: float, seed: int
) -> tuple[NonParallelCorpus, NonParallelCorpus]:
    """Deterministically split both sides into train/dev partitions."""
    if not 0.0 < fraction < 1.0:
        raise CorpusError(f"dev fraction must be in (0, 1), got {fraction}")
    rng = random.Random(seed)

    def split_side(side: tuple[SentenceTokens, ...]) -> tuple[list, list]:
        n = len(side)
        n_dev = int(n * fraction + 1e-9)
        if n_dev < 1 or n_dev >= n:
            raise CorpusError(f"cannot hold out {n_dev} of {n} sentences at fraction {fraction}")
        order = list(range(n))
        rng.shuffle(order)
        dev_idx = set(order[:n_dev])
        train = [side[i] for i in range(n) if i not in dev_idx]
        dev = [side[i] for i in range(n) if i in dev_idx]
        return train, dev

    cx_train, cx_dev = split_side(corpus.complex_sentences)
    sp_train, sp_dev = split_side(corpus.simple_sentences)
    return (
        NonParallelCorpus(tuple(cx_train), tuple(sp_train)),
        NonParallelCorpus(tuple(cx_dev), tuple(sp_dev)),
    )


# ---------------------------------------------------------------------------
# Synthetic toy world
# ---------------------------------------------------------------------------

LEXICON_SLOT = "_"
REGISTER_SLOT = "~"

DEFAULT_COMPLEX_MARKERS = (
    "moreover", "consequently", "nevertheless", "furthermore", "accordingly", "subsequently",
)
DEFAULT_SIMPLE_MARKERS = ("so", "and", "but", "also", "then", "now")


@dataclass(frozen=True)
class ToyWorldSpec:
    """Recipe for a planted-synonym world.

    Templates are whitespace skeletons with exactly one lexicon slot "_" and
    optional register slots "~".  Complex sentences fill "_" with a lexicon key
    and "~" with a complex-register marker; simple sentences use the mapped
    synonym and a simple-register marker in the identical slots.  Register
    markers are style signal that is deliberately NOT part of the gold complex
    words, so purely adversarial training has something to over-mask.
    """

    vocab_size: int
    complex_lexicon: dict[str, str]
    templates: tuple[str, ...]
    seed: int
    sentences_per_side: int = 2000
    annotated_count: int = 200
    complex_markers: tuple[str, ...] = DEFAULT_COMPLEX_MARKERS
    simple_markers: tuple[str, ...] = DEFAULT_SIMPLE_MARKERS
    pair_weights: tuple[float, ...] | None = None
    oracle_distractors: tuple[str, ...] = ()
    oracle_blind: tuple[str, ...] = ()
    style_noise: float = 0.0
    slot_mix: float = 1.0

    def __post_init__(self):
        if not isinstance(self.templates, tuple):
            object.__setattr__(self, "templates", tuple(self.templates))
        if not self.complex_lexicon:
            raise CorpusError("complex_lexicon must be non-empty")
        complex_words = set(self.complex_lexicon)
        simple_words = set(self.complex_lexicon.values())
        if complex_words & simple_words:
            raise CorpusError("complex and simple word sets must be disjoint")
        markers = set(self.complex_markers) | set(self.simple_markers)
        if markers & (complex_words | simple_words):
            raise CorpusError("register markers must be disjoint from the lexicon")
        if set(self.oracle_distractors) & (complex_words | simple_words):
            raise CorpusError("oracle distractors must be disjoint from the lexicon")
        if not set(self.oracle_blind) <= complex_words:
            raise CorpusError("oracle blind spots must be complex lexicon words")
        if not 0.0 <= self.style_noise < 0.5:
            raise CorpusError(f"style_noise must be in [0, 0.5), got {self.style_noise}")
        if not 0.0 < self.slot_mix <= 1.0:
            raise CorpusError(f"slot_mix must be in (0, 1], got {self.slot_mix}")
        if not self.templates:
            raise CorpusError("at least one template is required")
        for tmpl in self.templates:
            if tmpl.split().count(LEXICON_SLOT) != 1:
                raise CorpusError(f"template {tmpl!r} must contain exactly one {LEXICON_SLOT!r} slot")
        if self.pair_weights is not None:
            if len(self.pair_weights) != len(self.complex_lexicon):
                raise CorpusError("pair_weights must have one entry per lexicon pair")
            if min(self.pair_weights) <= 0:
                raise CorpusError("pair_weights must be positive")
        if self.sentences_per_side < 1 or self.annotated_count < 1:
            raise CorpusError("sentences_per_side and annotated_count must be positive")
        if self.vocab_size < len(self.world_vocabulary()):
            raise CorpusError(
                f"vocab_size {self.vocab_size} is smaller than the "
                f"{len(self.world_vocabulary())} distinct words this world uses"
            )

    def oracle_lexicon(self) -> set[str]:
        """What the mock language model believes is complex.

        The true planted words minus its blind spots, plus the load-bearing
        distractor words it over-flags; gold annotations are unaffected.
        """
        return (set(self.complex_lexicon) - set(self.oracle_blind)) | set(self.oracle_distractors)

    def world_vocabulary(self) -> set[str]:
        words: set[str] = set(self.complex_lexicon) | set(self.complex_lexicon.values())
        words |= set(self.complex_markers) | set(self.simple_markers)
        for tmpl in self.templates:
            words |= {t for t in tmpl.split() if t not in (LEXICON_SLOT, REGISTER_SLOT)}
        return words


def _templates_for_pair(spec: ToyWorldSpec, pair_index: int, n_pairs: int) -> tuple[str, ...]:
    # Deterministic round-robin so each synonym pair keeps its own frames;
    # frames are shared across pairs only when there are fewer templates than pairs.
    owned = spec.templates[pair_index::n_pairs]
    if owned:
        return owned
    return (spec.templates[pair_index % len(spec.templates)],)


def _instantiate(template: str, slot_word: str, markers: tuple[str, ...], rng: random.Random) -> tuple[tuple[str, ...], int]:
    tokens: list[str] = []
    slot_index = -1
    for part in template.split():
        if part == LEXICON_SLOT:
            slot_index = len(tokens)
            tokens.append(slot_word)
        elif part == REGISTER_SLOT:
            tokens.append(rng.choice(markers))
        else:
            tokens.append(part)
    return tuple(tokens), slot_index


def _draw_sentence(
    spec: ToyWorldSpec,
    pairs: list[tuple[str, str]],
    complex_side: bool,
    rng: random.Random,
    weighted: bool = True,
) -> tuple[tuple[str, ...], int, str]:
    if weighted and spec.pair_weights is not None:
        pair_index = rng.choices(range(len(pairs)), weights=spec.pair_weights, k=1)[0]
    else:
        pair_index = rng.randrange(len(pairs))
    complex_word, simple_word = pairs[pair_index]
    template = rng.choice(_templates_for_pair(spec, pair_index, len(pairs)))
    if complex_side:
        # Complex-style text keeps its register markers but does not always
        # pick the hard synonym; slot_mix < 1 removes the positional shortcut
        # that the slot always holds a complex word.
        word = complex_word
        if weighted and spec.slot_mix < 1.0 and rng.random() >= spec.slot_mix:
            word = simple_word
        tokens, slot = _instantiate(template, word, spec.complex_markers, rng)
    else:
        tokens, slot = _instantiate(template, simple_word, spec.simple_markers, rng)
    return tokens, slot, simple_word


def generate_toy_corpus(spec: ToyWorldSpec) -> tuple[NonParallelCorpus, list[AnnotatedInstance]]:
    """Generate the non-parallel corpus and held-out annotated instances.

    Sides are drawn independently (same frames, different RNG streams) so no
    sentence-level alignment exists.  Corpus draws honor pair_weights; the
    annotated instances sample pairs uniformly so rare pairs are represented.
    Each instance's gold substitution is the planted synonym.
    """
    pairs = list(spec.complex_lexicon.items())
    base = random.Random(spec.seed)
    rng_complex = random.Random(base.randrange(2**32))
    rng_simple = random.Random(base.randrange(2**32))
    rng_annot = random.Random(base.randrange(2**32))

    def draw_side(complex_side: bool, rng: random.Random) -> list[SentenceTokens]:
        side = []
        for _ in range(spec.sentences_per_side):
            # A small style_noise fraction of each side is drawn from the other
            # style, keeping the two pools statistically overlapping the way
            # real scraped corpora are.
            actual_side = complex_side
            if spec.style_noise and rng.random() < spec.style_noise:
                actual_side = not complex_side
            tokens, _, _ = _draw_sentence(spec, pairs, complex_side=actual_side, rng=rng)
            side.append(SentenceTokens(tokens))
        return side

    complex_sents = draw_side(True, rng_complex)
    simple_sents = draw_side(False, rng_simple)

    annotated = []
    for _ in range(spec.annotated_count):
        tokens, slot, synonym = _draw_sentence(
            spec, pairs, complex_side=True, rng=rng_annot, weighted=False
        )
        annotated.append(
            AnnotatedInstance(
                sentence=SentenceTokens(tokens),
                complex_index=slot,
                gold_substitutions=(synonym,),
            )
        )
    corpus = NonParallelCorpus(tuple(complex_sents), tuple(simple_sents))
    return corpus, annotated


_TOY_PAIRS = (
    ("utilize", "use"), ("commence", "begin"), ("terminate", "end"),
    ("endeavor", "aim"), ("acquire", "get"), ("construct", "build"),
    ("demonstrate", "show"), ("inquire", "ask"), ("observe", "watch"),
    ("consume", "eat"), ("fabricate", "make"), ("comprehend", "grasp"),
    ("purchase", "buy"), ("reside", "live"), ("depart", "leave"),
    ("obtain", "take"), ("assist", "help"), ("require", "need"),
    ("examine", "check"), ("locate", "find"), ("maintain", "keep"),
    ("inform", "tell"), ("select", "pick"), ("attempt", "try"),
    ("modify", "change"), ("respond", "answer"), ("permit", "allow"),
    ("relinquish", "drop"), ("contemplate", "think"), ("accelerate", "speed"),
)

_TOY_SUBJECTS = ("we", "they", "you", "workers", "students", "farmers", "doctors", "pilots", "writers", "miners")
_TOY_NOUNS = (
    "tool", "plan", "door", "song", "road", "bridge", "garden", "engine", "letter", "market",
    "boat", "field", "school", "house", "river", "paper", "stone", "wheel", "lamp", "table",
    "box", "rope", "wall", "path", "gate", "clock", "shirt", "glass", "knife", "barrel",
    "cart", "bell", "coin", "drum", "flag", "horn", "jar", "kite", "ladder", "mirror",
    "net", "oven", "pipe", "quilt", "rug", "saw", "tent", "urn", "vase", "wagon",
    "anchor", "basket", "candle", "dish", "easel", "fence", "grill", "hammer", "iron", "jug",
)
_TOY_TAILS = ("today", "tomorrow", "quietly", "quickly", "together", "again", "soon", "now", "later", "often")
_TOY_AUXES = ("will", "may", "must", "can", "should")
_TOY_PLACES = (
    "station", "harbor", "meadow", "village", "tower", "plaza",
    "cavern", "valley", "island", "castle", "bakery", "forest",
)
_TOY_NEUTRAL_VERBS = ("rest", "stand", "wait", "gather", "sit", "walk", "linger", "pause", "stroll", "stay")

# Load-bearing hard nouns: they appear in identical frames on both corpus
# sides (so they carry no style signal and are never gold), but a naive
# word-difficulty judge flags them as complex.
_TOY_FANCY_NOUNS = (
    "apparatus", "mechanism", "phenomenon", "laboratory", "committee",
    "territory", "literature", "ceremony", "equipment", "machinery",
    "infrastructure", "configuration", "architecture", "manuscript", "periphery",
    "trajectory", "hypothesis", "curriculum", "repository", "observatory",
)


def default_toy_spec(
    seed: int = 13,
    sentences_per_side: int = 2000,
    annotated_count: int = 200,
    n_pairs: int = 30,
    variants_per_pair: int = 60,
    fancy_pairs: int = 6,
    blind_pairs: int = 5,
    rare_pairs: int = 4,
    rare_weight: float = 0.05,
    style_noise: float = 0.03,
    slot_mix: float = 0.75,
) -> ToyWorldSpec:
    """The stock toy world.

    Each synonym pair owns two anchor nouns and many frame variants built from
    shared subjects, auxiliaries, places, and tails, so frames identify the
    pair (the cloze model can tell which synonym belongs in a slot) while the
    sentence space is large enough that oracle flip noise never repeats
    systematically between train and test.  Every frame carries one register
    slot and every second frame a further one, so the complex style is spread
    over the planted word plus one or two side-specific markers; that gives
    unchecked adversarial pressure something to over-mask.

    Additional imperfections keep the distilled signal from solving the world
    on its own: the first fancy_pairs pairs anchor on hard load-bearing nouns
    the mock oracle over-flags, optional blind_pairs planted words are missing
    from the oracle's lexicon entirely, and the last rare_pairs pairs are
    downweighted in corpus draws (but not in the annotated set).  style_noise
    cross-contaminates the two sides so the style classifier cannot become
    perfectly confident.
    """
    if not 1 <= n_pairs <= len(_TOY_PAIRS):
        raise CorpusError(f"n_pairs must be in [1, {len(_TOY_PAIRS)}]")
    if variants_per_pair < 1:
        raise CorpusError("variants_per_pair must be positive")
    if fancy_pairs < 0 or 2 * fancy_pairs > len(_TOY_FANCY_NOUNS):
        raise CorpusError(f"fancy_pairs must be in [0, {len(_TOY_FANCY_NOUNS) // 2}]")
    if blind_pairs < 0 or rare_pairs < 0 or fancy_pairs + blind_pairs + rare_pairs > n_pairs:
        raise CorpusError("fancy_pairs + blind_pairs + rare_pairs must not exceed n_pairs")
    pairs = _TOY_PAIRS[:n_pairs]
    # Template index v * n_pairs + j belongs to pair j (round-robin ownership).
    # The (marker, subject, aux/place/tail) combination is injective in v for
    # a fixed pair, so every variant is a distinct frame string.
    templates = []
    used_fancy = set()
    for v in range(variants_per_pair):
        for j in range(n_pairs):
            double_marked = v % 2 == 0
            w = v // 2
            subj = _TOY_SUBJECTS[w % len(_TOY_SUBJECTS)]
            decade = w // len(_TOY_SUBJECTS)
            aux = _TOY_AUXES[(decade + j) % len(_TOY_AUXES)]
            place = _TOY_PLACES[(w * 3 + j) % len(_TOY_PLACES)]
            tail = _TOY_TAILS[(decade + w * 7 + j) % len(_TOY_TAILS)]
            subj2 = _TOY_SUBJECTS[(w + 3 + j) % len(_TOY_SUBJECTS)]
            verb = _TOY_NEUTRAL_VERBS[(w + decade + j) % len(_TOY_NEUTRAL_VERBS)]
            place2 = _TOY_PLACES[(w * 5 + j + 7) % len(_TOY_PLACES)]
            tail2 = _TOY_TAILS[(w + j) % len(_TOY_TAILS)]
            if j < fancy_pairs:
                noun = _TOY_FANCY_NOUNS[2 * j if w % 2 == 0 else 2 * j + 1]
                used_fancy.add(noun)
            else:
                noun = _TOY_NOUNS[j if w % 2 == 0 else (j + n_pairs) % len(_TOY_NOUNS)]
            frame = (
                f"~ {subj} {aux} _ the {noun} by the {place} {tail} "
                f"while the {subj2} {verb} near the {place2} {tail2}"
            )
            templates.append(f"{frame} ~" if double_marked else frame)
    weights = None
    if rare_pairs:
        weights = tuple(
            rare_weight if j >= n_pairs - rare_pairs else 1.0 for j in range(n_pairs)
        )
    # Blind pairs come right after the fancy ones: common in the corpus (the
    # discriminator knows them well) but absent from the oracle's lexicon.
    blind = tuple(pairs[j][0] for j in range(fancy_pairs, fancy_pairs + blind_pairs))
    return ToyWorldSpec(
        vocab_size=256,
        complex_lexicon=dict(pairs),
        templates=tuple(templates),
        seed=seed,
        sentences_per_side=sentences_per_side,
        annotated_count=annotated_count,
        pair_weights=weights,
        oracle_distractors=tuple(sorted(used_fancy)),
        oracle_blind=blind,
        style_noise=style_noise,
        slot_mix=slot_mix,
    )


def load_toy_spec(path: str | Path) -> ToyWorldSpec:
    """Read a toy-world config file (YAML mapping with lexicon as complex=simple pairs)."""
    import yaml

    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise CorpusError(f"toy spec {path} must be a mapping")
    required = {"vocab_size", "lexicon", "templates", "seed"}
    missing = required - set(data)
    if missing:
        raise CorpusError(f"toy spec {path} is missing keys: {sorted(missing)}")
    lexicon: dict[str, str] = {}
    for entry in data["lexicon"]:
        left, sep, right = str(entry).partition("=")
        if not sep or not left.strip() or not right.strip():
            raise CorpusError(f"lexicon entry {entry!r} is not of the form complex=simple")
        lexicon[left.strip().lower()] = right.strip().lower()
    kwargs = {}
    for key in ("sentences_per_side", "annotated_count"):
        if key in data:
            kwargs[key] = int(data[key])
    for key in ("complex_markers", "simple_markers"):
        if key in data:
            kwargs[key] = tuple(str(w).lower() for w in data[key])
    return ToyWorldSpec(
        vocab_size=int(data["vocab_size"]),
        complex_lexicon=lexicon,
        templates=tuple(str(t) for t in data["templates"]),
        seed=int(data["seed"]),
        **kwargs,
    )
