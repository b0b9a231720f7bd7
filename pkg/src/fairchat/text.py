"""Tokenization, lexicons, vocabulary, gender detection/swapping, and BoW features."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

_CLITIC_PAD = [
    (re.compile(r"n't\b"), " n't"),
    (re.compile(r"'(s|m|re|ve|ll|d)\b"), r" '\1"),
]
_TOKEN_RE = re.compile(r"n't|'(?:s|m|re|ve|ll|d)|\w+|[^\w\s]")


@dataclass(frozen=True)
class Utterance:
    raw: str
    tokens: tuple[str, ...]

    def __len__(self):
        return len(self.tokens)

    @staticmethod
    def from_tokens(tokens):
        """Build an utterance whose raw form is the space-joined tokens."""
        return Utterance(raw=" ".join(tokens), tokens=tuple(tokens))


def tokenize(raw: str) -> Utterance:
    """Lowercase, split on whitespace, and separate punctuation and clitics.

    Clitics ('s, 'm, n't, 're, 've, 'll, 'd) and punctuation marks become
    their own tokens.  Deterministic; empty input yields no tokens.
    """
    text = raw.lower()
    for pattern, repl in _CLITIC_PAD:
        text = pattern.sub(repl, text)
    return Utterance(raw=raw, tokens=tuple(_TOKEN_RE.findall(text)))


class GenderLabel(str, Enum):
    MALE = "male"
    FEMALE = "female"
    NEUTRAL = "neutral"
    MIXED = "mixed"


@dataclass
class GenderLexicon:
    """Paired male/female words plus unpaired extras.

    The swap mapping built from ``pairs`` is a bijection; ``extra_*`` words
    count for gender detection but have no counterpart.
    """

    pairs: list[tuple[str, str]]
    extra_male: set[str] = field(default_factory=set)
    extra_female: set[str] = field(default_factory=set)

    def __post_init__(self):
        males = [m for m, _ in self.pairs] + sorted(self.extra_male)
        females = [f for _, f in self.pairs] + sorted(self.extra_female)
        seen = set()
        for word in males + females:
            if word in seen:
                raise ValueError(f"gender lexicon word {word!r} appears more than once")
            seen.add(word)
        self._male = set(males)
        self._female = set(females)
        self._swap = {}
        for m, f in self.pairs:
            self._swap[m] = f
            self._swap[f] = m

    @property
    def male_words(self):
        return self._male

    @property
    def female_words(self):
        return self._female

    def counterpart(self, token):
        return self._swap.get(token)

    def is_gendered(self, token):
        return token in self._male or token in self._female


@dataclass
class AttributeLexicons:
    stopwords: set[str]
    career: set[str]
    family: set[str]
    offense: set[str]
    positive: set[str]
    negative: set[str]

    def __post_init__(self):
        if self.career & self.family:
            raise ValueError(f"career/family lexicons overlap: {sorted(self.career & self.family)}")
        if self.positive & self.negative:
            raise ValueError(
                f"positive/negative lexicons overlap: {sorted(self.positive & self.negative)}"
            )


def detect_gender(u: Utterance, lex: GenderLexicon) -> GenderLabel:
    """male/female if words of exactly one gender occur, mixed if both, else neutral."""
    has_male = any(t in lex.male_words for t in u.tokens)
    has_female = any(t in lex.female_words for t in u.tokens)
    if has_male and has_female:
        return GenderLabel.MIXED
    if has_male:
        return GenderLabel.MALE
    if has_female:
        return GenderLabel.FEMALE
    return GenderLabel.NEUTRAL


def swap_gender(u: Utterance, lex: GenderLexicon):
    """Replace every paired gender word by its counterpart.

    Unpaired gender words (extras) are left as-is and reported in the warning
    list.  Applying the swap twice restores the original token sequence.
    Returns (swapped_utterance, warnings).
    """
    out, warnings = [], []
    for token in u.tokens:
        counterpart = lex.counterpart(token)
        if counterpart is not None:
            out.append(counterpart)
        else:
            if lex.is_gendered(token):
                warnings.append(token)
            out.append(token)
    return Utterance.from_tokens(out), warnings


PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
_SPECIALS = (PAD, BOS, EOS, UNK)


class Vocabulary:
    """Frequency-ordered token table with pad/bos/eos/unk specials."""

    def __init__(self, tokens):
        self.id_to_token = list(_SPECIALS) + [t for t in tokens if t not in _SPECIALS]
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")
        self.pad_id = self.token_to_id[PAD]
        self.bos_id = self.token_to_id[BOS]
        self.eos_id = self.token_to_id[EOS]
        self.unk_id = self.token_to_id[UNK]

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def encode(self, tokens):
        return [self.token_to_id.get(t, self.unk_id) for t in tokens]

    def decode(self, ids, strip_special=True):
        toks = [self.id_to_token[i] for i in ids]
        if strip_special:
            toks = [t for t in toks if t not in _SPECIALS]
        return toks

    def to_json(self):
        return {"tokens": self.id_to_token[len(_SPECIALS) :]}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["tokens"])


def build_vocabulary(corpus, max_size) -> Vocabulary:
    """Most frequent tokens up to max_size - 4, ties broken by first occurrence."""
    if max_size < len(_SPECIALS):
        raise ValueError(f"max_size must be at least {len(_SPECIALS)}")
    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    position = 0
    for u in corpus:
        for token in u.tokens:
            counts[token] = counts.get(token, 0) + 1
            if token not in first_seen:
                first_seen[token] = position
                position += 1
    ordered = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    return Vocabulary(ordered[: max_size - len(_SPECIALS)])


@dataclass
class BowVector:
    """Sparse normalized bag-of-words over the vocabulary (stopwords and
    gender words removed, out-of-vocabulary tokens folded into unk)."""

    entries: dict[int, float]
    length: int

    @property
    def is_empty(self):
        return not self.entries

    def to_dense(self):
        dense = np.zeros(self.length)
        for idx, val in self.entries.items():
            dense[idx] = val
        return dense


def bow_features(
    u: Utterance, lex: AttributeLexicons, glex: GenderLexicon, vocab: Vocabulary
) -> BowVector:
    """count(w)/L over tokens surviving stopword and gender-word removal."""
    kept = [t for t in u.tokens if t not in lex.stopwords and not glex.is_gendered(t)]
    if not kept:
        return BowVector(entries={}, length=len(vocab))
    weight = 1.0 / len(kept)
    entries: dict[int, float] = {}
    for token in kept:
        idx = vocab.token_to_id.get(token, vocab.unk_id)
        entries[idx] = entries.get(idx, 0.0) + weight
    return BowVector(entries=entries, length=len(vocab))


# -- lexicon file loading -----------------------------------------------


def _read_lines(path):
    lines = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            lines.append(line)
    return lines


def load_word_set(path) -> set[str]:
    return set(_read_lines(path))


def load_pairs(path) -> list[tuple[str, str]]:
    pairs = []
    for line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}: expected 'male<TAB>female', got {line!r}")
        pairs.append((parts[0].strip(), parts[1].strip()))
    return pairs


def default_lexicon_dir() -> Path:
    return Path(resources.files("fairchat").joinpath("data/lexicons"))


def load_gender_lexicon(directory=None) -> GenderLexicon:
    d = Path(directory) if directory else default_lexicon_dir()
    extra_m = d / "extra_male.txt"
    extra_f = d / "extra_female.txt"
    return GenderLexicon(
        pairs=load_pairs(d / "gender_pairs.txt"),
        extra_male=load_word_set(extra_m) if extra_m.exists() else set(),
        extra_female=load_word_set(extra_f) if extra_f.exists() else set(),
    )


def load_attribute_lexicons(directory=None) -> AttributeLexicons:
    d = Path(directory) if directory else default_lexicon_dir()
    names = ["stopwords", "career", "family", "offense", "positive", "negative"]
    missing = [n for n in names if not (d / f"{n}.txt").exists()]
    if missing:
        raise FileNotFoundError(f"missing lexicon files in {d}: {[n + '.txt' for n in missing]}")
    sets = {n: load_word_set(d / f"{n}.txt") for n in names}
    return AttributeLexicons(**sets)
