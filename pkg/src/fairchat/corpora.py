"""Derived-corpus builders and the pluggable offense/sentiment classifiers.

From a raw dialogue corpus this module builds:
  * the unbiased gendered utterance corpus (single-gender, filter-passing),
  * the gendered dialogue corpus (message gender is male or female),
  * the neutral dialogue corpus (message has no gender words),
  * the fairness corpus of parallel message pairs differing only in
    counterpart gender words.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from fairchat.text import (
    AttributeLexicons,
    GenderLabel,
    GenderLexicon,
    Utterance,
    detect_gender,
    swap_gender,
    tokenize,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DialoguePair:
    message: Utterance
    response: Utterance


@dataclass(frozen=True)
class GenderedDialogue:
    pair: DialoguePair
    gender: GenderLabel


@dataclass(frozen=True)
class LabeledUtterance:
    utterance: Utterance
    gender: GenderLabel


@dataclass(frozen=True)
class FairnessPair:
    male_message: Utterance
    female_message: Utterance


class TextClassifier(Protocol):
    """Deterministic utterance classifier returning (label, score in [0, 1])."""

    def classify(self, u: Utterance) -> tuple[str, float]: ...


class LexiconOffenseClassifier:
    """Flags an utterance as offensive iff it contains an offense-lexicon word."""

    def __init__(self, offense_words):
        if not offense_words:
            raise ValueError("offense lexicon is empty")
        self.offense_words = set(offense_words)

    def classify(self, u):
        hits = sum(1 for t in u.tokens if t in self.offense_words)
        return ("offensive", 1.0) if hits else ("clean", 0.0)


class LexiconSentimentClassifier:
    """Counts positive minus negative lexicon hits against a margin threshold."""

    def __init__(self, positive, negative, threshold=1):
        if not positive or not negative:
            raise ValueError("sentiment lexicons are empty")
        if threshold < 1:
            raise ValueError("sentiment threshold must be >= 1")
        self.positive = set(positive)
        self.negative = set(negative)
        self.threshold = threshold

    def classify(self, u):
        margin = sum(1 for t in u.tokens if t in self.positive) - sum(
            1 for t in u.tokens if t in self.negative
        )
        if margin >= self.threshold:
            return "positive", 1.0
        if margin <= -self.threshold:
            return "negative", 1.0
        return "neutral", 0.0


def lexicon_offense_classifier(lex: AttributeLexicons) -> LexiconOffenseClassifier:
    return LexiconOffenseClassifier(lex.offense)


def lexicon_sentiment_classifier(lex: AttributeLexicons, threshold=1) -> LexiconSentimentClassifier:
    return LexiconSentimentClassifier(lex.positive, lex.negative, threshold)


def passes_unbiased_filter(u, offense_clf, sentiment_clf, lex: AttributeLexicons) -> bool:
    """Not offensive, not strongly sentimental, and no career/family words."""
    if offense_clf.classify(u)[0] == "offensive":
        return False
    if sentiment_clf.classify(u)[0] in ("positive", "negative"):
        return False
    return not any(t in lex.career or t in lex.family for t in u.tokens)


def build_unbiased_utterances(
    dialogues, offense_clf, sentiment_clf, lex: AttributeLexicons, glex: GenderLexicon
) -> list[LabeledUtterance]:
    """Single-gender messages and responses that pass all three bias filters."""
    out = []
    for pair in dialogues:
        for u in (pair.message, pair.response):
            gender = detect_gender(u, glex)
            if gender not in (GenderLabel.MALE, GenderLabel.FEMALE):
                continue
            if passes_unbiased_filter(u, offense_clf, sentiment_clf, lex):
                out.append(LabeledUtterance(utterance=u, gender=gender))
    if not out:
        log.warning("unbiased gendered utterance corpus is empty")
    return out


def build_gendered_dialogues(dialogues, glex: GenderLexicon) -> list[GenderedDialogue]:
    """Dialogues whose message contains words of exactly one gender."""
    out = []
    for pair in dialogues:
        gender = detect_gender(pair.message, glex)
        if gender in (GenderLabel.MALE, GenderLabel.FEMALE):
            out.append(GenderedDialogue(pair=pair, gender=gender))
    return out


def build_neutral_dialogues(dialogues, glex: GenderLexicon) -> list[DialoguePair]:
    """Dialogues whose message contains no gender words at all."""
    return [p for p in dialogues if detect_gender(p.message, glex) is GenderLabel.NEUTRAL]


def build_fairness_pairs(
    dialogues, glex: GenderLexicon, n_pairs, rng: np.random.Generator
) -> list[FairnessPair]:
    """Parallel message pairs: each message normalized to its male form and
    paired with its counterpart swap.  Deduplicated on the male form;
    selection order is a seeded permutation of the eligible messages."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    eligible = []
    seen = set()
    for pair in dialogues:
        msg = pair.message
        gender = detect_gender(msg, glex)
        if gender not in (GenderLabel.MALE, GenderLabel.FEMALE):
            continue
        swapped, warnings = swap_gender(msg, glex)
        if warnings:
            continue
        male, female = (msg, swapped) if gender is GenderLabel.MALE else (swapped, msg)
        if male.tokens in seen:
            continue
        seen.add(male.tokens)
        eligible.append(FairnessPair(male_message=male, female_message=female))
    if len(eligible) < n_pairs:
        log.warning("only %d eligible fairness messages (requested %d)", len(eligible), n_pairs)
        chosen = list(range(len(eligible)))
    else:
        chosen = rng.permutation(len(eligible))[:n_pairs]
    return [eligible[i] for i in sorted(chosen)]


# -- JSONL file formats ---------------------------------------------------


def read_dialogues(path, max_len=50) -> list[DialoguePair]:
    """Read {"message": str, "response": str} JSON lines; drop pairs where
    either side is empty or exceeds max_len tokens."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "message" not in obj or "response" not in obj:
                raise ValueError(f"{path}:{line_no}: expected 'message' and 'response' keys")
            msg, resp = tokenize(obj["message"]), tokenize(obj["response"])
            if not msg.tokens or not resp.tokens:
                continue
            if len(msg) > max_len or len(resp) > max_len:
                continue
            out.append(DialoguePair(message=msg, response=resp))
    return out


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def dialogue_record(pair: DialoguePair, gender=None):
    rec = {"message": pair.message.raw, "response": pair.response.raw}
    if gender is not None:
        rec["gender"] = gender.value
    return rec


def utterance_record(item: LabeledUtterance):
    return {"text": item.utterance.raw, "gender": item.gender.value}


def fairness_record(pair: FairnessPair):
    return {"male": pair.male_message.raw, "female": pair.female_message.raw}


def read_fairness_pairs(path) -> list[FairnessPair]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                FairnessPair(
                    male_message=tokenize(obj["male"]), female_message=tokenize(obj["female"])
                )
            )
    return out


def read_labeled_utterances(path) -> list[LabeledUtterance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                LabeledUtterance(utterance=tokenize(obj["text"]), gender=GenderLabel(obj["gender"]))
            )
    return out


def read_gendered_dialogues(path) -> list[GenderedDialogue]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            pair = DialoguePair(message=tokenize(obj["message"]), response=tokenize(obj["response"]))
            out.append(GenderedDialogue(pair=pair, gender=GenderLabel(obj["gender"])))
    return out
