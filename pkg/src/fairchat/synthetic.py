"""Synthetic dialogue corpora with a plantable gender disparity.

Generates template-based single-turn dialogues where responses echo the
message's gender words, and a configurable fraction of female-message
responses contains "biased" adjectives drawn from the offense/negative
lexicons.  Used by the desk-scale experiments and as a self-contained demo
input for the CLI.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fairchat.corpora import DialoguePair

SUBJECT_PAIRS = [("he", "she"), ("man", "woman"), ("boy", "girl"), ("brother", "sister")]
POSSESSIVE_PAIRS = [("his", "her")]

CONTENT_WORDS = [
    "movie", "garden", "river", "city", "train", "market", "lunch", "dinner",
    "morning", "evening", "meeting", "phone", "letter", "story", "song",
    "picture", "kitchen", "window", "door", "table", "bread", "cheese",
    "apple", "soup", "salad", "soccer", "tennis", "chess", "puzzle", "museum",
    "library", "bridge", "forest", "mountain", "lake", "beach", "island",
    "ticket", "journey", "road", "house", "book", "cat", "dog", "coffee",
    "tea", "milk", "cake", "rain", "snow", "wind", "cloud", "star", "moon",
    "candle", "basket", "bottle", "mirror", "clock", "drum", "violin",
]

# larger pool for the planted-gender utterance corpus; content words are
# drawn independently of gender so only the gender word predicts the label
EXTRA_CONTENT_WORDS = [
    "anchor", "arrow", "autumn", "bakery", "balloon", "banana", "barn",
    "barrel", "bell", "bench", "berry", "bicycle", "blanket", "board",
    "boat", "boot", "branch", "brick", "broom", "brush", "bucket", "butter",
    "button", "cabin", "cable", "camera", "canal", "candy", "canvas", "card",
    "carpet", "carrot", "cart", "castle", "cave", "ceiling", "cellar",
    "chain", "chalk", "chapter", "charcoal", "chimney", "circle", "cliff",
    "coal", "coast", "coat", "cobweb", "coin", "collar", "compass", "copper",
    "coral", "corn", "corner", "cotton", "crane", "crate", "crayon", "creek",
    "crystal", "curtain", "cushion", "dawn", "desert", "desk", "diamond",
    "ditch", "dock", "dome", "dough", "dust", "eagle", "earth", "echo",
    "engine", "fabric", "farm", "feather", "fence", "fern", "field", "flag",
    "flame", "flask", "floor", "flour", "flute", "fog", "fountain", "fox",
    "frame", "frost", "fruit", "furnace", "garage", "garlic", "gate", "gear",
    "ginger", "glacier", "glass", "glove", "grain", "grape", "grass",
    "gravel", "grove", "hammer", "harbor", "harvest", "hay", "hedge", "hill",
    "hinge", "honey", "hook", "horizon", "horn", "hose", "hut", "ice",
    "ink", "iron", "ivory", "jacket", "jar", "jungle", "kettle", "keyboard",
    "kite", "knife", "knot", "ladder", "lamp", "lantern", "leaf", "ledge",
    "lemon", "lens", "lighthouse", "lily", "lime", "lobster", "log", "loom",
    "magnet", "mango", "map", "marble", "mask", "mast", "meadow", "melon",
    "metal", "mill", "mint", "mist", "mud", "mushroom", "nail", "needle",
    "nest", "net", "notebook", "oak", "oasis", "ocean", "olive", "onion",
    "orchard", "oven", "owl", "paddle", "page", "paint", "palace", "palm",
    "pan", "paper", "parcel", "park", "pasta", "pearl", "pebble", "pepper",
    "piano", "pier", "pillar", "pillow", "pine", "pipe", "pitcher", "plank",
    "plate", "plow", "pocket", "pond", "porch", "pot", "prairie", "quilt",
    "rack", "raft", "rail", "rake", "ranch", "reef", "ribbon", "rice",
    "ridge", "ring", "rock", "roof", "rope", "rose", "rug", "rust", "sail",
    "sand", "satchel", "scale", "scarf", "school", "scissors", "shell",
    "shelf", "ship", "shovel", "shore", "silk", "silver", "sketch", "sled",
    "slope", "smoke", "socket", "spade", "spark", "spice", "sponge", "spoon",
    "spring", "sprout", "stable", "stage", "stairs", "stamp", "steam",
    "steel", "stem", "stick", "stone", "stove", "straw", "stream", "street",
    "string", "stump", "sugar", "summit", "sunset", "swamp", "sword",
    "syrup", "tail", "tank", "tape", "tar", "tent", "thread", "tide",
    "tile", "timber", "tin", "toast", "tomato", "tool", "torch", "tower",
    "trail", "tray", "tree", "trench", "tunnel", "turnip", "valley", "vase",
    "veil", "vine", "wagon", "wall", "walnut", "wave", "wax", "well",
    "wheat", "wheel", "whistle", "willow", "wire", "wolf", "wool", "yard",
    "yarn", "zipper",
]

NEUTRAL_ADJ = ["busy", "ready", "quiet", "early", "late", "tall", "calm", "curious"]
BIASED_ADJ = ["jealous", "hysterical"]  # in the negative-sentiment lexicon
BIASED_OFFENSE = ["annoying"]  # in the offense lexicon

MESSAGE_TEMPLATES = [
    "tell me about {subj} and the {content}",
    "what does {subj} think about the {content}",
    "{subj} went to the {content} yesterday",
    "i saw {subj} near the {content} today",
]
NEUTRAL_RESPONSE_TEMPLATES = [
    "{subj} is {adj} about the {content}",
    "{subj} likes the {content} a lot",
    "i think {subj} enjoys the {content}",
]
BIASED_RESPONSE_TEMPLATE = "{subj} is {biased} about the {content}"

NEUTRAL_MESSAGE_TEMPLATES = [
    "the {content} was interesting today",
    "what do you think about the {content}",
    "i went to the {content} yesterday",
]
NEUTRAL_NEUTRAL_RESPONSES = [
    "the {content} seems fine to me",
    "i agree about the {content}",
    "let us talk about the {content} later",
]


@dataclass
class SyntheticSpec:
    n_gendered: int = 900
    n_neutral: int = 450
    bias_rate: float = 0.75  # female responses drawing a biased adjective
    offense_share: float = 0.4  # biased draws using the offense word instead of sentiment
    seed_content_words: int = 40


def _fill(template, **kw):
    return template.format(**kw)


def generate_biased_corpus(rng: np.random.Generator, spec: SyntheticSpec | None = None):
    """Raw (message, response) string pairs with a planted female-side bias."""
    spec = spec or SyntheticSpec()
    contents = list(CONTENT_WORDS[: spec.seed_content_words])
    rows = []
    for i in range(spec.n_gendered):
        female = i % 2 == 1
        side = 1 if female else 0
        subj = SUBJECT_PAIRS[rng.integers(len(SUBJECT_PAIRS))][side]
        content = contents[rng.integers(len(contents))]
        message = _fill(MESSAGE_TEMPLATES[rng.integers(len(MESSAGE_TEMPLATES))], subj=subj, content=content)
        if female and rng.random() < spec.bias_rate:
            if rng.random() < spec.offense_share:
                biased = BIASED_OFFENSE[rng.integers(len(BIASED_OFFENSE))]
            else:
                biased = BIASED_ADJ[rng.integers(len(BIASED_ADJ))]
            response = _fill(BIASED_RESPONSE_TEMPLATE, subj=subj, biased=biased, content=content)
        else:
            template = NEUTRAL_RESPONSE_TEMPLATES[rng.integers(len(NEUTRAL_RESPONSE_TEMPLATES))]
            adj = NEUTRAL_ADJ[rng.integers(len(NEUTRAL_ADJ))]
            response = _fill(template, subj=subj, content=content, adj=adj)
        rows.append({"message": message, "response": response})
    for _ in range(spec.n_neutral):
        content = contents[rng.integers(len(contents))]
        message = _fill(NEUTRAL_MESSAGE_TEMPLATES[rng.integers(len(NEUTRAL_MESSAGE_TEMPLATES))], content=content)
        response = _fill(NEUTRAL_NEUTRAL_RESPONSES[rng.integers(len(NEUTRAL_NEUTRAL_RESPONSES))], content=content)
        rows.append({"message": message, "response": response})
    perm = rng.permutation(len(rows))
    return [rows[i] for i in perm]


GENDER_WORD_PAIRS = SUBJECT_PAIRS + [
    ("father", "mother"),
    ("king", "queen"),
]


def generate_planted_utterances(rng: np.random.Generator, n=2000, length=8):
    """Gendered utterances whose content words are independent of gender.

    Each utterance is one gender word planted at a random position among
    content words drawn from a large pool, so gender is recoverable only
    from the gender word itself while reconstruction needs the full
    semantic capacity.
    """
    pool = CONTENT_WORDS + EXTRA_CONTENT_WORDS
    utterances = []
    genders = []
    for i in range(n):
        female = i % 2 == 1
        side = 1 if female else 0
        gword = GENDER_WORD_PAIRS[rng.integers(len(GENDER_WORD_PAIRS))][side]
        words = [pool[rng.integers(len(pool))] for _ in range(length - 1)]
        pos = int(rng.integers(length))
        tokens = words[:pos] + [gword] + words[pos:]
        utterances.append(" ".join(tokens))
        genders.append("female" if female else "male")
    return utterances, genders


def write_corpus(path, rows):
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def as_dialogue_pairs(rows):
    from fairchat.text import tokenize

    return [
        DialoguePair(message=tokenize(r["message"]), response=tokenize(r["response"]))
        for r in rows
    ]


def as_labeled(utterances, genders):
    from fairchat.corpora import LabeledUtterance
    from fairchat.text import GenderLabel, tokenize

    return [
        LabeledUtterance(utterance=tokenize(u), gender=GenderLabel(g))
        for u, g in zip(utterances, genders)
    ]
