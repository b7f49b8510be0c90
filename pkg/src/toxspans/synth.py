"""Synthetic planted-lexicon corpus for desk-scale experiments.

Texts are random sequences of benign words. About 30% of samples get one or
more planted "toxic" terms (single words or adjective+noun pairs); about a
third of those get two or more, separated by benign words so each plant is
its own gold span. Gold offsets are exactly the planted characters.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import DatasetSplit, TextSample

BENIGN = """
the a an this that these those some many every other same different new old good great
small large long short early late young public local national social political economic
people time year day week city town state country world family school company government
group house street river road market report story idea question answer plan policy party
issue problem point reason change result decision system program service money price tax
job work law court rule vote council member leader voter driver teacher doctor student
think know say tell ask give take make find see read write pay build move live believe
expect support agree argue explain remember consider suggest improve reduce increase
and or but so because if when while although since before after about with without
from into over under between through during against toward near
very quite really still just also only even often never always sometimes perhaps maybe
comment article letter editor reader writer news paper page column point view opinion
mayor senator minister official agency department budget bill project proposal funding
water energy oil land forest weather rain snow summer winter spring morning evening
""".split()

TOXIC_WORDS = """
idiot stupid moron dumb pathetic troll fool loser clown ignorant imbecile jerk
dimwit buffoon cretin dolt halfwit nitwit numbskull dunce twit bozo scumbag creep
hypocrite liar coward bigot lunatic maniac parasite
""".split()

TOXIC_ADJECTIVES = ("stupid", "dumb", "pathetic", "ignorant")
PUNCT_AFTER = (",", ".", "!", "?", ";")


@dataclass
class SynthConfig:
    train_size: int = 2000
    dev_size: int = 200
    test_size: int = 200
    lexicon_size: int = 20
    seed: int = 7
    toxic_rate: float = 0.30
    multi_rate: float = 1 / 3  # fraction of toxic samples with 2+ spans
    phrase_rate: float = 0.25
    min_words: int = 6
    max_words: int = 22


def lexicon(size: int) -> list[str]:
    if not 0 < size <= len(TOXIC_WORDS):
        raise ValueError(f"lexicon size must be in [1, {len(TOXIC_WORDS)}]")
    return TOXIC_WORDS[:size]


def _plant(rng: random.Random, lex: list[str], phrase_rate: float) -> list[str]:
    nouns = [w for w in lex if w not in TOXIC_ADJECTIVES] or lex
    adjs = [w for w in lex if w in TOXIC_ADJECTIVES]
    if adjs and rng.random() < phrase_rate:
        return [rng.choice(adjs), rng.choice(nouns)]
    return [rng.choice(lex)]


def make_sample(rng: random.Random, sid: int, lex: list[str], cfg: SynthConfig) -> TextSample:
    n_words = rng.randint(cfg.min_words, cfg.max_words)
    # word slots: (words, is_toxic)
    slots: list[tuple[list[str], bool]] = [([rng.choice(BENIGN)], False) for _ in range(n_words)]
    if rng.random() < cfg.toxic_rate:
        n_plants = rng.randint(2, 3) if rng.random() < cfg.multi_rate else 1
        # plants sit on even slot indices at distance >= 2 so a benign word separates them
        positions = sorted(rng.sample(range(0, n_words, 2), min(n_plants, (n_words + 1) // 2)))
        for p in positions:
            slots[p] = (_plant(rng, lex, cfg.phrase_rate), True)

    text, offsets = "", []
    for k, (words, toxic) in enumerate(slots):
        if k:
            text += " "
        chunk = " ".join(words)
        if k == 0:
            chunk = chunk[0].upper() + chunk[1:]
        if toxic:
            offsets.extend(range(len(text), len(text) + len(chunk)))
        text += chunk
        if k < len(slots) - 1 and rng.random() < 0.08:
            text += rng.choice(PUNCT_AFTER)
    text += rng.choice((".", ".", "!", "?"))
    return TextSample(sid, text, tuple(offsets))


def generate(cfg: SynthConfig = SynthConfig()) -> dict[str, DatasetSplit]:
    rng = random.Random(cfg.seed)
    lex = lexicon(cfg.lexicon_size)
    out = {}
    for name, size in (("train", cfg.train_size), ("dev", cfg.dev_size), ("test", cfg.test_size)):
        if size <= 0:
            raise ValueError(f"{name} size must be positive")
        out[name] = DatasetSplit(name, tuple(make_sample(rng, i, lex, cfg) for i in range(size)))
    return out
