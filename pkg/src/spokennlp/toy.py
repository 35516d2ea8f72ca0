"""Deterministic desk-scale corpora for tests, demos and the smoke pipeline.

Nothing here is part of the scientific machinery; the generators exist so
every experiment in the repo can run in seconds on a laptop with seeded,
reproducible inputs.
"""

from __future__ import annotations

import numpy as np

from .corpus_io import DepTree, LabeledDocument, SluSample, Utterance
from .normalize import DiarizationTurn

__all__ = [
    "toy_grammar_trees",
    "toy_turns",
    "toy_slu_samples",
    "toy_slu_rules",
    "toy_documents",
    "TOY_NAMES",
]

DETS = ("le", "la", "un", "une", "ce", "cette")
NOUNS = ("chat", "chien", "femme", "homme", "enfant", "ministre", "journaliste", "voisine")
VERBS = ("dort", "mange", "parle", "court", "regarde", "appelle")

POS_OF = {w: "DET" for w in DETS}
POS_OF.update({w: "NOUN" for w in NOUNS})
POS_OF.update({w: "VERB" for w in VERBS})

TOY_NAMES = ("marie", "jean", "paul", "sophie", "luc", "claire", "hugo", "nina")


def toy_grammar_trees(n_sentences: int = 200, seed: int = 0,
                      recording_prefix: str = "toy") -> list[DepTree]:
    """Sentences from a deterministic 3-POS grammar.

    Pattern: DET NOUN VERB [DET NOUN].  The determiner depends on its noun,
    the subject noun on the verb, the verb on the root, and the optional
    object noun on the verb; POS is a function of the word.
    """
    rng = np.random.default_rng(seed)
    trees = []
    for i in range(n_sentences):
        d1 = DETS[rng.integers(len(DETS))]
        n1 = NOUNS[rng.integers(len(NOUNS))]
        v = VERBS[rng.integers(len(VERBS))]
        words = [d1, n1, v]
        heads = {1: 2, 2: 3, 3: 0}
        labels = {1: "det", 2: "subj", 3: "root"}
        if rng.random() < 0.5:
            d2 = DETS[rng.integers(len(DETS))]
            n2 = NOUNS[rng.integers(len(NOUNS))]
            words += [d2, n2]
            heads.update({4: 5, 5: 3})
            labels.update({4: "det", 5: "obj"})
        utt = Utterance.from_words(words, recording_id=f"{recording_prefix}-{i:04d}")
        pos = {j: POS_OF[w] for j, w in enumerate(words, start=1)}
        trees.append(DepTree(utt, heads, labels, pos))
    return trees


_TURN_TEXTS = (
    "Bonjour, et bienvenue à Paris !",
    "Le ministre a parlé, hier soir, devant la presse.",
    "Oui, oui... c'est ça.",
    "Il y a eu un match de football : trois buts !",
    "La météo annonce de la pluie demain.",
    "<pers> a rencontré <pers> au studio.",
    "C'est l'heure du journal.",
    "Merci <pers>, à demain !",
    "...",
    "Quel temps fait-il aujourd'hui ?",
    "Les prix de l'énergie augmentent encore.",
    "On en reparle après la pause.",
)


def toy_turns(n_recordings: int = 3, seed: int = 0) -> list[DiarizationTurn]:
    """Diarization turns with case, punctuation, duplicates, an empty turn
    and masked proper names, to exercise the whole normalize pipeline."""
    rng = np.random.default_rng(seed)
    turns = []
    for r in range(n_recordings):
        rid = f"rec-{r:03d}"
        t = 0.0
        for _ in range(10):
            text = _TURN_TEXTS[rng.integers(len(_TURN_TEXTS))]
            dur = float(rng.uniform(1.0, 6.0))
            turns.append(DiarizationTurn(rid, f"spk-{int(rng.integers(3))}", t, t + dur, text))
            t += dur
    return turns


_CMD = (("je voudrais reserver", "reservation"), ("je veux annuler", "annulation"))
_NB = (("une", "1"), ("deux", "2"), ("trois", "3"))
_ROOM = (("chambre simple", "simple"), ("chambre double", "double"))
_CITY = ("paris", "lyon", "marseille", "nice")
_DATE = ("demain", "lundi", "mardi", "samedi")

TOY_CONCEPTS = ("cmd-task", "nb-room", "room-type", "loc-city", "date")


def toy_slu_samples(n_samples: int = 500, seed: int = 0,
                    recording_prefix: str = "slu") -> list[SluSample]:
    """Templated hotel-request utterances over 5 concepts, in BIO form."""
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n_samples):
        words: list[str] = []
        tags: list[str] = []

        def add(chunk: str, concept: str | None):
            for k, w in enumerate(chunk.split()):
                words.append(w)
                if concept is None:
                    tags.append("O")
                else:
                    tags.append(("B-" if k == 0 else "I-") + concept)

        add(_CMD[rng.integers(len(_CMD))][0], "cmd-task")
        add(_NB[rng.integers(len(_NB))][0], "nb-room")
        add(_ROOM[rng.integers(len(_ROOM))][0], "room-type")
        add("a", None)
        add(_CITY[rng.integers(len(_CITY))], "loc-city")
        if rng.random() < 0.5:
            add("pour", None)
            add(_DATE[rng.integers(len(_DATE))], "date")
        utt = Utterance.from_words(words, recording_id=f"{recording_prefix}-{i:04d}")
        samples.append(SluSample(utt, tuple(tags)))
    return samples


def toy_slu_rules() -> dict:
    """Value-normalization rules matching the toy SLU templates."""
    return {
        "cmd-task": [
            {"pattern": "reserver", "value": "reservation"},
            {"pattern": "annuler", "value": "annulation"},
        ],
        "nb-room": [
            {"pattern": "^une$", "value": "1"},
            {"pattern": "^deux$", "value": "2"},
            {"pattern": "^trois$", "value": "3"},
        ],
        "room-type": [
            {"pattern": "simple", "value": "simple"},
            {"pattern": "double", "value": "double"},
        ],
    }


_TOPICS = {
    "sport": ("match", "but", "equipe", "joueur", "victoire", "tournoi", "ballon",
              "stade", "champion", "entraineur"),
    "politique": ("ministre", "loi", "vote", "assemblee", "gouvernement", "election",
                  "senat", "reforme", "parti", "debat"),
    "meteo": ("pluie", "soleil", "vent", "orage", "temperature", "nuage", "neige",
              "averse", "canicule", "gel"),
}
_SHARED = ("le", "la", "les", "un", "une", "de", "et", "dans", "pour", "sur",
           "hier", "demain", "france", "journal", "selon", "grand", "nouvelle")

TOY_CATEGORIES = tuple(sorted(_TOPICS))


def toy_documents(n_docs: int = 600, seed: int = 0) -> list[LabeledDocument]:
    """Separable 3-category documents with shared filler vocabulary."""
    rng = np.random.default_rng(seed)
    categories = sorted(_TOPICS)
    docs = []
    for i in range(n_docs):
        cat = categories[int(rng.integers(len(categories)))]
        topic = _TOPICS[cat]
        length = int(rng.integers(20, 40))
        words = [
            topic[rng.integers(len(topic))] if rng.random() < 0.6
            else _SHARED[rng.integers(len(_SHARED))]
            for _ in range(length)
        ]
        docs.append(LabeledDocument(
            text=" ".join(words),
            category=cat,
            channel=f"ch-{int(rng.integers(4))}",
            date=f"2019-{int(rng.integers(1, 13)):02d}-01",
            doc_id=f"doc-{i:06d}",
        ))
    return docs
