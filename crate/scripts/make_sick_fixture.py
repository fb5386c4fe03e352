#!/usr/bin/env python3
"""Generate a SICK-format sentence-pair fixture and matching word embeddings.

The pairs are templated from a small vocabulary covered by data/lexicon.txt.
Labels follow the usual construction rules (generalization entails,
negation contradicts, specialization and topic change are neutral) and
relatedness scores are drawn per construction on the 1-5 scale.

Usage: python3 scripts/make_sick_fixture.py [--seed 2024] [--n 600] [--out data]
"""

import argparse
import random
from pathlib import Path

DETS = ["a", "the"]
ADJS = ["young", "little", "old", "small", "big", "black", "white"]
PEOPLE = ["man", "woman", "boy", "girl", "child", "kid", "person"]
PEOPLE_PL = ["men", "women", "boys", "girls", "kids", "children", "people"]
ANIMALS = ["dog", "cat", "horse"]
ANIMALS_PL = ["dogs"]
OBJECTS = ["ball", "guitar", "bike", "tree", "fence"]
PLACES = ["park", "grass", "water"]
INTRANS = ["playing", "running", "walking", "jumping", "sleeping", "swimming", "dancing", "sitting"]
TRANS = {
    "riding": ["horse", "bike"],
    "holding": ["ball", "guitar", "dog", "cat"],
    "eating": ["plant", "grass"],
    "climbing": ["tree", "fence"],
    "kicking": ["ball", "fence"],
    "chasing": ["ball", "cat", "dog", "horse"],
    "playing": ["guitar", "ball"],
}
ADVS = ["dangerously", "quickly", "happily", "slowly"]
PREPS = ["in", "on", "near"]
HYPERNYM = {
    "man": "person", "woman": "person", "boy": "child", "girl": "child", "kid": "child",
    "dog": "animal", "cat": "animal", "horse": "animal", "guitar": "instrument", "tree": "plant",
    "men": "people", "women": "people", "boys": "kids", "girls": "kids", "dogs": "animals",
}
PLURAL = set(PEOPLE_PL + ANIMALS_PL)

QUBITS = {"det": 2, "adj": 2, "noun": 1, "aux": 4, "intr": 2, "trans": 3, "adv": 2, "prep": 3}
CAP = 16


class Scene:
    def __init__(self, subj, verb, obj=None, adv=None, place=None, subj_adj=None, obj_adj=None,
                 det=None, neg=False):
        self.subj, self.verb, self.obj, self.adv, self.place = subj, verb, obj, adv, place
        self.subj_adj, self.obj_adj, self.det, self.neg = subj_adj, obj_adj, det, neg

    def copy(self, **kw):
        s = Scene(**self.__dict__)
        s.__dict__.update(kw)
        return s

    def tokens(self):
        t = []
        if self.det:
            t.append(self.det)
        if self.subj_adj:
            t.append(self.subj_adj)
        t.append(self.subj)
        aux = "are" if self.subj in PLURAL else "is"
        t.append(aux + ("n't" if self.neg else ""))
        t.append(self.verb)
        if self.obj:
            t.append("the")
            if self.obj_adj:
                t.append(self.obj_adj)
            t.append(self.obj)
        if self.adv:
            t.append(self.adv)
        if self.place:
            t += [self.place[0], "the", self.place[1]]
        return t

    def qubits(self):
        q = QUBITS["noun"] + QUBITS["aux"]
        q += QUBITS["det"] if self.det else 0
        q += QUBITS["adj"] if self.subj_adj else 0
        if self.obj:
            q += QUBITS["trans"] + QUBITS["det"] + QUBITS["noun"]
            q += QUBITS["adj"] if self.obj_adj else 0
        else:
            q += QUBITS["intr"]
        q += QUBITS["adv"] if self.adv else 0
        q += QUBITS["prep"] + QUBITS["det"] + QUBITS["noun"] if self.place else 0
        return q

    def text(self):
        t = self.tokens()
        return " ".join([t[0].capitalize()] + t[1:])


def random_scene(rng, allow_big=False):
    while True:
        plural = rng.random() < 0.3
        if plural:
            subj = rng.choice(PEOPLE_PL + ANIMALS_PL)
            det = rng.choice([None, None, "the"])
        else:
            subj = rng.choice(PEOPLE + ANIMALS)
            det = rng.choice(DETS)
        s = Scene(subj, None, det=det)
        if rng.random() < 0.35:
            s.subj_adj = rng.choice(ADJS)
        if rng.random() < 0.5:
            s.verb = rng.choice(list(TRANS))
            s.obj = rng.choice(TRANS[s.verb])
            if rng.random() < 0.2:
                s.obj_adj = rng.choice(ADJS)
        else:
            s.verb = rng.choice(INTRANS)
        if rng.random() < 0.3:
            s.adv = rng.choice(ADVS)
        if rng.random() < 0.25:
            s.place = (rng.choice(PREPS), rng.choice(PLACES))
        if allow_big or s.qubits() <= CAP:
            return s


def generalizations(s):
    out = []
    if s.adv:
        out.append(s.copy(adv=None))
    if s.subj_adj:
        out.append(s.copy(subj_adj=None))
    if s.obj_adj:
        out.append(s.copy(obj_adj=None))
    if s.place:
        out.append(s.copy(place=None))
    if s.subj in HYPERNYM:
        out.append(s.copy(subj=HYPERNYM[s.subj]))
    if s.obj in HYPERNYM:
        out.append(s.copy(obj=HYPERNYM[s.obj]))
    return out


def specializations(rng, s):
    out = []
    if not s.adv:
        out.append(s.copy(adv=rng.choice(ADVS)))
    if not s.subj_adj:
        out.append(s.copy(subj_adj=rng.choice(ADJS)))
    return [x for x in out if x.qubits() <= CAP]


def topic_change(rng, s):
    t = random_scene(rng)
    t.subj, t.det, t.subj_adj = s.subj, s.det, s.subj_adj
    if t.tokens() == s.tokens() or t.qubits() > CAP:
        return None
    return t


def score(rng, mean, sd):
    return min(5.0, max(1.0, round(rng.gauss(mean, sd), 1)))


def make_pair(rng):
    r = rng.random()
    s = random_scene(rng)
    if r < 0.29:
        gens = generalizations(s)
        if not gens:
            return None
        return s, rng.choice(gens), score(rng, 4.5, 0.4), "ENTAILMENT"
    if r < 0.44:
        h = s.copy(neg=True)
        if rng.random() < 0.5:
            s, h = h.copy(neg=False), h
        return s, h, score(rng, 3.6, 0.5), "CONTRADICTION"
    r = rng.random()
    if r < 0.3:
        specs = specializations(rng, s)
        if not specs:
            return None
        return s, rng.choice(specs), score(rng, 3.9, 0.4), "NEUTRAL"
    if r < 0.65:
        h = topic_change(rng, s)
        if h is None:
            return None
        return s, h, score(rng, 2.9, 0.6), "NEUTRAL"
    h = random_scene(rng)
    if h.subj == s.subj:
        return None
    return s, h, score(rng, 1.8, 0.6), "NEUTRAL"


def edge_rows(rng):
    """Rows the ingest filter must exclude: too long, out of vocabulary, over the qubit cap."""
    rows = [
        ("A young boy is riding the big horse slowly near the water in the park",
         "A boy is riding a horse", 4.1, "ENTAILMENT"),
        ("A man is playing a harmonica", "A man is playing an instrument", 4.4, "ENTAILMENT"),
        ("The woman is slicing an onion", "A woman is cutting an onion", 4.6, "ENTAILMENT"),
        ("A little girl is riding the white horse quickly", "A girl is riding a horse", 4.3,
         "ENTAILMENT"),
        ("Two dogs are wrestling on the grass", "Dogs are playing", 3.8, "NEUTRAL"),
    ]
    big = random_scene(rng, allow_big=True)
    while big.qubits() <= CAP or len(big.tokens()) > 11:
        big = random_scene(rng, allow_big=True)
    rows.append((big.text(), big.copy(adv=None, place=None).text(), 4.0, "ENTAILMENT"))
    return rows


EMBED_DIMS = ["person", "young", "animal", "artifact", "plant", "place", "motion", "play",
              "negation", "manner", "size", "colour", "function", "plural", "copula", "object"]


def features(word):
    f = dict.fromkeys(EMBED_DIMS, 0.0)
    base = word
    if word in PLURAL:
        f["plural"] = 1.0
    singular = {"men": "man", "women": "woman", "boys": "boy", "girls": "girl", "kids": "kid",
                "children": "child", "people": "person", "dogs": "dog", "animals": "animal"}
    base = singular.get(word, word)
    if base in ("man", "woman", "person"):
        f["person"] = 1.0
    if base in ("boy", "girl", "child", "kid"):
        f["person"], f["young"] = 0.9, 1.0
    if base in ("dog", "cat", "horse", "animal"):
        f["animal"] = 1.0
    if base in ("ball", "guitar", "instrument", "bike", "fence"):
        f["artifact"] = 1.0
    if base in ("tree", "plant", "grass"):
        f["plant"] = 1.0
    if base in ("park", "grass", "water"):
        f["place"] = 1.0
    if base in ("guitar", "instrument", "ball"):
        f["play"] = 0.6
    if base in INTRANS or base in TRANS:
        f["motion"] = 0.4 if base in ("sleeping", "sitting") else 1.0
    if base in ("playing", "dancing", "kicking", "chasing"):
        f["play"] = 1.0
    if base in TRANS:
        f["object"] = 1.0
    if base in ADVS:
        f["manner"] = 1.0
        f["motion"] = 0.3
    if base in ("young", "little"):
        f["young"] = 0.8
    if base in ("little", "small", "big"):
        f["size"] = 1.0
    if base in ("black", "white"):
        f["colour"] = 1.0
    if base == "old":
        f["young"] = -0.8
    if base in DETS or base in PREPS:
        f["function"] = 1.0
    if base in PREPS:
        f["place"] = 0.7
    if base in ("is", "isn't", "are", "aren't"):
        f["copula"] = 1.0
    if base.endswith("n't"):
        f["negation"] = 1.0
    if base in ("are", "aren't"):
        f["plural"] = 1.0
    return [f[d] for d in EMBED_DIMS]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--n", type=int, default=600)
    ap.add_argument("--out", default="data")
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = Path(args.out)

    rows, seen = [], set()
    while len(rows) < args.n:
        pair = make_pair(rng)
        if pair is None:
            continue
        a, b, rel, label = pair
        key = (a.text(), b.text())
        if a.tokens() == b.tokens() or key in seen:
            continue
        seen.add(key)
        rows.append((a.text(), b.text(), rel, label))
    extra = edge_rows(rng)
    for i, row in enumerate(extra):
        rows.insert((i + 1) * len(rows) // (len(extra) + 1), row)

    with open(out / "sick_fixture.tsv", "w") as f:
        f.write("pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_judgment\n")
        for i, (a, b, rel, label) in enumerate(rows, start=1):
            f.write(f"{i}\t{a}\t{b}\t{rel:.1f}\t{label}\n")

    vocab = []
    for line in open(out / "lexicon.txt"):
        line = line.strip()
        if line and not line.startswith("#"):
            tok = line.split()[0]
            if tok not in vocab:
                vocab.append(tok)
    with open(out / "embeddings.txt", "w") as f:
        for tok in vocab:
            v = [x + rng.gauss(0.0, 0.05) for x in features(tok)]
            f.write(tok + " " + " ".join(f"{x:.4f}" for x in v) + "\n")


if __name__ == "__main__":
    main()
