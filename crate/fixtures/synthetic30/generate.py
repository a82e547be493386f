"""Regenerates the synthetic 30-drug fixture in this directory.

Gold scores depend only on the taxonomy class of each drug. Annotations,
descriptions and the corpus are drawn independently of class.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent
rng = random.Random(20240601)

CLASSES = ["C1", "C2", "C3", "C4", "C5"]
SYLLABLES = ["ba", "ce", "di", "fo", "gu", "ka", "le", "mi", "no", "pu", "ra", "se", "ti", "vo", "za"]
WORDS = (
    "agent compound tablet dose oral infusion plasma clearance renal hepatic "
    "label trial patient adult storage vial solution powder release marketed "
    "approved generic brand formula dosage weekly daily evening morning water "
    "protein binding volume metabolite excretion urine feces interval steady "
    "state peak trough level monitor record report region batch lot supplier"
).split()
SIDE_EFFECTS = [f"C{n:07d}" for n in range(10001, 10026)]
TARGETS = [f"P{n:05d}" for n in range(20001, 20016)]
MOA = [f"N{n:010d}" for n in range(1, 9)]
PE = [f"N{n:010d}" for n in range(101, 109)]


def name():
    return "".join(rng.choice(SYLLABLES) for _ in range(3)) + rng.choice(["cin", "mab", "pril", "zole"])


drugs = []
used = set()
for i in range(30):
    n = name()
    while n in used:
        n = name()
    used.add(n)
    drugs.append(
        {
            "id": f"SD{i + 1:03d}",
            "name": n,
            "class": CLASSES[i % 5],
            "description": " ".join(rng.choice(WORDS) for _ in range(rng.randint(12, 20))),
            "targets": sorted(rng.sample(TARGETS, rng.randint(1, 3))),
        }
    )

with open(OUT / "drugs.jsonl", "w") as f:
    for d in drugs:
        rec = {k: d[k] for k in ("id", "name", "description", "targets")}
        rec["taxonomy_node"] = f"T:{d['id']}"
        f.write(json.dumps(rec) + "\n")

with open(OUT / "taxonomy.tsv", "w") as f:
    f.write("# parent\tchild\n")
    for c in CLASSES:
        f.write(f"T:root\tT:{c}\n")
    for d in drugs:
        f.write(f"T:{d['class']}\tT:{d['id']}\n")

with open(OUT / "side_effects.tsv", "w") as f:
    for d in drugs:
        if rng.random() < 0.1:
            continue
        for se in sorted(rng.sample(SIDE_EFFECTS, rng.randint(2, 6))):
            f.write(f"{d['id']}\t{se}\n")

with open(OUT / "ndfrt.tsv", "w") as f:
    for d in drugs:
        for kind, pool in (("MoA", MOA), ("PE", PE)):
            for c in sorted(rng.sample(pool, rng.randint(1, 2))):
                f.write(f"{d['id']}\t{kind}\t{c}\n")

with open(OUT / "corpus.jsonl", "w") as f:
    for i in range(200):
        words = [rng.choice(WORDS) for _ in range(rng.randint(10, 25))]
        for _ in range(rng.randint(1, 2)):
            words.insert(rng.randrange(len(words) + 1), rng.choice(drugs)["name"])
        f.write(json.dumps({"doc_id": f"doc{i:04d}", "text": " ".join(words)}) + "\n")

pairs = [(a, b) for i, a in enumerate(drugs) for b in drugs[i + 1 :]]
rng.shuffle(pairs)
with open(OUT / "pairs.tsv", "w") as f:
    for k, (a, b) in enumerate(pairs[:260]):
        base = 0.8 if a["class"] == b["class"] else 0.2
        if k % 50 == 49:
            scores = [0.1, 0.9, base]
        else:
            scores = [min(1.0, max(0.0, base + rng.uniform(-0.1, 0.1))) for _ in range(3)]
        f.write(f"{a['id']}\t{b['id']}\t{';'.join(f'{s:.2f}' for s in scores)}\n")
