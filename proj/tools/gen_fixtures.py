#!/usr/bin/env python3
"""Regenerates the synthetic corpora and visual feature grids under data/.

The grids use the .vfeat layout: "VFT1", u32le rows, u32le dims, then
rows*dims float32 little-endian values in row-major order.
"""
import os
import random
import struct

ROOT = os.path.join(os.path.dirname(__file__), "..", "data")
ROWS, DIMS = 4, 8


def write_vfeat(path, values):
    assert len(values) == ROWS * DIMS
    with open(path, "wb") as f:
        f.write(b"VFT1")
        f.write(struct.pack("<II", ROWS, DIMS))
        f.write(struct.pack("<%df" % len(values), *values))


def write_corpus(path, sentences):
    with open(path, "w") as f:
        for image_id, tokens in sentences:
            f.write("IMGID:%s\n" % image_id)
            for tok, lab in tokens:
                f.write("%s\t%s\n" % (tok, lab))
            f.write("\n")


def random_grid(rng):
    return [rng.uniform(-0.5, 0.5) for _ in range(ROWS * DIMS)]


def pattern_grid(sign, rng):
    # strongly signed grid with a little per-image jitter
    return [sign * 0.8 + rng.uniform(-0.05, 0.05) for _ in range(ROWS * DIMS)]


def overfit():
    out = os.path.join(ROOT, "overfit")
    feat = os.path.join(out, "features")
    os.makedirs(feat, exist_ok=True)
    rng = random.Random(11)
    sentences = [
        ("o00", [("ali", "B-PER"), ("raza", "I-PER"), ("lahore", "B-LOC"), ("gaye", "O")]),
        ("o01", [("sara", "B-PER"), ("ne", "O"), ("psl", "B-ORG"), ("dekha", "O")]),
        ("o02", [("karachi", "B-LOC"), ("mein", "O"), ("barish", "O"), ("hui", "O")]),
        ("o03", [("imran", "B-PER"), ("khan", "I-PER"), ("ne", "O"), ("taqreer", "O"), ("ki", "O")]),
        ("o04", [("quaid", "B-MISC"), ("day", "I-MISC"), ("par", "O"), ("chutti", "O")]),
        ("o05", [("nadra", "B-ORG"), ("ka", "O"), ("daftar", "O"), ("band", "O")]),
        ("o06", [("multan", "B-LOC"), ("se", "O"), ("ali", "B-PER"), ("aaye", "O")]),
        ("o07", [("ptv", "B-ORG"), ("par", "O"), ("khabrein", "O")]),
        ("o08", [("eid", "B-MISC"), ("mubarak", "O"), ("sab", "O"), ("ko", "O")]),
        ("o09", [("sara", "B-PER"), ("aur", "O"), ("raza", "B-PER"), ("aaye", "O")]),
        ("o10", [("islamabad", "B-LOC"), ("ka", "O"), ("mausam", "O"), ("acha", "O")]),
        ("o11", [("wapda", "B-ORG"), ("ne", "O"), ("bijli", "O"), ("di", "O")]),
        ("o12", [("ali", "B-PER"), ("ne", "O"), ("karachi", "B-LOC"), ("dekha", "O")]),
        ("o13", [("cricket", "O"), ("match", "O"), ("psl", "B-ORG"), ("ka", "O")]),
        ("o14", [("basant", "B-MISC"), ("ka", "O"), ("mela", "O"), ("laga", "O")]),
        ("o15", [("imran", "B-PER"), ("lahore", "B-LOC"), ("pahunche", "O")]),
        ("o16", [("quetta", "B-LOC"), ("mein", "O"), ("sardi", "O")]),
        ("o17", [("sara", "B-PER"), ("khan", "I-PER"), ("ki", "O"), ("kitab", "O")]),
        ("o18", [("ptcl", "B-ORG"), ("ka", "O"), ("network", "O"), ("behtar", "O")]),
        ("o19", [("jashn", "B-MISC"), ("e", "I-MISC"), ("azadi", "I-MISC"), ("mubarak", "O")]),
    ]
    write_corpus(os.path.join(out, "train.txt"), sentences)
    for image_id, _ in sentences:
        write_vfeat(os.path.join(feat, image_id + ".vfeat"), random_grid(rng))


def disambig():
    out = os.path.join(ROOT, "disambig")
    feat = os.path.join(out, "features")
    os.makedirs(feat, exist_ok=True)
    rng = random.Random(23)
    # "chenab" is a person name in some posts and a place in others; only the
    # image tells them apart.
    templates = [
        ["CHENAB", "bohat", "khoobsurat", "hai"],
        ["aj", "CHENAB", "dekha"],
        ["CHENAB", "ke", "baare", "mein", "suna"],
        ["sab", "log", "CHENAB", "ki", "baat", "karte"],
        ["CHENAB", "yaad", "aya"],
    ]

    def build(prefix, path):
        sentences = []
        idx = 0
        for tmpl in templates:
            for sign, label in ((+1, "B-PER"), (-1, "B-LOC")):
                image_id = "%s%02d" % (prefix, idx)
                idx += 1
                toks = [("chenab", label) if t == "CHENAB" else (t, "O") for t in tmpl]
                sentences.append((image_id, toks))
                write_vfeat(os.path.join(feat, image_id + ".vfeat"),
                            pattern_grid(sign, rng))
        write_corpus(path, sentences)

    build("d", os.path.join(out, "train.txt"))
    build("h", os.path.join(out, "heldout.txt"))


def agreement():
    rows = [
        ("PER", [360, 60, 30, 20, 15]),
        ("LOC", [40, 330, 45, 35, 35]),
        ("ORG", [25, 35, 70, 10, 8]),
        ("OTHER", [15, 30, 12, 80, 12]),
        ("O", [15, 30, 18, 15, 7605]),
    ]
    with open(os.path.join(ROOT, "agreement.csv"), "w") as f:
        f.write(",".join(name for name, _ in rows) + "\n")
        for _, counts in rows:
            f.write(",".join(str(c) for c in counts) + "\n")


def main():
    os.makedirs(ROOT, exist_ok=True)
    overfit()
    disambig()
    agreement()
    print("fixtures written to", os.path.abspath(ROOT))


if __name__ == "__main__":
    main()
