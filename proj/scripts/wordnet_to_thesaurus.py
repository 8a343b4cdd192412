#!/usr/bin/env python3
"""Build a synonym thesaurus (JSON {lemma: [synonym, ...]}) from the WordNet
database files data.noun, data.verb, data.adj and data.adv.

Each synset line is "offset lex_filenum ss_type w_cnt word lex_id ...", with
w_cnt in hex. Every single-word member of a synset becomes a synonym of every
other single-word member. Multi-word lemmas (underscored) are skipped.

    scripts/wordnet_to_thesaurus.py /usr/share/wordnet/dict -o thesaurus.json \
        --vocabulary data/our_dataset.jsonl
"""
import argparse
import json
import re
import sys
from collections import defaultdict
from pathlib import Path

POS_FILES = ("data.noun", "data.verb", "data.adj", "data.adv")
WORD = re.compile(r"[A-Za-z0-9']+")


def synsets(path):
    with open(path, encoding="latin-1") as f:
        for line in f:
            if line.startswith("  "):  # license header
                continue
            fields = line.split()
            count = int(fields[3], 16)
            words = fields[4:4 + 2 * count:2]
            # adjective markers such as "(a)" trail the lemma
            yield [re.sub(r"\([a-z]+\)$", "", w).lower() for w in words]


def vocabulary(paths):
    words = set()
    for p in paths:
        for line in Path(p).read_text(encoding="utf-8").splitlines():
            if line.strip():
                words.update(w.lower() for w in WORD.findall(json.loads(line).get("prompt", "")))
    return words


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dict_dir", type=Path, help="WordNet dict directory")
    ap.add_argument("-o", "--out", type=Path, required=True)
    ap.add_argument("--vocabulary", nargs="*", default=[], help="dataset files; keep only lemmas used in their prompts")
    ap.add_argument("--max-synonyms", type=int, default=8)
    args = ap.parse_args()

    keep = vocabulary(args.vocabulary) if args.vocabulary else None
    table = defaultdict(list)
    for name in POS_FILES:
        path = args.dict_dir / name
        if not path.exists():
            sys.exit(f"missing {path}")
        for members in synsets(path):
            single = [w for w in members if "_" not in w and WORD.fullmatch(w)]
            for lemma in single:
                if keep is not None and lemma not in keep:
                    continue
                for syn in single:
                    if syn != lemma and syn not in table[lemma]:
                        table[lemma].append(syn)

    out = {k: v[: args.max_synonyms] for k, v in sorted(table.items()) if v}
    args.out.write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")
    print(f"{len(out)} lemmas written to {args.out}")


if __name__ == "__main__":
    main()
