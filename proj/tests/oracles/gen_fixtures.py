#!/usr/bin/env python3
"""Generate test fixtures and their reference answers.

The reference answers are computed here from first principles, without the
C++ code, and frozen next to the fixtures:

  grouping/  200 records x 8 scripted scorers, brute-force group table,
             sha256 of the canonical matrix serialization
  sac10/     10 harmless records whose votes are 0,0,2,3,3,5,6,7,8,8

Run from the repository root:  python3 tests/oracles/gen_fixtures.py
"""

import hashlib
import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data"
GROUPS = ["NoAgree", "LowAgree", "HighAgree", "AllAgree"]


def dump(obj):
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def record(rid, split, i):
    return {
        "id": rid,
        "split": split,
        "context": [{"role": "human", "text": f"question {i}"}],
        "chosen": f"chosen answer {i}",
        "rejected": f"rejected answer {i}",
        "meta": {},
    }


def bucket(v, m):
    # Spelled out case by case rather than shared with the library.
    if v == 0:
        return "NoAgree"
    if v == m:
        return "AllAgree"
    low_top = m // 2 - 1
    if 1 <= v <= low_top:
        return "LowAgree"
    return "HighAgree"


def write_jsonl(path, rows):
    path.write_text("".join(dump(r) + "\n" for r in rows), encoding="utf-8")


def matrix_rows(scores, scorers):
    rows = []
    for rid in sorted(scores):
        for j, name in enumerate(scorers):
            c, r = scores[rid][j]
            rows.append({"record_id": rid, "scorer": name,
                         "reward_chosen": c, "reward_rejected": r})
    return rows


def grouping():
    rng = random.Random(20240611)
    d = OUT / "grouping"
    d.mkdir(parents=True, exist_ok=True)
    scorers = [f"rm{j}" for j in range(8)]
    records, scores = [], {}
    for i in range(200):
        rid = f"g-{i:03d}"
        split = rng.choice(["harmless", "helpful"])
        records.append(record(rid, split, i))
        # A per-record bias spreads records over all four groups; half-step
        # rewards make exact ties common.
        bias = rng.choice([-12, -3, 0, 3, 12])
        row = []
        for _ in scorers:
            c = (rng.randint(-6, 6) + bias) / 2
            r = rng.randint(-6, 6) / 2
            row.append((float(c), float(r)))
        scores[rid] = row
    write_jsonl(d / "dataset.jsonl", records)
    rows = matrix_rows(scores, scorers)
    write_jsonl(d / "matrix.jsonl", rows)
    (d / "matrix.jsonl.meta.json").write_text(json.dumps({
        "scorers": [{"name": s, "kind": "file"} for s in scorers],
        "provenance": {"generator": "gen_fixtures.py"},
    }, indent=2) + "\n")

    # Brute force: count every (record, group) pair directly.
    table = {"harmless": {g: 0 for g in GROUPS},
             "helpful": {g: 0 for g in GROUPS},
             "Total": {g: 0 for g in GROUPS}}
    votes = {}
    for rec in records:
        v = 0
        for c, r in scores[rec["id"]]:
            if c > r:
                v += 1
        votes[rec["id"]] = v
        g = bucket(v, len(scorers))
        table[rec["split"]][g] += 1
        table["Total"][g] += 1
    expected = {}
    for row, counts in table.items():
        n = sum(counts.values())
        expected[row] = {
            "n": n,
            "counts": counts,
            "percent": {g: (100.0 * counts[g] / n if n else None) for g in GROUPS},
        }
    (d / "expected_stats.json").write_text(json.dumps(expected, indent=2) + "\n")
    (d / "expected_votes.json").write_text(json.dumps(votes, indent=2, sort_keys=True) + "\n")
    text = "".join(dump(r) + "\n" for r in rows)
    (d / "expected_hash.txt").write_text(hashlib.sha256(text.encode()).hexdigest() + "\n")


def sac10():
    d = OUT / "sac10"
    d.mkdir(parents=True, exist_ok=True)
    votes = [0, 0, 2, 3, 3, 5, 6, 7, 8, 8]
    scorers = [f"rm{j}" for j in range(8)]
    records, scores = [], {}
    for i, v in enumerate(votes):
        rid = f"h-{i:02d}"
        records.append(record(rid, "harmless", i))
        # Scorer j agrees exactly when j < v.
        scores[rid] = [(1.0, 0.0) if j < v else (0.0, 1.0) for j in range(8)]
    write_jsonl(d / "dataset.jsonl", records)
    write_jsonl(d / "matrix.jsonl", matrix_rows(scores, scorers))


if __name__ == "__main__":
    grouping()
    sac10()
