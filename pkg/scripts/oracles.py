"""Independent oracles for the frozen golden files under tests/golden/.

Deliberately does not import embinvert: every value here is recomputed from
the raw fixture text with plain loops so the tests compare two routes.

    python scripts/oracles.py
"""
import json
import math
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIX = ROOT / "fixtures"
GOLD = ROOT / "tests" / "golden"


def corpus_stats_synth_a():
    # fixture lines are already space-separated lowercase tokens without glued punctuation
    lens = []
    for line in (FIX / "synth-A.txt").read_text().splitlines():
        n = len(line.split())
        if 4 <= n <= 64:
            lens.append(n)
    return {"n_sentences": len(lens), "avg_len": sum(lens) / len(lens), "vocab_coverage": 1.0}


def gram_counts(lines):
    table = {}
    for line in lines:
        s = " ".join(line.lower().split())
        for i in range(0, len(s) - 3):
            g = s[i] + s[i + 1] + s[i + 2] + s[i + 3]
            table[g] = table.get(g, 0) + 1
    return table


def top_k(table, k):
    buckets = {}
    for g, c in table.items():
        buckets.setdefault(c, []).append(g)
    out = []
    for c in sorted(buckets, reverse=True):
        for g in sorted(buckets[c]):
            out.append(g)
            if len(out) == k:
                return out
    return out


REPORT_COLUMNS = ("experiment", "dataset", "target_model", "attack_size", "train_size", "level",
                  "metric", "mean", "stderr", "n_trials", "significance")

REPORT_ROWS = [
    {"experiment": "in_distribution", "dataset": "synth-A-heldout", "target_model": "posmix-d64",
     "attack_size": "h32", "train_size": "200", "level": "", "metric": "bleu1", "mean": 0.25,
     "stderr": 0.01, "n_trials": 3, "significance": "", "trials": [0.24, 0.25, 0.26]},
    {"experiment": "in_distribution", "dataset": "synth-A-heldout", "target_model": "posmix-d64",
     "attack_size": "h128", "train_size": "200", "level": "", "metric": "bleu1", "mean": 0.5,
     "stderr": 0.01, "n_trials": 3, "significance": "*", "trials": [0.49, 0.5, 0.51]},
    {"experiment": "ood", "dataset": "synth-clinic, v2", "target_model": "", "attack_size": "",
     "train_size": "", "level": "synth-A.txt", "metric": "similarity", "mean": 0.1 + 0.2,
     "stderr": 0.0, "n_trials": 1, "significance": "", "trials": [0.1 + 0.2]},
]


def report_csv(rows):
    def cell(v):
        text = repr(v) if isinstance(v, float) else str(v)
        return '"' + text.replace('"', '""') + '"' if ("," in text or '"' in text) else text
    lines = [",".join(REPORT_COLUMNS)]
    lines += [",".join(cell(r[c]) for c in REPORT_COLUMNS) for r in rows]
    return "\n".join(lines) + "\n"


def main():
    GOLD.mkdir(parents=True, exist_ok=True)
    (GOLD / "synth-A-stats.json").write_text(json.dumps(corpus_stats_synth_a(), indent=1) + "\n")

    ref = (FIX / "synth-ref.txt").read_text().splitlines()
    grams = top_k(gram_counts(ref), 5000)
    (GOLD / "synth-ref-features-k5000.txt").write_text("".join(json.dumps(g) + "\n" for g in grams))

    clinic = gram_counts((FIX / "synth-clinic.txt").read_text().splitlines())
    (GOLD / "synth-clinic-counts-k5000.json").write_text(json.dumps([clinic.get(g, 0) for g in grams]) + "\n")

    # Welch t-test example a=1..5, b=2..6: equal variances 2.5, so t=-1/sqrt(1)=-1, df=8.
    # Two-sided p = I_{8/9}(4, 1/2); integrate the t density numerically as a check.
    df = 8.0
    c = math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2))
    steps = 200000
    hi = 1.0
    # P(|T|>1) = 1 - 2*int_0^1 pdf
    h = hi / steps
    acc = 0.0
    for i in range(steps + 1):
        x = i * h
        w = 1 if i in (0, steps) else (4 if i % 2 else 2)
        acc += w * c * (1 + x * x / df) ** (-(df + 1) / 2)
    p = 1 - 2 * acc * h / 3
    (GOLD / "welch_example.json").write_text(json.dumps({"t": -1.0, "df": 8.0, "p": p}, indent=1) + "\n")
    (GOLD / "report_rows.json").write_text(json.dumps(REPORT_ROWS, indent=1) + "\n")
    (GOLD / "report.csv").write_text(report_csv(REPORT_ROWS))
    print("golden files written; welch p =", p)


if __name__ == "__main__":
    main()
