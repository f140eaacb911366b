"""Regenerate the synthetic corpora under fixtures/.

    python scripts/make_fixtures.py [--out fixtures]
"""
import argparse
import json
from pathlib import Path

from embinvert.pipeline import synth

CORPORA = {
    # name: (domain or mixture, size, seed)
    "synth-A": ("bio", 6000, 1),
    "synth-A-heldout": ("bio", 600, 2),
    "synth-news": ("news", 1600, 3),
    "synth-mix": ({"bio": 0.5, "news": 0.5}, 600, 4),
    "synth-clinic": ("clinic", 600, 5),
    "synth-long": ("bio_long", 4000, 6),
    "synth-ref": ({"general": 0.5, "bio": 0.25, "news": 0.15, "clinic": 0.1}, 8000, 7),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "fixtures"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, (domain, n, seed) in CORPORA.items():
        if isinstance(domain, dict):
            lines = synth.mixture(domain, n, seed)
        else:
            lines = synth.generate(domain, n, seed)
        (out / f"{name}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"{name}: {len(lines)} sentences")
    task = synth.occupation_task(100, seed=8)
    (out / "occupation_task.json").write_text(json.dumps(task, indent=1) + "\n", encoding="utf-8")
    print("occupation_task: 100 instances")


if __name__ == "__main__":
    main()
