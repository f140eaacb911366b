"""Report rows, significance markers and file emission (CSV / JSON / .dat)."""
from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import IoFailure
from ..metrics import TrialStats, ttest_unpaired

COLUMNS = ("experiment", "dataset", "target_model", "attack_size", "train_size", "level",
           "metric", "mean", "stderr", "n_trials", "significance")


@dataclass
class ReportRow:
    experiment: str
    dataset: str
    target_model: str
    attack_size: str
    metric: str
    mean: float
    stderr: float
    n_trials: int
    train_size: str = ""
    level: str = ""
    significance: str = ""
    trials: tuple = field(default=(), repr=False)

    @classmethod
    def from_stats(cls, stats: TrialStats, **factors) -> "ReportRow":
        return cls(mean=stats.mean, stderr=stats.stderr, n_trials=stats.n_trials,
                   trials=stats.trials, **factors)

    def group_key(self) -> tuple:
        return (self.experiment, self.dataset, self.target_model, self.train_size,
                self.level, self.metric)


def mark_significance(rows: Sequence[ReportRow], alpha: float = 0.05) -> None:
    """Star the best attack size of each group when it beats every other size.

    Rows are grouped by every factor except ``attack_size``; the row with the
    highest mean receives ``*`` if a two-sided Welch test against each other
    row of its group gives p < ``alpha``.
    """
    groups: dict[tuple, list[ReportRow]] = defaultdict(list)
    for r in rows:
        if len(r.trials) >= 2:
            groups[r.group_key()].append(r)
    for members in groups.values():
        if len({m.attack_size for m in members}) < 2:
            continue
        best = max(members, key=lambda m: m.mean)
        others = [m for m in members if m is not best]
        if all(best.mean > o.mean and ttest_unpaired(best.trials, o.trials).p_value < alpha
               for o in others):
            best.significance = "*"


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def rows_to_csv(rows: Iterable[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        d = asdict(r)
        w.writerow([_fmt(d[c]) for c in COLUMNS])
    return buf.getvalue()


def rows_to_json(rows: Iterable[ReportRow]) -> str:
    payload = [{**{c: getattr(r, c) for c in COLUMNS}, "trials": list(r.trials)} for r in rows]
    return json.dumps(payload, indent=1) + "\n"


def rows_from_json(text: str) -> list[ReportRow]:
    out = []
    for d in json.loads(text):
        d = dict(d)
        d["trials"] = tuple(d.get("trials", ()))
        out.append(ReportRow(**d))
    return out


def _dat(rows: Sequence[ReportRow], x_field: str, metrics: Sequence[str]) -> str:
    """Whitespace-separated columns: x, then (mean, stderr) per metric."""
    by_x: dict[str, dict[str, ReportRow]] = defaultdict(dict)
    order: list[str] = []
    for r in rows:
        x = getattr(r, x_field)
        if x not in by_x:
            order.append(x)
        by_x[x][r.metric] = r
    head = "# " + " ".join([x_field] + [f"{m}_mean {m}_stderr" for m in metrics])
    lines = [head]
    for x in order:
        cells = [x]
        for m in metrics:
            r = by_x[x].get(m)
            cells += [_fmt(r.mean), _fmt(r.stderr)] if r else ["nan", "nan"]
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"


def emit_report(rows: Sequence[ReportRow], out_dir: str | Path, name: str,
                formats: Sequence[str] = ("csv", "json", "dat")) -> list[Path]:
    """Write ``reports/<name>.csv`` (always), optional JSON and plot data files."""
    out_dir = Path(out_dir)
    written = []
    try:
        rep = out_dir / "reports"
        rep.mkdir(parents=True, exist_ok=True)
        p = rep / f"{name}.csv"
        p.write_text(rows_to_csv(rows), encoding="utf-8")
        written.append(p)
        if "json" in formats:
            p = rep / f"{name}.json"
            p.write_text(rows_to_json(rows), encoding="utf-8")
            written.append(p)
        if "dat" in formats:
            plots = out_dir / "plots"
            sim = [r for r in rows if r.metric in ("similarity", "bleu1_beam") and r.experiment == "ood"]
            if any(r.metric == "similarity" for r in sim):
                plots.mkdir(parents=True, exist_ok=True)
                p = plots / f"{name}_similarity.dat"
                p.write_text(_dat(sim, "dataset", ["similarity", "bleu1_beam"]), encoding="utf-8")
                written.append(p)
            few = [r for r in rows if r.experiment == "few_shot"]
            if few:
                plots.mkdir(parents=True, exist_ok=True)
                p = plots / f"{name}_few_shot.dat"
                p.write_text(_dat(few, "level", ["bleu1", "rouge1", "bleu1_beam"]), encoding="utf-8")
                written.append(p)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return written
