"""Edge-level precision / recall / F1 against a ground-truth graph."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .graphs import GroundTruth

RUN_COLUMNS = ("method", "d", "degree", "n", "noise", "seed", "precision", "recall", "f1", "seconds")


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    mode: str = "directed"
    seconds: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def rates(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, F1 with P=0 on no predictions and R=1 on empty truth."""
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 1.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def _binary(pred, d: int) -> np.ndarray:
    if isinstance(pred, GroundTruth):
        pred = pred.directed
    A = np.asarray(getattr(pred, "adjacency", pred)) != 0
    if A.shape != (d, d):
        raise ValueError(f"dimension mismatch: predicted {A.shape}, truth d={d}")
    A = A.copy()
    np.fill_diagonal(A, False)
    return A


def evaluate(predicted, truth: GroundTruth, mode: str = "directed", seconds: float | None = None) -> EvalReport:
    """Score a predicted graph (adjacency, Dag or GroundTruth) against ``truth``.

    directed: ordered pairs; a bidirected truth pair is one target met by either
    orientation. skeleton: unordered pairs of directed plus bidirected edges.
    """
    d = truth.d
    A = _binary(predicted, d)
    if mode == "skeleton":
        P = np.triu(A | A.T, 1)
        T = np.triu(truth.skeleton(), 1)
        tp = int((P & T).sum())
        return EvalReport(*rates(tp, int(P.sum()) - tp, int(T.sum()) - tp), tp, int(P.sum()) - tp,
                          int(T.sum()) - tp, mode, seconds)
    if mode != "directed":
        raise ValueError("mode must be 'directed' or 'skeleton'")
    D = np.asarray(truth.directed) != 0
    used = A & D
    tp = int(used.sum())
    fn = int(D.sum()) - tp
    free = A & ~D
    for i, j in truth.bidirected_edges:
        if free[i, j]:
            free[i, j] = False
            tp += 1
        elif free[j, i]:
            free[j, i] = False
            tp += 1
        else:
            fn += 1
    fp = int(free.sum())
    return EvalReport(*rates(tp, fp, fn), tp, fp, fn, mode, seconds)


def rows_to_csv(rows: list[dict], path=None, columns=RUN_COLUMNS) -> str:
    """CSV with ``columns`` first, then any remaining keys in sorted order."""
    extra = sorted({k for r in rows for k in r} - set(columns))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns) + extra, lineterminator="\n", extrasaction="raise")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
