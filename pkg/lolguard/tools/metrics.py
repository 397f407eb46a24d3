"""
confusion-matrix metrics (malicious is the positive class)
and the plain-text evaluation tables
"""

from dataclasses import dataclass, asdict

from lolguard.methods.vocabulary import Label
from lolguard.tools.errors import LengthMismatch


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(float(d['accuracy']), float(d['precision']), float(d['recall']), float(d['f1']),
                   int(d['tp']), int(d['fp']), int(d['tn']), int(d['fn']))


def _positive(label):
    return Label(label).positive


def compute_metrics(predicted, truth):
    if len(predicted) != len(truth):
        raise LengthMismatch('{} predictions for {} labels'.format(len(predicted), len(truth)))
    if not len(truth):
        raise LengthMismatch('no labels to score')
    tp = fp = tn = fn = 0
    for p, t in zip(predicted, truth):
        p, t = _positive(p), _positive(t)
        if p and t:
            tp += 1
        elif p:
            fp += 1
        elif t:
            fn += 1
        else:
            tn += 1
    precision = tp/(tp + fp) if (tp + fp) else 0.
    recall = tp/(tp + fn) if (tp + fn) else 0.
    f1 = 2.*precision*recall/(precision + recall) if (precision + recall) else 0.
    accuracy = (tp + tn)/(tp + fp + tn + fn)
    return Metrics(accuracy, precision, recall, f1, tp, fp, tn, fn)


def fmt_score(x):
    """1.0 stays ``1.0``, anything else gets four decimals"""
    if x == 1.:
        return '1.0'
    return '{:.4f}'.format(x)


def macro_average(metrics):
    """unweighted mean over binaries: (accuracy, precision, recall, f1)"""
    metrics = list(metrics)
    if not metrics:
        return None
    n = float(len(metrics))
    return (sum(m.accuracy for m in metrics)/n, sum(m.precision for m in metrics)/n,
            sum(m.recall for m in metrics)/n, sum(m.f1 for m in metrics)/n)


def format_model_table(rows):
    """
    per-binary evaluation table with an AVERAGE row

    Parameters
    ----------

    rows : sequence of (binary, kind, Metrics or None)
        None marks a binary trained without a test split, printed as ``---``
        and left out of the average.
    """
    header = ('', 'Classifier', 'Accuracy', 'Precision', 'Recall', 'F1 Score')
    lines = list()
    for binary, kind, m in sorted(rows, key=lambda r: r[0]):
        if m is None:
            lines.append((binary, kind, '---', '---', '---', '---'))
        else:
            lines.append((binary, kind, fmt_score(m.accuracy), fmt_score(m.precision),
                          fmt_score(m.recall), fmt_score(m.f1)))
    avg = macro_average(m for _, _, m in rows if m is not None)
    if avg is None:
        footer = ('AVERAGE', '---', '---', '---', '---', '---')
    else:
        footer = ('AVERAGE', '---') + tuple(fmt_score(x) for x in avg)
    return _render(header, lines, footer)


def format_detection_table(counts):
    """
    detected/total per binary with a TOTAL row

    Parameters
    ----------

    counts : mapping binary -> (detected, total)
    """
    header = ('', 'Model')
    lines = [(b, '{}/{}'.format(d, t)) for b, (d, t) in sorted(counts.items())]
    detected = sum(d for d, _ in counts.values())
    total = sum(t for _, t in counts.values())
    return _render(header, lines, ('TOTAL', '{}/{}'.format(detected, total)))


def _render(header, lines, footer):
    table = [header] + list(lines) + [footer]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]

    def row(r):
        return ' | '.join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))).rstrip()

    rule = '-+-'.join('-'*w for w in widths)
    out = [row(header), rule.replace('-', '=')]
    out.extend(row(r) for r in lines)
    out.append(rule)
    out.append(row(footer))
    return '\n'.join(out)
