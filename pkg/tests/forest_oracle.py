"""Exhaustive greedy-split reference tree in exact rational arithmetic.

Independent of timbreid.forest: plain Python lists and Fractions, every
feature and every midpoint enumerated at every node.
"""

from fractions import Fraction


def gini_exact(labels):
    n = len(labels)
    total = Fraction(0)
    for c in set(labels):
        p = Fraction(labels.count(c), n)
        total += p * (1 - p)
    return total


def _candidates(rows, labels, features):
    parent = gini_exact(labels)
    n = len(labels)
    for f in features:
        values = sorted(set(Fraction(r[f]) for r in rows))
        for lo, hi in zip(values, values[1:]):
            thr = (lo + hi) / 2
            left = [y for r, y in zip(rows, labels) if Fraction(r[f]) <= thr]
            right = [y for r, y in zip(rows, labels) if Fraction(r[f]) > thr]
            child = (len(left) * gini_exact(left) + len(right) * gini_exact(right)) / n
            yield parent - child, f, thr


def best_split_exact(rows, labels, features):
    best = None
    for gain, f, thr in _candidates(rows, labels, features):
        # strict improvement only: earlier (lower feature, lower threshold) wins ties
        if gain > 0 and (best is None or gain > best[0]):
            best = (gain, f, thr)
    return best


def build(rows, labels, classes, min_samples_split=2):
    """Nested-dict tree: {'leaf': {class: Fraction}} or {'f','thr','left','right'}."""
    features = range(len(rows[0]))
    if len(set(labels)) > 1 and len(labels) >= min_samples_split:
        split = best_split_exact(rows, labels, features)
        if split is not None:
            _, f, thr = split
            li = [i for i, r in enumerate(rows) if Fraction(r[f]) <= thr]
            ri = [i for i, r in enumerate(rows) if Fraction(r[f]) > thr]
            return {
                "f": f,
                "thr": thr,
                "left": build([rows[i] for i in li], [labels[i] for i in li], classes),
                "right": build([rows[i] for i in ri], [labels[i] for i in ri], classes),
            }
    n = len(labels)
    return {"leaf": {c: Fraction(labels.count(c), n) for c in classes}}


def predict(tree, x):
    while "leaf" not in tree:
        tree = tree["left"] if Fraction(x[tree["f"]]) <= tree["thr"] else tree["right"]
    return tree["leaf"]
