"""Independent reference computations used by the metric tests.

Everything here is deliberately naive: exact fractions, explicit loops and
cell counting instead of the vectorised code paths under test.
"""

import random
from fractions import Fraction

from surgkit.datamodel import BoundingBox, Triplet
from surgkit.metrics.detection import Detection, ImageDetections

NULL = object()


def confusion_oracle(gt, pred):
    """accuracy, macro recall, precision, jaccard (x100) from a full confusion matrix."""
    labels = sorted({g for g in gt} | {p for p in pred if p is not None})
    idx = {c: i for i, c in enumerate(labels)}
    size = len(labels) + 1  # last column: failed parse
    matrix = [[0] * size for _ in range(len(labels))]
    for g, p in zip(gt, pred):
        matrix[idx[g]][idx[p] if p is not None else size - 1] += 1
    present = sorted(set(gt))
    rec, prec, jac = [], [], []
    for c in present:
        i = idx[c]
        tp = matrix[i][i]
        fn = sum(matrix[i]) - tp
        fp = sum(matrix[r][i] for r in range(len(labels))) - tp
        rec.append(Fraction(tp, tp + fn) if tp + fn else Fraction(0))
        prec.append(Fraction(tp, tp + fp) if tp + fp else Fraction(0))
        jac.append(Fraction(tp, tp + fp + fn) if tp + fp + fn else Fraction(0))
    acc = Fraction(sum(matrix[idx[c]][idx[c]] for c in present), len(gt))
    mean = lambda xs: sum(xs, Fraction(0)) / len(xs)
    return {k: float(100 * v) for k, v in {"accuracy": acc, "recall": mean(rec), "precision": mean(prec), "jaccard": mean(jac)}.items()}


def cell_iou(a, b):
    """IoU by counting unit cells of integer boxes."""
    cells_a = {(x, y) for x in range(int(a.x1), int(a.x2)) for y in range(int(a.y1), int(a.y2))}
    cells_b = {(x, y) for x in range(int(b.x1), int(b.x2)) for y in range(int(b.y1), int(b.y2))}
    union = len(cells_a | cells_b)
    return Fraction(len(cells_a & cells_b), union) if union else Fraction(0)


def _ap101(flags, n_gt):
    points = []
    tp = fp = 0
    for f in flags:
        tp += f
        fp += not f
        points.append((Fraction(tp, n_gt), Fraction(tp, tp + fp)))
    total = Fraction(0)
    for k in range(101):
        r = Fraction(k, 100)
        candidates = [p for rc, p in points if rc >= r]
        total += max(candidates) if candidates else 0
    return total / 101


def detection_oracle(images):
    """miou, map50, map75, coco_ap (x100) for scenes with distinct confidences."""
    thresholds = [Fraction(50 + 5 * i, 100) for i in range(10)]
    classes = sorted({g.label for img in images for g in img.gt})
    per_thr = []
    for thr in thresholds:
        aps = []
        for c in classes:
            preds = [(d.confidence, i, d) for i, img in enumerate(images) for d in img.pred if d.box.label == c]
            preds.sort(key=lambda t: -t[0])
            taken = set()
            flags = []
            for _, i, d in preds:
                best, best_v = None, None
                for j, g in enumerate(images[i].gt):
                    if g.label != c or (i, j) in taken:
                        continue
                    v = cell_iou(d.box, g)
                    if v >= thr and (best_v is None or v > best_v):
                        best, best_v = j, v
                if best is not None:
                    taken.add((i, best))
                flags.append(best is not None)
            n_gt = sum(1 for img in images for g in img.gt if g.label == c)
            aps.append(_ap101(flags, n_gt) if flags else Fraction(0))
        per_thr.append(sum(aps, Fraction(0)) / len(aps) if aps else Fraction(0))
    scores = []
    for img in images:
        if img.failed:
            scores.append(Fraction(0))
        for d in img.pred:
            same = [cell_iou(d.box, g) for g in img.gt if g.label == d.box.label]
            scores.append(max(same) if same else Fraction(0))
    miou = sum(scores, Fraction(0)) / len(scores) if scores else Fraction(0)
    return {
        "miou": float(100 * miou),
        "map50": float(100 * per_thr[0]),
        "map75": float(100 * per_thr[5]),
        "coco_ap": float(100 * sum(per_thr, Fraction(0)) / 10),
    }


def random_scene(rng, max_boxes=4, extent=8):
    def box(label):
        x1, x2 = sorted(rng.sample(range(extent + 1), 2))
        y1, y2 = sorted(rng.sample(range(extent + 1), 2))
        return BoundingBox(x1, y1, x2, y2, label)

    n_images = rng.randint(1, 3)
    confidences = rng.sample(range(1, 1000), 4 * n_images)
    images = []
    for i in range(n_images):
        gt = tuple(box(rng.choice("ab")) for _ in range(rng.randint(0, max_boxes)))
        pred = tuple(
            Detection(box(rng.choice("ab")), confidences.pop() / 1000) for _ in range(rng.randint(0, max_boxes))
        )
        images.append(ImageDetections(gt, pred, failed=not pred and rng.random() < 0.3))
    return images


def triplet_oracle(gt, pred):
    """Accuracies by counting; per-class AP in closed form for 0/1 scores."""
    n = len(gt)
    out = {}

    def class_ap(g, p):
        aps = []
        for c in sorted(set(g), key=str):
            n_rel = sum(1 for x in g if x == c)
            hit = sum(1 for x, y in zip(g, p) if y == c and x == c)
            flagged = sum(1 for y in p if y == c)
            base = Fraction(n_rel, n)
            if flagged:
                r1, p1 = Fraction(hit, n_rel), Fraction(hit, flagged)
                aps.append(r1 * p1 + (1 - r1) * base)
            else:
                aps.append(base)
        return sum(aps, Fraction(0)) / len(aps)

    for i, name in enumerate(("instrument", "verb", "target")):
        g = [t.components()[i] for t in gt]
        p = [t.components()[i] if t is not None else None for t in pred]
        out[f"{name}_accuracy"] = 100 * sum(a == b for a, b in zip(g, p)) / n
        out[f"{name}_map"] = float(100 * class_ap(g, p))
    out["triplet_accuracy"] = 100 * sum(a == b for a, b in zip(gt, pred)) / n
    out["triplet_map"] = float(100 * class_ap(list(gt), list(pred)))
    return out


def random_triplets(rng, n):
    vocab = (("grasper", "hook"), ("retract", "dissect", "clip"), ("gallbladder", "liver"))
    gt = [Triplet(*(rng.choice(v) for v in vocab)) for _ in range(n)]
    pred = [None if rng.random() < 0.1 else Triplet(*(rng.choice(v) for v in vocab)) for _ in range(n)]
    return gt, pred


def random_classification(rng):
    n = rng.randint(1, 20)
    classes = [f"c{i}" for i in range(rng.randint(1, 5))]
    gt = [rng.choice(classes) for _ in range(n)]
    pred = [None if rng.random() < 0.15 else rng.choice(classes) for _ in range(n)]
    return gt, pred
