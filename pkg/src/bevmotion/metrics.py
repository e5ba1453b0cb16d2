"""Detection and prediction evaluation: matching, AP, operating point,
displacement / cross-track errors, and uncertainty calibration curves.

Average precision uses threshold-group semantics: detections sharing a score
enter the precision-recall curve together, which makes AP invariant to both
intra-tie ordering and strictly monotone score transforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import OrientedBox, Trajectory, decompose_at_ct, rotated_iou

CLASS_IDS = ("vehicle", "pedestrian", "bicyclist")

#: Per-class rotated-IoU thresholds for detection matching.
IOU_THRESHOLDS = {"vehicle": 0.7, "pedestrian": 0.1, "bicyclist": 0.3}

DEFAULT_TARGET_RECALL = 0.8

#: Nominal coverage levels of the reliability diagram.
CALIBRATION_LEVELS = tuple(np.round(np.linspace(0.05, 0.95, 19), 2))


@dataclass
class TrajectoryDistribution:
    """Per-waypoint Laplace diversities along/across track."""

    b_at: np.ndarray
    b_ct: np.ndarray

    def __post_init__(self) -> None:
        self.b_at = np.asarray(self.b_at, dtype=float)
        self.b_ct = np.asarray(self.b_ct, dtype=float)
        if np.any(self.b_at <= 0.0) or np.any(self.b_ct <= 0.0):
            raise ValueError("diversities must be positive")
        if self.b_at.shape != self.b_ct.shape:
            raise ValueError("b_at and b_ct must have the same length")


@dataclass
class MultimodalPrediction:
    """M trajectory modes with distributions and simplex probabilities."""

    modes: tuple[tuple[Trajectory, TrajectoryDistribution, float], ...]

    def __post_init__(self) -> None:
        self.modes = tuple(self.modes)
        if len(self.modes) < 1:
            raise ValueError("a prediction needs at least one mode")
        total = sum(p for _, _, p in self.modes)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"mode probabilities must sum to 1, got {total}")

    @property
    def num_modes(self) -> int:
        return len(self.modes)

    def probabilities(self) -> np.ndarray:
        return np.array([p for _, _, p in self.modes])

    def highest_probability_index(self) -> int:
        return int(np.argmax(self.probabilities()))


@dataclass
class Detection:
    box: OrientedBox
    score: float
    class_id: str
    prediction: MultimodalPrediction

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if self.class_id not in CLASS_IDS:
            raise ValueError(f"unknown class {self.class_id!r}")


@dataclass
class LabeledActor:
    """Ground-truth box plus the actor's true future trajectory."""

    box: OrientedBox
    class_id: str
    trajectory: Trajectory
    actor_id: int = -1


@dataclass
class MatchResult:
    """Greedy matching of one frame's detections against its labels."""

    scores: np.ndarray
    is_tp: np.ndarray
    num_labels: int
    tp_pairs: list[tuple[Detection, LabeledActor]]
    fp_indices: list[int]
    fn_indices: list[int]


def match_detections(detections: list[Detection], labels: list[LabeledActor],
                     iou_threshold: float) -> MatchResult:
    """Greedily match detections to labels in descending score order.

    Each label is consumed at most once; a detection is a true positive iff
    its best still-available label reaches the IoU threshold. Ties in score
    keep input order.
    """
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    taken = [False] * len(labels)
    is_tp = np.zeros(len(detections), dtype=bool)
    tp_pairs: list[tuple[Detection, LabeledActor]] = []
    for det_idx in order:
        det = detections[det_idx]
        best_iou, best_label = 0.0, -1
        for j, label in enumerate(labels):
            if taken[j]:
                continue
            iou = rotated_iou(det.box, label.box)
            if iou > best_iou:
                best_iou, best_label = iou, j
        if best_label >= 0 and best_iou >= iou_threshold:
            taken[best_label] = True
            is_tp[det_idx] = True
            tp_pairs.append((det, labels[best_label]))
    scores = np.array([d.score for d in detections], dtype=float)
    return MatchResult(
        scores=scores,
        is_tp=is_tp,
        num_labels=len(labels),
        tp_pairs=tp_pairs,
        fp_indices=[i for i in range(len(detections)) if not is_tp[i]],
        fn_indices=[j for j in range(len(labels)) if not taken[j]],
    )


def _pool(matches: list[MatchResult]) -> tuple[np.ndarray, np.ndarray, int]:
    if matches:
        scores = np.concatenate([m.scores for m in matches])
        tp = np.concatenate([m.is_tp for m in matches])
    else:
        scores, tp = np.zeros(0), np.zeros(0, dtype=bool)
    num_labels = sum(m.num_labels for m in matches)
    return scores, tp, num_labels


def _pr_points(scores: np.ndarray, tp: np.ndarray, num_labels: int):
    """Precision/recall at every distinct score threshold, descending."""
    thresholds = np.unique(scores)[::-1]
    recalls, precisions = [], []
    for s in thresholds:
        keep = scores >= s
        n_tp = int(np.count_nonzero(tp & keep))
        n_det = int(np.count_nonzero(keep))
        recalls.append(n_tp / num_labels)
        precisions.append(n_tp / n_det)
    return thresholds, np.array(recalls), np.array(precisions)


def average_precision(matches: list[MatchResult]) -> float | None:
    """All-points-interpolated area under the precision-recall curve.

    Returns None when the dataset has no labels (AP undefined).
    """
    scores, tp, num_labels = _pool(matches)
    if num_labels == 0:
        return None
    if scores.size == 0:
        return 0.0
    _, recalls, precisions = _pr_points(scores, tp, num_labels)
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    prev = np.concatenate([[0.0], recalls[:-1]])
    return float(np.sum((recalls - prev) * envelope))


def brute_force_average_precision(matches: list[MatchResult]) -> float | None:
    """Independent AP oracle: per-threshold recount plus explicit envelope loop."""
    scores, tp, num_labels = _pool(matches)
    if num_labels == 0:
        return None
    points = []
    for s in sorted(set(float(x) for x in scores), reverse=True):
        n_tp = n_det = 0
        for score, flag in zip(scores, tp):
            if score >= s:
                n_det += 1
                if flag:
                    n_tp += 1
        points.append((n_tp / num_labels, n_tp / n_det))
    area = 0.0
    prev_recall = 0.0
    for k, (recall, _) in enumerate(points):
        best = 0.0
        for recall2, precision2 in points[k:]:
            if recall2 >= recall:
                best = max(best, precision2)
        area += (recall - prev_recall) * best
        prev_recall = recall
    return area


def operating_threshold(matches: list[MatchResult],
                        target_recall: float = DEFAULT_TARGET_RECALL
                        ) -> tuple[float, bool]:
    """Highest score threshold whose recall meets the target.

    Returns (threshold, reached). When even the lowest score cannot reach the
    target, returns the lowest available score with reached=False.
    """
    if not (0.0 < target_recall <= 1.0):
        raise ValueError(f"target_recall must be in (0, 1], got {target_recall}")
    scores, tp, num_labels = _pool(matches)
    if scores.size == 0 or num_labels == 0:
        return 0.0, False
    thresholds, recalls, _ = _pr_points(scores, tp, num_labels)
    for s, r in zip(thresholds, recalls):
        if r >= target_recall:
            return float(s), True
    return float(thresholds[-1]), False


@dataclass
class VariantErrors:
    de_cm: float
    ct_cm: float


@dataclass
class PredictionErrors:
    highest_prob: VariantErrors
    min_over_m: VariantErrors
    num_actors: int


def _mode_errors(det: Detection, label: LabeledActor, horizon_index: int):
    """(de, |ct|) per mode of one detection at the given waypoint index."""
    gt = label.trajectory.waypoints[horizon_index]
    des, cts = [], []
    for traj, _, _ in det.prediction.modes:
        wp = traj.waypoints[horizon_index]
        err = decompose_at_ct(wp, gt)
        des.append(err.norm)
        cts.append(abs(err.ct))
    return np.array(des), np.array(cts)


def prediction_errors(tp_pairs: list[tuple[Detection, LabeledActor]],
                      horizon_index: int) -> PredictionErrors | None:
    """Mean displacement and |cross-track| error at one horizon, in cm.

    highest_prob evaluates the argmax-probability mode; min_over_m picks,
    per actor, the mode with minimal displacement (ties to the lower index)
    and reports that mode's displacement and cross-track error.
    """
    if not tp_pairs:
        return None
    hp_de, hp_ct, mm_de, mm_ct = [], [], [], []
    for det, label in tp_pairs:
        des, cts = _mode_errors(det, label, horizon_index)
        hp = det.prediction.highest_probability_index()
        hp_de.append(des[hp])
        hp_ct.append(cts[hp])
        best = int(np.argmin(des))
        mm_de.append(des[best])
        mm_ct.append(cts[best])
    to_cm = lambda xs: float(np.mean(xs) * 100.0)
    return PredictionErrors(
        highest_prob=VariantErrors(de_cm=to_cm(hp_de), ct_cm=to_cm(hp_ct)),
        min_over_m=VariantErrors(de_cm=to_cm(mm_de), ct_cm=to_cm(mm_ct)),
        num_actors=len(tp_pairs),
    )


def laplace_interval_half_width(b, level):
    """Half-width of the centered interval holding ``level`` probability
    under Laplace(0, b): b * ln(1 / (1 - level))."""
    return b * np.log(1.0 / (1.0 - np.asarray(level, dtype=float)))


def reliability_diagram(tp_pairs: list[tuple[Detection, LabeledActor]],
                        horizon_index: int,
                        levels=CALIBRATION_LEVELS) -> dict[str, list[tuple[float, float]]]:
    """Nominal vs empirical coverage of the predicted Laplace intervals.

    Uses the highest-probability mode of each actor. For nominal level q the
    empirical coverage is the fraction of actors whose signed AT (resp. CT)
    error lies inside the centered q-interval of Laplace(0, b_hat).
    """
    at_err, ct_err, b_at, b_ct = [], [], [], []
    for det, label in tp_pairs:
        gt = label.trajectory.waypoints[horizon_index]
        traj, dist, _ = det.prediction.modes[det.prediction.highest_probability_index()]
        err = decompose_at_ct(traj.waypoints[horizon_index], gt)
        at_err.append(err.at)
        ct_err.append(err.ct)
        b_at.append(dist.b_at[horizon_index])
        b_ct.append(dist.b_ct[horizon_index])
    curves: dict[str, list[tuple[float, float]]] = {"at": [], "ct": []}
    errors = {"at": (np.array(at_err), np.array(b_at)),
              "ct": (np.array(ct_err), np.array(b_ct))}
    for axis, (err, b) in errors.items():
        for q in levels:
            if err.size == 0:
                curves[axis].append((float(q), float("nan")))
                continue
            half = laplace_interval_half_width(b, q)
            curves[axis].append((float(q), float(np.mean(np.abs(err) <= half))))
    return curves


@dataclass
class ClassEval:
    """Evaluation summary for one actor class."""

    class_id: str
    ap: float | None
    operating_threshold: float
    recall_target_met: bool
    num_tp_at_operating_point: int
    errors: PredictionErrors | None
    de_cm_by_horizon: list[float] = field(default_factory=list)
    calibration: dict[str, list[tuple[float, float]]] = field(default_factory=dict)


@dataclass
class EvalReport:
    """Full detection + prediction evaluation over a scenario set."""

    classes: list[ClassEval]
    target_recall: float
    horizon_index: int
    horizon_seconds: float


def evaluate_class(matches: list[MatchResult], horizon_index: int,
                   horizon_dt: float, target_recall: float = DEFAULT_TARGET_RECALL,
                   class_id: str = "vehicle",
                   levels=CALIBRATION_LEVELS) -> ClassEval:
    """Aggregate one class's matchings into AP, operating-point errors, and
    calibration curves. Prediction metrics use only TP pairs whose score
    reaches the operating threshold."""
    ap = average_precision(matches)
    threshold, reached = operating_threshold(matches, target_recall)
    tp_pairs = [pair for m in matches for pair in m.tp_pairs
                if pair[0].score >= threshold]
    errors = prediction_errors(tp_pairs, horizon_index)
    by_horizon: list[float] = []
    if tp_pairs:
        num_h = len(tp_pairs[0][1].trajectory.waypoints)
        for h in range(num_h):
            errs = prediction_errors(tp_pairs, h)
            by_horizon.append(errs.highest_prob.de_cm)
    calibration = reliability_diagram(tp_pairs, horizon_index, levels) \
        if tp_pairs else {}
    return ClassEval(
        class_id=class_id,
        ap=ap,
        operating_threshold=threshold,
        recall_target_met=reached,
        num_tp_at_operating_point=len(tp_pairs),
        errors=errors,
        de_cm_by_horizon=by_horizon,
        calibration=calibration,
    )
