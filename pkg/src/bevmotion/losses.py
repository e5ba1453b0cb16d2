"""Training losses with closed-form values and analytic first derivatives.

Every primitive accepts scalars or numpy arrays (elementwise, broadcasting)
and returns ``(value, *gradients)`` so callers can drive plain gradient
descent without autodiff. Gradients are exact for the expressions as
implemented, including clamping; the |e| subgradient at 0 is taken as 0.

The detection probability loss is implemented in the standard minimized
form -(1-q)^gamma * log(q), where q is the probability assigned to the
correct class (q = p for foreground, 1 - p for background).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Trajectory, normalize_angle

FOCAL_EPS = 1e-7
SCALE_FLOOR = 1e-4

#: Position-loss profiles selectable in trainer configs.
LOSS_PROFILES = ("smooth_l1", "kl_laplace", "kl_gaussian", "nll_laplace", "nll_gaussian")


def softplus(x):
    """Canonical positivity map for predicted scales: log(1+e^x) + floor.

    Returns:
        (value, dvalue/dx); value is always >= the 1e-4 floor.
    """
    x = np.asarray(x, dtype=float)
    value = np.logaddexp(0.0, x) + SCALE_FLOOR
    grad = 1.0 / (1.0 + np.exp(-x))
    return value, grad


def focal_loss(p_hat, is_foreground, gamma: float):
    """Binary focal loss on the existence probability of one cell.

    Args:
        p_hat: Predicted foreground probability, clamped to
            [FOCAL_EPS, 1 - FOCAL_EPS] before evaluation.
        is_foreground: Truth flag (bool or 0/1 array).
        gamma: Focusing exponent, >= 0.

    Returns:
        (value, dvalue/dp_hat). The gradient is exact for the clamped
        expression, so it is 0 where the clamp is active.
    """
    p_hat = np.asarray(p_hat, dtype=float)
    fg = np.asarray(is_foreground, dtype=bool)
    clamped = np.clip(p_hat, FOCAL_EPS, 1.0 - FOCAL_EPS)
    q = np.where(fg, clamped, 1.0 - clamped)
    one_minus_q = 1.0 - q
    log_q = np.log(q)
    value = -(one_minus_q**gamma) * log_q
    if gamma == 0.0:
        dvalue_dq = -1.0 / q
    else:
        dvalue_dq = gamma * one_minus_q ** (gamma - 1.0) * log_q - one_minus_q**gamma / q
    dq_dp = np.where(fg, 1.0, -1.0)
    active = (p_hat > FOCAL_EPS) & (p_hat < 1.0 - FOCAL_EPS)
    grad = np.where(active, dvalue_dq * dq_dp, 0.0)
    if value.ndim == 0:
        return float(value), float(grad)
    return value, grad


def smooth_l1(residual):
    """Smooth-L1 (Huber at delta=1): 0.5 r^2 inside |r|<1, |r|-0.5 outside."""
    r = np.asarray(residual, dtype=float)
    quad = np.abs(r) < 1.0
    value = np.where(quad, 0.5 * r * r, np.abs(r) - 0.5)
    grad = np.where(quad, r, np.sign(r))
    if value.ndim == 0:
        return float(value), float(grad)
    return value, grad


def _check_positive(name, x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0.0):
        raise ValueError(f"{name} must be positive")
    return arr


def laplace_kl(e_hat, b_hat, b_gt):
    """KL(Laplace(0, b_gt) || Laplace(e_hat, b_hat)).

    value = log(b_hat/b_gt) + (b_gt*exp(-|e_hat|/b_gt) + |e_hat|)/b_hat - 1,
    which is >= 0 with equality iff e_hat = 0 and b_hat = b_gt.

    Returns:
        (value, dvalue/de_hat, dvalue/db_hat).
    """
    e = np.asarray(e_hat, dtype=float)
    bh = _check_positive("b_hat", b_hat)
    bg = _check_positive("b_gt", b_gt)
    abs_e = np.abs(e)
    decay = np.exp(-abs_e / bg)
    numer = bg * decay + abs_e
    value = np.log(bh / bg) + numer / bh - 1.0
    de = np.sign(e) * (1.0 - decay) / bh
    db = 1.0 / bh - numer / (bh * bh)
    if value.ndim == 0:
        return float(value), float(de), float(db)
    return value, de, db


def gaussian_kl(e_hat, sigma_hat, sigma_gt):
    """KL(N(0, sigma_gt^2) || N(e_hat, sigma_hat^2)).

    value = log(sigma_hat/sigma_gt) + (sigma_gt^2 + e_hat^2)/(2 sigma_hat^2) - 1/2.
    """
    e = np.asarray(e_hat, dtype=float)
    sh = _check_positive("sigma_hat", sigma_hat)
    sg = _check_positive("sigma_gt", sigma_gt)
    value = np.log(sh / sg) + (sg * sg + e * e) / (2.0 * sh * sh) - 0.5
    de = e / (sh * sh)
    ds = 1.0 / sh - (sg * sg + e * e) / (sh**3)
    if value.ndim == 0:
        return float(value), float(de), float(ds)
    return value, de, ds


def laplace_nll(e_hat, b_hat):
    """Negative log-likelihood of e_hat under Laplace(0, b_hat)."""
    e = np.asarray(e_hat, dtype=float)
    bh = _check_positive("b_hat", b_hat)
    abs_e = np.abs(e)
    value = np.log(2.0 * bh) + abs_e / bh
    de = np.sign(e) / bh
    db = 1.0 / bh - abs_e / (bh * bh)
    if value.ndim == 0:
        return float(value), float(de), float(db)
    return value, de, db


def gaussian_nll(e_hat, sigma_hat):
    """Negative log-likelihood of e_hat under N(0, sigma_hat^2)."""
    e = np.asarray(e_hat, dtype=float)
    sh = _check_positive("sigma_hat", sigma_hat)
    value = 0.5 * np.log(2.0 * math.pi * sh * sh) + e * e / (2.0 * sh * sh)
    de = e / (sh * sh)
    ds = 1.0 / sh - e * e / (sh**3)
    if value.ndim == 0:
        return float(value), float(de), float(ds)
    return value, de, ds


@dataclass
class DiversitySchedule:
    """Linear-in-time target scales b(t) = alpha + beta * t, per axis.

    Alphas may be zero only for the degenerate no-noise case; losses that
    consume the schedule as a target reject non-positive values themselves.
    """

    alpha_at: float = 0.2
    beta_at: float = 0.3
    alpha_ct: float = 0.2
    beta_ct: float = 0.1

    def __post_init__(self) -> None:
        for name in ("alpha_at", "beta_at", "alpha_ct", "beta_ct"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")

    def at(self, t):
        return self.alpha_at + self.beta_at * np.asarray(t, dtype=float)

    def ct(self, t):
        return self.alpha_ct + self.beta_ct * np.asarray(t, dtype=float)


def diversity_at(schedule: DiversitySchedule, t, axis: str):
    """Target diversity at time t for axis "at" or "ct"."""
    if axis == "at":
        out = schedule.at(t)
    elif axis == "ct":
        out = schedule.ct(t)
    else:
        raise ValueError(f"axis must be 'at' or 'ct', got {axis!r}")
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class LossWeights:
    """Per-horizon decay and focal focusing exponent."""

    lambda_decay: float = 0.97
    gamma_focal: float = 2.0

    def __post_init__(self) -> None:
        if not (0.0 < self.lambda_decay < 1.0):
            raise ValueError(f"lambda_decay must be in (0, 1), got {self.lambda_decay}")
        if self.gamma_focal < 0.0:
            raise ValueError(f"gamma_focal must be >= 0, got {self.gamma_focal}")


@dataclass
class ModeAssignment:
    """Ground-truth mode index and the (-pi, pi] bin edges that produced it."""

    mode_index: int
    bin_edges: np.ndarray


def mode_bin_edges(num_modes: int) -> np.ndarray:
    if num_modes < 1:
        raise ValueError(f"num_modes must be >= 1, got {num_modes}")
    return np.linspace(-math.pi, math.pi, num_modes + 1)


def mode_index_for_delta(delta_theta: float, num_modes: int) -> int:
    """Bin of delta_theta under the M-way equal partition of (-pi, pi].

    Bins are half-open from the left, (edge_m, edge_{m+1}], so index 0 is the
    most-negative (right-turn) side and M-1 the most-positive (left-turn) side.
    """
    if num_modes < 1:
        raise ValueError(f"num_modes must be >= 1, got {num_modes}")
    delta = normalize_angle(delta_theta)
    bin_width = 2.0 * math.pi / num_modes
    idx = math.ceil((delta + math.pi) / bin_width) - 1
    return min(max(idx, 0), num_modes - 1)


def assign_mode(traj_gt: Trajectory, current_heading: float, num_modes: int) -> ModeAssignment:
    """Ground-truth mode from the heading change over the horizon.

    delta = normalize(theta_H - theta_0) with theta_H the final waypoint
    heading of ``traj_gt`` and theta_0 the actor's current heading.
    """
    delta = normalize_angle(traj_gt.waypoints[-1].heading - current_heading)
    return ModeAssignment(
        mode_index=mode_index_for_delta(delta, num_modes),
        bin_edges=mode_bin_edges(num_modes),
    )


def mode_cross_entropy(logits: np.ndarray, mode_gt):
    """Cross entropy of softmax(logits) against a hard mode label.

    Args:
        logits: (..., M) unnormalized mode scores.
        mode_gt: (...) integer labels in [0, M).

    Returns:
        (value (...), dvalue/dlogits (..., M)); the gradient is
        softmax(logits) - onehot(mode_gt).
    """
    logits = np.asarray(logits, dtype=float)
    mode_idx = np.asarray(mode_gt, dtype=int)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_norm
    probs = np.exp(log_probs)
    value = -np.take_along_axis(log_probs, mode_idx[..., None], axis=-1)[..., 0]
    grad = probs.copy()
    selected = np.take_along_axis(grad, mode_idx[..., None], axis=-1) - 1.0
    np.put_along_axis(grad, mode_idx[..., None], selected, axis=-1)
    if mode_idx.ndim == 0:
        return float(value), grad
    return value, grad


def _position_terms(profile: str, delta: np.ndarray, gt_headings: np.ndarray,
                    scale_raw, schedule: DiversitySchedule | None, times: np.ndarray):
    """Per-horizon position loss and gradients in the ground-truth frame.

    Args:
        profile: One of LOSS_PROFILES.
        delta: (..., H, 2) predicted-minus-truth center displacement.
        gt_headings: (..., H) ground-truth headings defining the AT/CT frame.
        scale_raw: (..., H, 2) unconstrained scale pre-activations (AT, CT),
            mapped through softplus; ignored (may be None) for "smooth_l1".
        schedule: Target diversities, required for the KL profiles.
        times: (H,) horizon times in seconds.

    Returns:
        (value (..., H), dvalue/ddelta (..., H, 2), dvalue/dscale_raw (..., H, 2)).
    """
    if profile not in LOSS_PROFILES:
        raise ValueError(f"unknown loss profile {profile!r}; valid: {LOSS_PROFILES}")

    if profile == "smooth_l1":
        v, g = smooth_l1(delta)
        value = np.asarray(v).sum(axis=-1)
        d_scale = np.zeros_like(delta) if scale_raw is None else np.zeros_like(
            np.asarray(scale_raw, dtype=float))
        return value, np.asarray(g), d_scale

    if scale_raw is None:
        raise ValueError(f"profile {profile!r} needs scale pre-activations")
    scale_raw = np.asarray(scale_raw, dtype=float)
    cos_h = np.cos(gt_headings)
    sin_h = np.sin(gt_headings)
    e_at = delta[..., 0] * cos_h + delta[..., 1] * sin_h
    e_ct = -delta[..., 0] * sin_h + delta[..., 1] * cos_h
    scale, d_scale_map = softplus(scale_raw)
    s_at, s_ct = scale[..., 0], scale[..., 1]

    if profile == "kl_laplace":
        if schedule is None:
            raise ValueError("kl_laplace needs a diversity schedule")
        v_at, de_at, ds_at = laplace_kl(e_at, s_at, schedule.at(times))
        v_ct, de_ct, ds_ct = laplace_kl(e_ct, s_ct, schedule.ct(times))
    elif profile == "kl_gaussian":
        if schedule is None:
            raise ValueError("kl_gaussian needs a diversity schedule")
        v_at, de_at, ds_at = gaussian_kl(e_at, s_at, schedule.at(times))
        v_ct, de_ct, ds_ct = gaussian_kl(e_ct, s_ct, schedule.ct(times))
    elif profile == "nll_laplace":
        v_at, de_at, ds_at = laplace_nll(e_at, s_at)
        v_ct, de_ct, ds_ct = laplace_nll(e_ct, s_ct)
    else:  # nll_gaussian
        v_at, de_at, ds_at = gaussian_nll(e_at, s_at)
        v_ct, de_ct, ds_ct = gaussian_nll(e_ct, s_ct)

    value = np.asarray(v_at) + np.asarray(v_ct)
    d_delta = np.empty_like(delta)
    d_delta[..., 0] = de_at * cos_h - de_ct * sin_h
    d_delta[..., 1] = de_at * sin_h + de_ct * cos_h
    d_raw = np.stack([ds_at * d_scale_map[..., 0], ds_ct * d_scale_map[..., 1]], axis=-1)
    return value, d_delta, d_raw


def trajectory_loss(pred_centers, pred_sincos, scale_raw, truth_centers,
                    truth_headings, weights: LossWeights, profile: str = "smooth_l1",
                    schedule: DiversitySchedule | None = None,
                    horizon_dt: float = 0.1, start_horizon: int = 1):
    """Decayed per-horizon position + heading loss over H future steps.

    Horizon h (1-based by default) is weighted by lambda^h; position terms
    follow ``profile``, heading terms are always smooth-L1 on the raw
    (sin, cos) pair. All arrays may carry leading batch dimensions.

    Args:
        pred_centers: (..., H, 2) predicted waypoint positions.
        pred_sincos: (..., H, 2) predicted (sin, cos) heading pairs.
        scale_raw: (..., H, 2) scale pre-activations or None for smooth_l1.
        truth_centers: (..., H, 2) ground-truth waypoint positions.
        truth_headings: (..., H) ground-truth headings.
        start_horizon: Exponent (and time index) of the first row; row i is
            horizon h = start_horizon + i at time h * horizon_dt.

    Returns:
        (value (...,), grads dict with d_centers, d_sincos, d_scale_raw).
    """
    pred_centers = np.asarray(pred_centers, dtype=float)
    pred_sincos = np.asarray(pred_sincos, dtype=float)
    truth_centers = np.asarray(truth_centers, dtype=float)
    truth_headings = np.asarray(truth_headings, dtype=float)
    num_h = pred_centers.shape[-2]
    if truth_centers.shape[-2] != num_h or truth_headings.shape[-1] != num_h \
            or pred_sincos.shape[-2] != num_h:
        raise ValueError("prediction and truth horizon counts differ")

    horizons = np.arange(start_horizon, start_horizon + num_h, dtype=float)
    times = horizons * horizon_dt
    decay = weights.lambda_decay**horizons

    delta = pred_centers - truth_centers
    pos_val, d_delta, d_raw = _position_terms(
        profile, delta, truth_headings, scale_raw, schedule, times)

    truth_sincos = np.stack([np.sin(truth_headings), np.cos(truth_headings)], axis=-1)
    head_val, head_grad = smooth_l1(pred_sincos - truth_sincos)
    head_val = np.asarray(head_val).sum(axis=-1)

    value = ((pos_val + head_val) * decay).sum(axis=-1)
    grads = {
        "d_centers": d_delta * decay[..., None],
        "d_sincos": np.asarray(head_grad) * decay[..., None],
        "d_scale_raw": d_raw * decay[..., None],
    }
    if np.ndim(value) == 0:
        value = float(value)
    return value, grads


@dataclass
class CellPrediction:
    """Raw per-cell outputs: detection head plus H future horizons.

    ``centers``/``sincos``/``scale_raw`` carry H+1 rows; row 0 is the current
    (detection) step, rows 1..H the future waypoints.
    """

    prob: float
    length: float = 0.0
    width: float = 0.0
    centers: np.ndarray = field(default_factory=lambda: np.zeros((1, 2)))
    sincos: np.ndarray = field(default_factory=lambda: np.zeros((1, 2)))
    scale_raw: np.ndarray | None = None


@dataclass
class CellTruth:
    """Ground truth for one BEV cell; only ``foreground`` matters when False."""

    foreground: bool
    length: float = 0.0
    width: float = 0.0
    centers: np.ndarray = field(default_factory=lambda: np.zeros((1, 2)))
    headings: np.ndarray = field(default_factory=lambda: np.zeros(1))


@dataclass
class CellGradients:
    d_prob: float
    d_length: float
    d_width: float
    d_centers: np.ndarray
    d_sincos: np.ndarray
    d_scale_raw: np.ndarray


def horizon_loss(pred: CellPrediction, truth: CellTruth, weights: LossWeights,
                 profile: str = "smooth_l1",
                 schedule: DiversitySchedule | None = None,
                 horizon_dt: float = 0.1) -> tuple[float, CellGradients]:
    """Full per-cell loss: focal detection terms plus decayed trajectory terms.

    Background cells contribute only the focal term. Foreground cells get,
    at horizon 0, focal + smooth-L1 on the box extents, and at every horizon
    h = 0..H (weight lambda^h) the position and heading terms of
    :func:`trajectory_loss`.
    """
    centers = np.asarray(pred.centers, dtype=float)
    sincos = np.asarray(pred.sincos, dtype=float)
    zeros = lambda like: np.zeros_like(np.asarray(like, dtype=float))

    focal_val, focal_grad = focal_loss(pred.prob, truth.foreground, weights.gamma_focal)
    if not truth.foreground:
        return float(focal_val), CellGradients(
            d_prob=float(focal_grad), d_length=0.0, d_width=0.0,
            d_centers=zeros(centers), d_sincos=zeros(sincos),
            d_scale_raw=zeros(pred.scale_raw) if pred.scale_raw is not None else zeros(centers),
        )

    truth_centers = np.asarray(truth.centers, dtype=float)
    if centers.shape[0] != truth_centers.shape[0]:
        raise ValueError("prediction and truth horizon counts differ")

    len_val, len_grad = smooth_l1(pred.length - truth.length)
    wid_val, wid_grad = smooth_l1(pred.width - truth.width)

    traj_val, traj_grads = trajectory_loss(
        centers, sincos, pred.scale_raw, truth_centers,
        np.asarray(truth.headings, dtype=float), weights, profile, schedule,
        horizon_dt, start_horizon=0)

    value = float(focal_val) + float(len_val) + float(wid_val) + float(traj_val)
    return value, CellGradients(
        d_prob=float(focal_grad),
        d_length=float(len_grad),
        d_width=float(wid_grad),
        d_centers=traj_grads["d_centers"],
        d_sincos=traj_grads["d_sincos"],
        d_scale_raw=traj_grads["d_scale_raw"],
    )


@dataclass
class ModeGradients:
    d_centers: np.ndarray
    d_sincos: np.ndarray
    d_scale_raw: np.ndarray
    d_logits: np.ndarray
    mode_gt: int


def multimodal_loss(mode_centers, mode_sincos, mode_scale_raw, mode_logits,
                    traj_gt: Trajectory, current_heading: float,
                    weights: LossWeights, profile: str = "kl_laplace",
                    schedule: DiversitySchedule | None = None) -> tuple[float, ModeGradients]:
    """Direction-binned multimodal loss for one actor.

    The trajectory terms are evaluated only on the ground-truth mode (the
    direction bin of the heading change); every mode contributes through the
    cross-entropy on softmax(mode_logits). Non-selected modes receive exactly
    zero trajectory gradient.

    Args:
        mode_centers: (M, H, 2) per-mode predicted waypoints.
        mode_sincos: (M, H, 2) per-mode heading pairs.
        mode_scale_raw: (M, H, 2) scale pre-activations (None for smooth_l1).
        mode_logits: (M,) unnormalized mode scores.
        traj_gt: Ground-truth future trajectory (defines H and horizon_dt).
        current_heading: Actor heading at the prediction time.
    """
    mode_centers = np.asarray(mode_centers, dtype=float)
    mode_sincos = np.asarray(mode_sincos, dtype=float)
    logits = np.asarray(mode_logits, dtype=float)
    num_modes = logits.shape[0]
    if mode_centers.shape[0] != num_modes:
        raise ValueError("mode count mismatch between logits and trajectories")

    assignment = assign_mode(traj_gt, current_heading, num_modes)
    m_gt = assignment.mode_index

    scale_sel = None if mode_scale_raw is None else np.asarray(mode_scale_raw, dtype=float)[m_gt]
    traj_val, traj_grads = trajectory_loss(
        mode_centers[m_gt], mode_sincos[m_gt], scale_sel,
        traj_gt.centers(), traj_gt.headings(), weights, profile, schedule,
        traj_gt.horizon_dt, start_horizon=1)

    ce_val, ce_grad = mode_cross_entropy(logits, m_gt)

    d_centers = np.zeros_like(mode_centers)
    d_sincos = np.zeros_like(mode_sincos)
    d_scale = np.zeros_like(mode_centers) if mode_scale_raw is None \
        else np.zeros_like(np.asarray(mode_scale_raw, dtype=float))
    d_centers[m_gt] = traj_grads["d_centers"]
    d_sincos[m_gt] = traj_grads["d_sincos"]
    if mode_scale_raw is not None:
        d_scale[m_gt] = traj_grads["d_scale_raw"]

    return float(traj_val) + float(ce_val), ModeGradients(
        d_centers=d_centers, d_sincos=d_sincos, d_scale_raw=d_scale,
        d_logits=ce_grad, mode_gt=m_gt,
    )
