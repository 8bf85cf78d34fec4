"""Differentiable objectives: BCE, soft a-DCF and the combined SASV losses.

Every function returns the loss value together with exact gradients w.r.t.
its score inputs (and the soft threshold tau where applicable), so the
training loop can chain them through the scoring heads by hand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TrialLabel, label_maps
from .metrics import default_system_cost

PROB_EPS = 1e-7


@dataclass
class SoftAdcfConfig:
    cost_model: object
    tau: float = 0.0
    alpha: float = 1.0
    normalized: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not math.isfinite(self.tau):
            raise ValueError("tau must be finite")


@dataclass(frozen=True)
class LossWeights:
    beta1: float = 1.0
    beta2: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0

    def __post_init__(self):
        vals = (self.beta1, self.beta2, self.lambda1, self.lambda2,
                self.lambda3)
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be nonnegative")
        if self.beta1 == 0 and self.beta2 == 0:
            raise ValueError("v1 weights are all zero")
        if self.lambda1 == 0 and self.lambda2 == 0 and self.lambda3 == 0:
            raise ValueError("v2 weights are all zero")


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce(value, y, input_kind="logit"):
    """Binary cross-entropy of one prediction; returns (loss, dloss/dinput).

    "logit" uses the numerically stable fused form; "probability" clamps the
    input to [eps, 1-eps] first.
    """
    if input_kind == "logit":
        x = float(value)
        loss = max(x, 0.0) - x * y + math.log1p(math.exp(-abs(x)))
        grad = float(_sigmoid(np.array(x))) - y
        return loss, grad
    if input_kind == "probability":
        p = min(max(float(value), PROB_EPS), 1.0 - PROB_EPS)
        loss = -(y * math.log(p) + (1 - y) * math.log(1.0 - p))
        grad = (p - y) / (p * (1.0 - p))
        return loss, grad
    raise ValueError(f"unknown input kind {input_kind!r}")


def bce_logits_mean(logits, ys):
    """Mean stable logit-BCE over a batch; returns (loss, grad_per_logit)."""
    x = np.asarray(logits, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty batch in BCE")
    losses = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    grads = (_sigmoid(x) - y) / x.size
    return float(np.mean(losses)), grads


def _class_masks(labels):
    lab = np.array([l.value for l in labels])
    masks = {
        TrialLabel.TARGET: lab == TrialLabel.TARGET.value,
        TrialLabel.NONTARGET: lab == TrialLabel.NONTARGET.value,
        TrialLabel.SPOOF: lab == TrialLabel.SPOOF.value,
    }
    for label, mask in masks.items():
        if not np.any(mask):
            raise ValueError(f"no {label.value} trials in batch; "
                             "soft a-DCF needs all three classes")
    return masks


def soft_adcf(scores, labels, cfg):
    """Sigmoid-relaxed a-DCF; returns (loss, grad_scores, grad_tau).

    Soft miss rate is the target-class mean of sigmoid(alpha (tau - s));
    soft false-alarm rates are the class means of sigmoid(alpha (s - tau)).
    """
    s = np.asarray(scores, dtype=np.float64)
    masks = _class_masks(labels)
    cm = cfg.cost_model
    a = cfg.alpha
    grad = np.zeros_like(s)
    grad_tau = 0.0
    loss = 0.0
    specs = (
        (TrialLabel.TARGET, cm.c_miss_tar * cm.pi_tar, -1.0),
        (TrialLabel.NONTARGET, cm.c_fa_non * cm.pi_non, +1.0),
        (TrialLabel.SPOOF, cm.c_fa_spf * cm.pi_spf, +1.0),
    )
    for label, weight, sign in specs:
        mask = masks[label]
        z = sign * a * (s[mask] - cfg.tau)
        p = _sigmoid(z)
        loss += weight * float(np.mean(p))
        d = weight * a * p * (1.0 - p) / np.count_nonzero(mask)
        grad[mask] += sign * d
        grad_tau += -sign * float(np.sum(d))
    if cfg.normalized:
        norm = default_system_cost(cm)
        loss /= norm
        grad /= norm
        grad_tau /= norm
    return loss, grad, grad_tau


def combined_loss_v1(s_sasv, labels, weights, cfg):
    """beta1 * soft a-DCF + beta2 * mean BCE(sigmoid(s_sasv), y_sasv)."""
    s = np.asarray(s_sasv, dtype=np.float64)
    loss = 0.0
    grad = np.zeros_like(s)
    grad_tau = 0.0
    if weights.beta1 > 0:
        l_adcf, g_adcf, g_tau = soft_adcf(s, labels, cfg)
        loss += weights.beta1 * l_adcf
        grad += weights.beta1 * g_adcf
        grad_tau += weights.beta1 * g_tau
    if weights.beta2 > 0:
        y = np.array([label_maps(l)[0] for l in labels], dtype=np.float64)
        l_bce, g_bce = bce_logits_mean(s, y)
        loss += weights.beta2 * l_bce
        grad += weights.beta2 * g_bce
    return loss, grad, grad_tau


def combined_loss_v2(llr_asv, llr_cm, s_sasv, labels, weights, cfg):
    """lambda1 * soft a-DCF + lambda2 * aux ASV BCE + lambda3 * aux CM BCE.

    The aux ASV term is averaged over non-spoof trials only (spoof trials
    carry no speaker-detection label).  Returns
    (loss, grad_s_sasv, grad_llr_asv, grad_llr_cm, grad_tau).
    """
    s = np.asarray(s_sasv, dtype=np.float64)
    la = np.asarray(llr_asv, dtype=np.float64)
    lc = np.asarray(llr_cm, dtype=np.float64)
    loss = 0.0
    grad_s = np.zeros_like(s)
    grad_la = np.zeros_like(la)
    grad_lc = np.zeros_like(lc)
    grad_tau = 0.0
    if weights.lambda1 > 0:
        l_adcf, g_adcf, g_tau = soft_adcf(s, labels, cfg)
        loss += weights.lambda1 * l_adcf
        grad_s += weights.lambda1 * g_adcf
        grad_tau += weights.lambda1 * g_tau
    maps = [label_maps(l) for l in labels]
    if weights.lambda2 > 0:
        keep = np.array([m[1] is not None for m in maps])
        if not np.any(keep):
            raise ValueError("aux ASV BCE needs at least one bonafide trial")
        y_asv = np.array([m[1] for m in maps if m[1] is not None],
                         dtype=np.float64)
        l_asv, g_asv = bce_logits_mean(la[keep], y_asv)
        loss += weights.lambda2 * l_asv
        grad_la[keep] += weights.lambda2 * g_asv
    if weights.lambda3 > 0:
        y_cm = np.array([m[2] for m in maps], dtype=np.float64)
        l_cm, g_cm = bce_logits_mean(lc, y_cm)
        loss += weights.lambda3 * l_cm
        grad_lc += weights.lambda3 * g_cm
    return loss, grad_s, grad_la, grad_lc, grad_tau
