"""Score calibration, linear/nonlinear fusion and the Bayes accept policy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LINEAR_FUSION_SCALE = 1.0 / math.sqrt(6.0)

# Calibration fitting knobs: damped Newton with a gradient-norm stop and a
# scale cap that terminates cleanly on separable data.
FIT_GRAD_TOL = 1e-8
FIT_MAX_ITER = 200
FIT_SCALE_CAP = 50.0


@dataclass(frozen=True)
class CalibrationParams:
    """Affine score-to-LLR map: llr = w0 + w1 * score."""

    w0: float
    w1: float

    def __post_init__(self):
        if not (math.isfinite(self.w0) and math.isfinite(self.w1)):
            raise ValueError("calibration parameters must be finite")


@dataclass(frozen=True)
class FusionConfig:
    mode: str = "nonlinear"  # "linear" | "nonlinear"
    rho_tilde: float = 0.5

    def __post_init__(self):
        if self.mode not in ("linear", "nonlinear"):
            raise ValueError(f"unknown fusion mode {self.mode!r}")
        if not 0.0 <= self.rho_tilde <= 1.0:
            raise ValueError(f"rho_tilde must lie in [0,1], "
                             f"got {self.rho_tilde}")


def calibrate(score, params):
    """Apply the affine calibration to a score (scalar or array)."""
    return params.w0 + params.w1 * np.asarray(score, dtype=np.float64)


class CalibrationFitError(RuntimeError):
    pass


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _logistic_nll(w0, w1, s, y):
    z = w0 + w1 * s
    # log(1 + e^-z) for y=1, log(1 + e^z) for y=0, in one stable form
    return float(np.sum(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def fit_calibration(scores, labels):
    """Fit (w0, w1) by logistic regression of binary labels on scores.

    Damped Newton iterations; stops at gradient norm <= FIT_GRAD_TOL.  On
    separable data the scale diverges, so |w1| is capped at FIT_SCALE_CAP and
    the fit returns instead of looping.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-D arrays")
    if not (np.any(y == 1) and np.any(y == 0)):
        raise ValueError("both classes must be present to fit calibration")

    w0, w1 = 0.0, 0.0
    nll = _logistic_nll(w0, w1, s, y)
    for _ in range(FIT_MAX_ITER):
        z = w0 + w1 * s
        p = _sigmoid(z)
        r = p - y
        g0 = float(np.sum(r))
        g1 = float(np.sum(r * s))
        if max(abs(g0), abs(g1)) <= FIT_GRAD_TOL:
            return CalibrationParams(w0, w1)
        w = p * (1.0 - p)
        h00 = float(np.sum(w)) + 1e-12
        h01 = float(np.sum(w * s))
        h11 = float(np.sum(w * s * s)) + 1e-12
        det = h00 * h11 - h01 * h01
        if det <= 0:
            raise CalibrationFitError("singular Hessian in calibration fit")
        d0 = (h11 * g0 - h01 * g1) / det
        d1 = (h00 * g1 - h01 * g0) / det
        step = 1.0
        while step > 1e-12:
            n0, n1 = w0 - step * d0, w1 - step * d1
            new_nll = _logistic_nll(n0, n1, s, y)
            if new_nll <= nll + 1e-15:
                w0, w1, nll = n0, n1, new_nll
                break
            step *= 0.5
        if abs(w1) >= FIT_SCALE_CAP:
            w1 = math.copysign(FIT_SCALE_CAP, w1)
            return CalibrationParams(w0, w1)
    raise CalibrationFitError(
        f"calibration fit did not converge in {FIT_MAX_ITER} iterations")


def fuse_linear(llr_asv, llr_cm):
    """Average the two LLRs with the isometric-log-ratio scale 1/sqrt(6)."""
    return (np.asarray(llr_asv, dtype=np.float64) + llr_cm) * LINEAR_FUSION_SCALE


def fuse_nonlinear(llr_asv, llr_cm, rho_tilde):
    """Log-sum-exp fusion -log[(1-rho)e^-a + rho e^-b], overflow-safe.

    rho_tilde=0 returns llr_asv exactly; rho_tilde=1 returns llr_cm exactly.
    Accepts scalars or broadcastable arrays.
    """
    if not 0.0 <= rho_tilde <= 1.0:
        raise ValueError(f"rho_tilde must lie in [0,1], got {rho_tilde}")
    a = np.asarray(llr_asv, dtype=np.float64)
    b = np.asarray(llr_cm, dtype=np.float64)
    if rho_tilde == 0.0:
        out = np.broadcast_arrays(a, b)[0].copy()
        return float(out) if out.ndim == 0 else out
    if rho_tilde == 1.0:
        out = np.broadcast_arrays(a, b)[1].copy()
        return float(out) if out.ndim == 0 else out
    m = np.maximum(-a, -b)
    out = -(m + np.log((1.0 - rho_tilde) * np.exp(-a - m)
                       + rho_tilde * np.exp(-b - m)))
    return float(out) if out.ndim == 0 else out


def _neg_log_weighted_exp(u, a, v, b):
    """-log(u e^-a + v e^-b) for nonnegative weights, overflow-safe."""
    if u == 0.0 and v == 0.0:
        return math.inf
    if u == 0.0:
        return b - math.log(v)
    if v == 0.0:
        return a - math.log(u)
    ta = math.log(u) - a
    tb = math.log(v) - b
    m = max(ta, tb)
    return -(m + math.log(math.exp(ta - m) + math.exp(tb - m)))


def bayes_accept(llr_asv, llr_cm, cost_model):
    """Minimum-risk accept/reject for the three-class task.

    Accept iff -log[(1-rho)(Cfa_non/Cmiss)e^-llr_asv
                   + rho(Cfa_spf/Cmiss)e^-llr_cm] > -log(beta).
    """
    if cost_model.c_miss_tar <= 0:
        raise ValueError("c_miss_tar must be positive for the accept policy")
    rho = cost_model.rho
    u = (1.0 - rho) * cost_model.c_fa_non / cost_model.c_miss_tar
    v = rho * cost_model.c_fa_spf / cost_model.c_miss_tar
    lhs = _neg_log_weighted_exp(u, llr_asv, v, llr_cm)
    return lhs > -math.log(cost_model.beta)


def asv_bayes_threshold(cost_model):
    """Spoof-free Bayes threshold log(Cfa_non/Cmiss) - logit(pi_tar)."""
    if cost_model.c_fa_non <= 0 or cost_model.c_miss_tar <= 0:
        raise ValueError("both ASV costs must be positive")
    logit_pi = math.log(cost_model.pi_tar) - math.log(1.0 - cost_model.pi_tar)
    return math.log(cost_model.c_fa_non / cost_model.c_miss_tar) - logit_pi


def fuse(llr_asv, llr_cm, config):
    """Apply the configured fusion rule."""
    if config.mode == "linear":
        return fuse_linear(llr_asv, llr_cm)
    return fuse_nonlinear(llr_asv, llr_cm, config.rho_tilde)
