"""Walkthrough: calibrate two detector score streams and fuse them.

Simulates per-class Gaussian (ASV, CM) score pairs, fits an affine
score-to-LLR calibration per axis on a dev split, then compares linear and
nonlinear fusion on a fresh eval split.  Run with:

    python3 demos/score_fusion_walkthrough.py
"""

import numpy as np

from sasv.core import DEFAULT_COST_MODEL
from sasv.decision import calibrate, fit_calibration, fuse_linear, \
    fuse_nonlinear
from sasv.metrics import eer, min_adcf
from sasv.sim import ScoreSimConfig, simulate_scores
from sasv.train import tune_fusion_rho

dev_cfg = ScoreSimConfig(seed=11)
eval_cfg = ScoreSimConfig(seed=12)
a_dev, c_dev, lab_dev = simulate_scores(dev_cfg)
a_ev, c_ev, lab_ev = simulate_scores(eval_cfg)
print(f"dev trials: {len(lab_dev)}, eval trials: {len(lab_ev)}")

# per-axis calibration: the ASV axis separates targets from bonafide
# nontargets, the CM axis separates bonafide from spoofed speech
dev_class = np.array([l.value for l in lab_dev])
bonafide = dev_class != "spoof"
asv_cal = fit_calibration(a_dev[bonafide],
                          (dev_class[bonafide] == "target").astype(float))
cm_cal = fit_calibration(c_dev, bonafide.astype(float))
print(f"asv calibration: llr = {asv_cal.w0:+.3f} {asv_cal.w1:+.3f} * s")
print(f"cm  calibration: llr = {cm_cal.w0:+.3f} {cm_cal.w1:+.3f} * s")

la_dev, lc_dev = calibrate(a_dev, asv_cal), calibrate(c_dev, cm_cal)
la_ev, lc_ev = calibrate(a_ev, asv_cal), calibrate(c_ev, cm_cal)

# linear fusion is a fixed average; the nonlinear rule has one weight to
# tune, done here by grid search on the dev split
rho, dev_val = tune_fusion_rho(la_dev, lc_dev, lab_dev, DEFAULT_COST_MODEL)
print(f"tuned spoof-prevalence weight: {rho:.2f} "
      f"(dev min a-DCF {dev_val:.4f})")

for name, fused in (("linear", fuse_linear(la_ev, lc_ev)),
                    ("nonlinear", fuse_nonlinear(la_ev, lc_ev, rho))):
    report = min_adcf(fused, lab_ev, DEFAULT_COST_MODEL)
    ev_class = np.array([l.value for l in lab_ev])
    sv, _ = eer(fused[ev_class == "target"], fused[ev_class == "nontarget"])
    spf, _ = eer(fused[ev_class == "target"], fused[ev_class == "spoof"])
    print(f"{name:>9}: eval min a-DCF {report.min_adcf:.4f} "
          f"(tau {report.min_threshold:+.2f})  "
          f"SV-EER {100 * sv:.2f}%  SPF-EER {100 * spf:.2f}%")
