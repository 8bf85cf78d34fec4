"""Shared test helpers: finite differences and brute-force metric oracles."""

import numpy as np

from sasv.core import TrialLabel


def central_diff(f, x, h=1e-6):
    """Central finite difference of a scalar function at scalar x."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


def check_grad(analytic, numeric, rel_tol=1e-4, abs_tol=1e-7):
    """Relative comparison with an absolute fallback near zero."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    small = denom < abs_tol / rel_tol
    ok = np.where(small,
                  np.abs(analytic - numeric) <= abs_tol,
                  np.abs(analytic - numeric) <= rel_tol * denom)
    assert np.all(ok), (
        f"gradient mismatch: analytic={analytic[~ok]}, numeric={numeric[~ok]}")


def naive_error_rates(scores, labels, tau):
    """Definition-level error counting, kept independent of sasv.metrics."""
    tar = [s for s, l in zip(scores, labels) if l is TrialLabel.TARGET]
    non = [s for s, l in zip(scores, labels) if l is TrialLabel.NONTARGET]
    spf = [s for s, l in zip(scores, labels) if l is TrialLabel.SPOOF]
    p_miss = sum(1 for s in tar if s < tau) / len(tar)
    p_fa_non = sum(1 for s in non if s >= tau) / len(non)
    p_fa_spf = sum(1 for s in spf if s >= tau) / len(spf)
    return p_miss, p_fa_non, p_fa_spf


def naive_adcf(scores, labels, tau, cm, normalized=False):
    p_miss, p_fa_non, p_fa_spf = naive_error_rates(scores, labels, tau)
    val = (cm.c_miss_tar * cm.pi_tar * p_miss
           + cm.c_fa_non * cm.pi_non * p_fa_non
           + cm.c_fa_spf * cm.pi_spf * p_fa_spf)
    if normalized:
        val /= min(cm.c_miss_tar * cm.pi_tar,
                   cm.c_fa_non * cm.pi_non + cm.c_fa_spf * cm.pi_spf)
    return val


def brute_force_min_adcf(scores, labels, cm, normalized=False,
                         extra_grid=None):
    """Minimum over midpoints, sentinels and an optional extra grid."""
    uniq = sorted(set(scores))
    cands = [min(uniq) - 1.0, max(uniq) + 1.0]
    cands += [(a + b) / 2.0 for a, b in zip(uniq[:-1], uniq[1:])]
    if extra_grid is not None:
        cands += list(extra_grid)
    return min(naive_adcf(scores, labels, t, cm, normalized) for t in cands)


def random_three_class(rng, n_max=300):
    """Random scores+labels with all three classes present."""
    n_tar = int(rng.integers(1, n_max // 3))
    n_non = int(rng.integers(1, n_max // 3))
    n_spf = int(rng.integers(1, n_max // 3))
    scores = np.concatenate([
        rng.normal(1.0, 1.5, n_tar),
        rng.normal(-0.5, 1.5, n_non),
        rng.normal(-1.0, 1.5, n_spf),
    ])
    labels = ([TrialLabel.TARGET] * n_tar + [TrialLabel.NONTARGET] * n_non
              + [TrialLabel.SPOOF] * n_spf)
    return scores, labels
