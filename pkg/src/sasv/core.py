"""Shared domain types: trial labels, cost/prior model, embeddings, scored trials."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

PRIOR_SUM_TOL = 1e-9


class TrialLabel(enum.Enum):
    """Ground-truth class of a single verification trial."""

    TARGET = "target"
    NONTARGET = "nontarget"
    SPOOF = "spoof"

    @classmethod
    def from_string(cls, text):
        for member in cls:
            if member.value == text:
                return member
        raise ValueError(f"unknown trial label {text!r} "
                         f"(expected one of: target, nontarget, spoof)")


def label_maps(label):
    """Map a trial label to (y_sasv, y_asv, y_cm) supervision bits.

    y_asv is None for spoof trials: they carry no speaker-detection
    supervision and are excluded from the auxiliary ASV loss.
    """
    if label is TrialLabel.TARGET:
        return 1, 1, 1
    if label is TrialLabel.NONTARGET:
        return 0, 0, 1
    if label is TrialLabel.SPOOF:
        return 0, None, 0
    raise ValueError(f"not a TrialLabel: {label!r}")


_ID_FORBIDDEN = ("\t", "\n", "\r")


@dataclass(frozen=True)
class TrialRecord:
    """One protocol row: enrollment identity, test utterance and its label."""

    enroll_id: str
    test_id: str
    label: TrialLabel

    def __post_init__(self):
        for name, value in (("enroll_id", self.enroll_id),
                            ("test_id", self.test_id)):
            if not value:
                raise ValueError(f"{name} must be non-empty")
            if any(ch in value for ch in _ID_FORBIDDEN):
                raise ValueError(f"{name} {value!r} contains tab/newline")
        if not isinstance(self.label, TrialLabel):
            raise ValueError(f"label must be a TrialLabel, got {self.label!r}")


@dataclass(frozen=True)
class CostModel:
    """The six decision parameters of the three-class accept/reject task.

    Costs weigh the three error kinds (target miss, nontarget false alarm,
    spoof false alarm); priors are the class probabilities and must sum to 1.
    """

    c_miss_tar: float = 1.0
    c_fa_non: float = 10.0
    c_fa_spf: float = 20.0
    pi_tar: float = 0.9
    pi_non: float = 0.05
    pi_spf: float = 0.05

    def __post_init__(self):
        costs = (self.c_miss_tar, self.c_fa_non, self.c_fa_spf)
        if any(not math.isfinite(c) or c < 0 for c in costs):
            raise ValueError("costs must be finite and nonnegative")
        if not any(c > 0 for c in costs):
            raise ValueError("at least one cost must be positive")
        if not 0.0 < self.pi_tar < 1.0:
            raise ValueError(f"pi_tar must lie in (0,1), got {self.pi_tar}")
        for name, p in (("pi_non", self.pi_non), ("pi_spf", self.pi_spf)):
            if not 0.0 <= p < 1.0:
                raise ValueError(f"{name} must lie in [0,1), got {p}")
        total = self.pi_tar + self.pi_non + self.pi_spf
        if abs(total - 1.0) > PRIOR_SUM_TOL:
            raise ValueError(
                f"priors sum to {total!r}, not 1 (tolerance {PRIOR_SUM_TOL}); "
                "use CostModel.with_renormalized_priors to renormalize")

    @classmethod
    def with_renormalized_priors(cls, c_miss_tar, c_fa_non, c_fa_spf,
                                 pi_tar, pi_non, pi_spf):
        """Build a CostModel after explicitly rescaling the priors to sum 1."""
        total = pi_tar + pi_non + pi_spf
        if total <= 0:
            raise ValueError("prior mass must be positive")
        return cls(c_miss_tar, c_fa_non, c_fa_spf,
                   pi_tar / total, pi_non / total, pi_spf / total)

    @property
    def rho(self):
        return derive_rho(self)

    @property
    def beta(self):
        return derive_beta(self)


def derive_rho(cm):
    """Spoof prevalence prior: spoof share of the combined negative mass."""
    denom = cm.pi_non + cm.pi_spf
    if denom <= 0:
        raise ValueError("rho undefined: pi_non + pi_spf must be positive")
    return cm.pi_spf / denom


def derive_beta(cm):
    """Target prior odds pi_tar / (1 - pi_tar)."""
    if not 0.0 < cm.pi_tar < 1.0:
        raise ValueError(f"beta undefined for pi_tar={cm.pi_tar}")
    return cm.pi_tar / (1.0 - cm.pi_tar)


DEFAULT_COST_MODEL = CostModel()


class EmbeddingStore:
    """Named fixed-dimension real vectors for enrollment/test utterances."""

    def __init__(self, dim):
        if not isinstance(dim, int) or dim <= 0:
            raise ValueError(f"dim must be a positive integer, got {dim!r}")
        self.dim = dim
        self._entries = {}

    def add(self, utt_id, vector):
        if utt_id in self._entries:
            raise ValueError(f"duplicate utterance id {utt_id!r}")
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector for {utt_id!r} has shape {vec.shape}, "
                             f"expected ({self.dim},)")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"vector for {utt_id!r} has non-finite entries")
        self._entries[utt_id] = vec

    def get(self, utt_id):
        try:
            return self._entries[utt_id]
        except KeyError:
            raise KeyError(f"unknown utterance id {utt_id!r}") from None

    def __contains__(self, utt_id):
        return utt_id in self._entries

    def __len__(self):
        return len(self._entries)

    def ids(self):
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def matrix(self, utt_ids):
        """Stack the vectors for the given ids into an (n, dim) array."""
        return np.stack([self.get(i) for i in utt_ids]) if utt_ids else \
            np.empty((0, self.dim))


@dataclass
class ScoredTrial:
    """Per-trial raw, calibrated and fused scores."""

    trial: TrialRecord
    s_asv_raw: float = field(default=math.nan)
    s_cm_raw: float = field(default=math.nan)
    llr_asv: float = field(default=math.nan)
    llr_cm: float = field(default=math.nan)
    s_sasv: float = field(default=math.nan)
