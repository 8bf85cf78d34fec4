"""Optimizers, joint training of the scoring back-end, checkpoint selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import TrialLabel, label_maps
from .decision import CalibrationParams
from .losses import LossWeights, SoftAdcfConfig, combined_loss_v1, \
    combined_loss_v2
from .metrics import min_adcf
from .nn import DEFAULT_HIDDEN, MlpParams, cosine_score, init_mlp, \
    mlp_backward, mlp_forward, weighted_cosine_backward, weighted_cosine_score
from .sim import make_rng

ARCHITECTURES = ("mlp-mlp", "cosine-mlp", "wcos-mlp")


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else \
        math.exp(x) / (1.0 + math.exp(x))


def _logit(p):
    return math.log(p) - math.log1p(-p)


# ------------------------------------------------------------------- model

@dataclass
class ModelParams:
    """All trainables of one back-end: heads, calibrations, fusion, tau."""

    architecture: str
    fusion_mode: str
    d_asv: int
    d_cm: int
    cm_mlp: MlpParams
    asv_mlp: MlpParams | None = None
    w_asv: np.ndarray | None = None
    asv_calib: CalibrationParams = field(
        default_factory=lambda: CalibrationParams(0.0, 1.0))
    cm_calib: CalibrationParams = field(
        default_factory=lambda: CalibrationParams(0.0, 1.0))
    rho_logit: float = 0.0
    tau: float = 0.0

    def validate(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.fusion_mode not in ("linear", "nonlinear"):
            raise ValueError(f"unknown fusion mode {self.fusion_mode!r}")
        if self.architecture == "mlp-mlp":
            if self.asv_mlp is None or \
                    self.asv_mlp.input_dim != 2 * self.d_asv:
                raise ValueError("mlp-mlp needs an ASV MLP over "
                                 "[e_enr, e_tst]")
        if self.architecture == "wcos-mlp":
            if self.w_asv is None or self.w_asv.shape != (self.d_asv,):
                raise ValueError("wcos-mlp needs a weight vector of ASV dim")
        if self.cm_mlp.input_dim != self.d_asv + self.d_cm:
            raise ValueError("CM MLP input dim must be d_asv + d_cm")

    @property
    def rho_tilde(self):
        return _sigmoid(self.rho_logit)

    def copy(self):
        return ModelParams(
            architecture=self.architecture,
            fusion_mode=self.fusion_mode,
            d_asv=self.d_asv,
            d_cm=self.d_cm,
            cm_mlp=self.cm_mlp.copy(),
            asv_mlp=None if self.asv_mlp is None else self.asv_mlp.copy(),
            w_asv=None if self.w_asv is None else self.w_asv.copy(),
            asv_calib=self.asv_calib,
            cm_calib=self.cm_calib,
            rho_logit=self.rho_logit,
            tau=self.tau,
        )


@dataclass
class TrainConfig:
    architecture: str = "wcos-mlp"
    fusion_mode: str = "nonlinear"
    loss_variant: str = "v1"            # "v1" | "v2"
    optimizer: str = "adam"             # "adam" | "sgd"
    init: str = "random"                # "random" | "pretrained"
    epochs: int = 100
    batch_size: int = 192
    lr: float = 8.61e-4
    seed: int = 0
    cost_model: object = None
    loss_weights: LossWeights = field(default_factory=LossWeights)
    alpha: float = 1.0
    normalized_loss: bool = True
    # which loss paths feed the calibration parameters
    calib_gradients: str = "both"       # "both" | "fused_only" | "aux_only"

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.loss_variant not in ("v1", "v2"):
            raise ValueError(f"unknown loss variant {self.loss_variant!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.init not in ("random", "pretrained"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.cost_model is None:
            from .core import DEFAULT_COST_MODEL
            object.__setattr__(self, "cost_model", DEFAULT_COST_MODEL)


@dataclass
class Checkpoint:
    epoch: int
    model: ModelParams
    dev_min_adcf: float
    dev_threshold: float


def init_model(cfg, d_asv, d_cm, rng=None):
    if rng is None:
        rng = make_rng(cfg.seed)
    asv_mlp = None
    w_asv = None
    if cfg.architecture == "mlp-mlp":
        asv_mlp = init_mlp(2 * d_asv, DEFAULT_HIDDEN, rng)
    elif cfg.architecture == "wcos-mlp":
        w_asv = np.ones(d_asv)
    cm_mlp = init_mlp(d_asv + d_cm, DEFAULT_HIDDEN, rng)
    model = ModelParams(
        architecture=cfg.architecture,
        fusion_mode=cfg.fusion_mode,
        d_asv=d_asv,
        d_cm=d_cm,
        cm_mlp=cm_mlp,
        asv_mlp=asv_mlp,
        w_asv=w_asv,
        rho_logit=_logit(min(max(cfg.cost_model.rho, 1e-6), 1.0 - 1e-6)),
        tau=0.0,
    )
    model.validate()
    return model


# -------------------------------------------------------------- optimizers

def sgd_step(params, grads, lr):
    """In-place p <- p - lr * g over a name->array dict."""
    for key, p in params.items():
        g = grads[key]
        if np.shape(g) != np.shape(p):
            raise ValueError(f"gradient shape mismatch for {key!r}")
        params[key] = p - lr * g
    return params


class OptimizerState:
    """SGD or Adam over a flat name->array parameter dict."""

    def __init__(self, kind, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        if kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {kind!r}")
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.kind = kind
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        if self.kind == "sgd":
            return sgd_step(params, grads, self.lr)
        return adam_step(params, grads, self)


def adam_step(params, grads, state):
    """Standard bias-corrected Adam update, in place on the dict."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for key, p in params.items():
        g = np.asarray(grads[key], dtype=np.float64)
        if g.shape != np.shape(p):
            raise ValueError(f"gradient shape mismatch for {key!r}")
        if key not in state.m:
            state.m[key] = np.zeros_like(g)
            state.v[key] = np.zeros_like(g)
        state.m[key] = b1 * state.m[key] + (1.0 - b1) * g
        state.v[key] = b2 * state.v[key] + (1.0 - b2) * g * g
        m_hat = state.m[key] / (1.0 - b1 ** t)
        v_hat = state.v[key] / (1.0 - b2 ** t)
        params[key] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


# --------------------------------------------------- parameter dict plumbing

def _mlp_into_dict(prefix, mlp, out):
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        out[f"{prefix}.w{i}"] = w.copy()
        out[f"{prefix}.b{i}"] = b.copy()


def _mlp_from_dict(prefix, mlp, pdict):
    weights = [pdict[f"{prefix}.w{i}"] for i in range(len(mlp.weights))]
    biases = [pdict[f"{prefix}.b{i}"] for i in range(len(mlp.biases))]
    return MlpParams(weights, biases, list(mlp.activations))


def trainable_dict(model, branch="all"):
    """Flat name->array dict of the trainables (per-architecture subset).

    branch selects "all", "asv" (ASV head + its calibration) or
    "cm" (CM MLP + its calibration), the latter two for pretraining.
    """
    out = {}
    if branch in ("all", "asv"):
        if model.architecture == "mlp-mlp":
            _mlp_into_dict("asv_mlp", model.asv_mlp, out)
        elif model.architecture == "wcos-mlp":
            out["w_asv"] = model.w_asv.copy()
        out["asv_calib.w0"] = np.float64(model.asv_calib.w0)
        out["asv_calib.w1"] = np.float64(model.asv_calib.w1)
    if branch in ("all", "cm"):
        _mlp_into_dict("cm_mlp", model.cm_mlp, out)
        out["cm_calib.w0"] = np.float64(model.cm_calib.w0)
        out["cm_calib.w1"] = np.float64(model.cm_calib.w1)
    if branch == "all":
        if model.fusion_mode == "nonlinear":
            out["rho_logit"] = np.float64(model.rho_logit)
        out["tau"] = np.float64(model.tau)
    return out


def apply_dict(model, pdict):
    """Write a parameter dict back into the model (missing keys untouched)."""
    if "asv_mlp.w0" in pdict:
        model.asv_mlp = _mlp_from_dict("asv_mlp", model.asv_mlp, pdict)
    if "w_asv" in pdict:
        model.w_asv = np.asarray(pdict["w_asv"], dtype=np.float64)
    if "asv_calib.w0" in pdict:
        model.asv_calib = CalibrationParams(float(pdict["asv_calib.w0"]),
                                            float(pdict["asv_calib.w1"]))
    if "cm_mlp.w0" in pdict:
        model.cm_mlp = _mlp_from_dict("cm_mlp", model.cm_mlp, pdict)
    if "cm_calib.w0" in pdict:
        model.cm_calib = CalibrationParams(float(pdict["cm_calib.w0"]),
                                           float(pdict["cm_calib.w1"]))
    if "rho_logit" in pdict:
        model.rho_logit = float(pdict["rho_logit"])
    if "tau" in pdict:
        model.tau = float(pdict["tau"])
    return model


# ----------------------------------------------------------------- forward

def forward_batch(model, e_enr, e_tst_asv, e_tst_cm):
    """Score a batch; returns (s_sasv, cache) with everything backward needs."""
    cache = {}
    if model.architecture == "mlp-mlp":
        x_asv = np.concatenate([e_enr, e_tst_asv], axis=1)
        s_asv, cache["asv_tape"] = mlp_forward(model.asv_mlp, x_asv)
    elif model.architecture == "cosine-mlp":
        s_asv = cosine_score(e_enr, e_tst_asv)
    else:
        s_asv, cache["asv_tape"] = weighted_cosine_score(
            model.w_asv, e_enr, e_tst_asv)
    x_cm = np.concatenate([e_tst_asv, e_tst_cm], axis=1)
    s_cm, cache["cm_tape"] = mlp_forward(model.cm_mlp, x_cm)

    llr_a = model.asv_calib.w0 + model.asv_calib.w1 * s_asv
    llr_c = model.cm_calib.w0 + model.cm_calib.w1 * s_cm
    cache["s_asv"], cache["s_cm"] = s_asv, s_cm
    cache["llr_a"], cache["llr_c"] = llr_a, llr_c

    if model.fusion_mode == "linear":
        s = (llr_a + llr_c) / math.sqrt(6.0)
    else:
        r = model.rho_tilde
        m = np.maximum(-llr_a, -llr_c)
        ea = np.exp(-llr_a - m)
        eb = np.exp(-llr_c - m)
        denom = (1.0 - r) * ea + r * eb
        s = -(m + np.log(denom))
        cache["fuse_wa"] = (1.0 - r) * ea / denom
        cache["fuse_wb"] = r * eb / denom
        cache["fuse_dr"] = (ea - eb) / denom
        cache["rho"] = r
    return s, cache


def backward_batch(model, cache, grad_s, grad_llr_a_aux=None,
                   grad_llr_c_aux=None, calib_gradients="both"):
    """Chain loss gradients down to every trainable; returns a grad dict."""
    grads = {}
    if model.fusion_mode == "linear":
        g_a_fused = grad_s / math.sqrt(6.0)
        g_c_fused = grad_s / math.sqrt(6.0)
    else:
        g_a_fused = grad_s * cache["fuse_wa"]
        g_c_fused = grad_s * cache["fuse_wb"]
        r = cache["rho"]
        grads["rho_logit"] = np.float64(
            float(np.sum(grad_s * cache["fuse_dr"])) * r * (1.0 - r))

    g_a_aux = np.zeros_like(g_a_fused) if grad_llr_a_aux is None \
        else grad_llr_a_aux
    g_c_aux = np.zeros_like(g_c_fused) if grad_llr_c_aux is None \
        else grad_llr_c_aux
    g_a_total = g_a_fused + g_a_aux
    g_c_total = g_c_fused + g_c_aux
    if calib_gradients == "both":
        g_a_calib, g_c_calib = g_a_total, g_c_total
    elif calib_gradients == "fused_only":
        g_a_calib, g_c_calib = g_a_fused, g_c_fused
    elif calib_gradients == "aux_only":
        g_a_calib, g_c_calib = g_a_aux, g_c_aux
    else:
        raise ValueError(f"unknown calib_gradients {calib_gradients!r}")

    grads["asv_calib.w0"] = np.float64(np.sum(g_a_calib))
    grads["asv_calib.w1"] = np.float64(np.sum(g_a_calib * cache["s_asv"]))
    grads["cm_calib.w0"] = np.float64(np.sum(g_c_calib))
    grads["cm_calib.w1"] = np.float64(np.sum(g_c_calib * cache["s_cm"]))

    g_s_asv = g_a_total * model.asv_calib.w1
    g_s_cm = g_c_total * model.cm_calib.w1

    if model.architecture == "mlp-mlp":
        mlp_grads, _ = mlp_backward(model.asv_mlp, cache["asv_tape"], g_s_asv)
        for i, (w, b) in enumerate(zip(mlp_grads.weights, mlp_grads.biases)):
            grads[f"asv_mlp.w{i}"] = w
            grads[f"asv_mlp.b{i}"] = b
    elif model.architecture == "wcos-mlp":
        grads["w_asv"] = weighted_cosine_backward(cache["asv_tape"], g_s_asv)

    cm_grads, _ = mlp_backward(model.cm_mlp, cache["cm_tape"], g_s_cm)
    for i, (w, b) in enumerate(zip(cm_grads.weights, cm_grads.biases)):
        grads[f"cm_mlp.w{i}"] = w
        grads[f"cm_mlp.b{i}"] = b
    return grads


def score_trials(model, asv_store, cm_store, trials):
    """Full forward over a trial list; returns (s_sasv, llr_a, llr_c, labels)."""
    e_enr = asv_store.matrix([t.enroll_id for t in trials])
    e_tst_asv = asv_store.matrix([t.test_id for t in trials])
    e_tst_cm = cm_store.matrix([t.test_id for t in trials])
    s, cache = forward_batch(model, e_enr, e_tst_asv, e_tst_cm)
    labels = [t.label for t in trials]
    return s, cache["llr_a"], cache["llr_c"], labels


# ---------------------------------------------------------------- training

def _stratified_batches(labels, batch_size, rng):
    """Deterministic batches with at least one trial of each class."""
    n = len(labels)
    by_class = {}
    for idx, label in enumerate(labels):
        by_class.setdefault(label, []).append(idx)
    n_batches = max(1, -(-n // batch_size))
    n_batches = min(n_batches, *(len(v) for v in by_class.values()))
    batches = [[] for _ in range(n_batches)]
    for label in (TrialLabel.TARGET, TrialLabel.NONTARGET, TrialLabel.SPOOF):
        if label not in by_class:
            continue
        idxs = np.array(by_class[label])
        rng.shuffle(idxs)
        for b, chunk in enumerate(np.array_split(idxs, n_batches)):
            batches[b].extend(chunk.tolist())
    return [np.array(b) for b in batches]


def _batch_loss_and_grads(model, cfg, s, cache, labels):
    sa_cfg = SoftAdcfConfig(cost_model=cfg.cost_model, tau=model.tau,
                            alpha=cfg.alpha, normalized=cfg.normalized_loss)
    if cfg.loss_variant == "v1":
        loss, grad_s, grad_tau = combined_loss_v1(
            s, labels, cfg.loss_weights, sa_cfg)
        grads = backward_batch(model, cache, grad_s,
                               calib_gradients=cfg.calib_gradients)
    else:
        loss, grad_s, grad_la, grad_lc, grad_tau = combined_loss_v2(
            cache["llr_a"], cache["llr_c"], s, labels, cfg.loss_weights,
            sa_cfg)
        grads = backward_batch(model, cache, grad_s, grad_la, grad_lc,
                               calib_gradients=cfg.calib_gradients)
    grads["tau"] = np.float64(grad_tau)
    return loss, grads


def train_joint(cfg, asv_store, cm_store, train_trials, dev_trials,
                model=None):
    """Joint training loop; returns (best Checkpoint, per-epoch log list)."""
    for t in train_trials + dev_trials:
        if t.enroll_id not in asv_store or t.test_id not in asv_store \
                or t.test_id not in cm_store:
            raise KeyError(f"trial references unknown embedding: "
                           f"{t.enroll_id}/{t.test_id}")
    for split_name, split in (("train", train_trials), ("dev", dev_trials)):
        present = {t.label for t in split}
        if len(present) != 3:
            raise ValueError(f"{split_name} split lacks some classes")

    rng = make_rng(cfg.seed)
    if model is None:
        if cfg.init == "pretrained":
            model = pretrain_heads(cfg, asv_store, cm_store, train_trials)
        else:
            model = init_model(cfg, asv_store.dim, cm_store.dim, rng)
    else:
        model = model.copy()

    e_enr = asv_store.matrix([t.enroll_id for t in train_trials])
    e_tst_asv = asv_store.matrix([t.test_id for t in train_trials])
    e_tst_cm = cm_store.matrix([t.test_id for t in train_trials])
    labels = [t.label for t in train_trials]

    optimizer = OptimizerState(cfg.optimizer, cfg.lr)
    log = []
    best = None
    for epoch in range(1, cfg.epochs + 1):
        epoch_losses = []
        for batch in _stratified_batches(labels, cfg.batch_size, rng):
            s, cache = forward_batch(model, e_enr[batch], e_tst_asv[batch],
                                     e_tst_cm[batch])
            batch_labels = [labels[i] for i in batch]
            loss, grads = _batch_loss_and_grads(model, cfg, s, cache,
                                                batch_labels)
            params = trainable_dict(model)
            optimizer.step(params, grads)
            apply_dict(model, params)
            epoch_losses.append(loss)
        dev_s, _, _, dev_labels = score_trials(model, asv_store, cm_store,
                                               dev_trials)
        report = min_adcf(dev_s, dev_labels, cfg.cost_model, normalized=True)
        log.append({
            "epoch": epoch,
            "train_loss": float(np.mean(epoch_losses)),
            "dev_min_adcf": report.min_adcf,
            "dev_threshold": report.min_threshold,
        })
        if best is None or report.min_adcf < best.dev_min_adcf:
            best = Checkpoint(epoch, model.copy(), report.min_adcf,
                              report.min_threshold)
    if best is None:  # zero epochs: return the initial state unevaluated
        best = Checkpoint(0, model.copy(), math.inf, 0.0)
    return best, log


def pretrain_heads(cfg, asv_store, cm_store, trials):
    """Train each branch alone with its auxiliary BCE; returns ModelParams."""
    from .losses import bce_logits_mean

    rng = make_rng(cfg.seed)
    model = init_model(cfg, asv_store.dim, cm_store.dim, rng)
    e_enr = asv_store.matrix([t.enroll_id for t in trials])
    e_tst_asv = asv_store.matrix([t.test_id for t in trials])
    e_tst_cm = cm_store.matrix([t.test_id for t in trials])
    labels = [t.label for t in trials]
    maps = [label_maps(l) for l in labels]
    asv_keep = np.array([m[1] is not None for m in maps])
    y_asv = np.array([m[1] for m in maps if m[1] is not None],
                     dtype=np.float64)
    y_cm = np.array([m[2] for m in maps], dtype=np.float64)

    for branch, keep, y in (("asv", asv_keep, y_asv),
                            ("cm", np.ones(len(trials), bool), y_cm)):
        params = trainable_dict(model, branch)
        if not params:
            continue
        optimizer = OptimizerState(cfg.optimizer, cfg.lr)
        idx_all = np.nonzero(keep)[0]
        lookup = {int(i): k for k, i in enumerate(idx_all)}
        n_batches = max(1, -(-idx_all.size // cfg.batch_size))
        for _ in range(cfg.epochs):
            order = idx_all.copy()
            rng.shuffle(order)
            for chunk in np.array_split(order, n_batches):
                s, cache = forward_batch(model, e_enr[chunk],
                                         e_tst_asv[chunk], e_tst_cm[chunk])
                ys = np.array([y[lookup[int(i)]] for i in chunk],
                              dtype=np.float64)
                if branch == "asv":
                    _, g = bce_logits_mean(cache["llr_a"], ys)
                    grads = backward_batch(model, cache,
                                           np.zeros_like(g),
                                           grad_llr_a_aux=g,
                                           calib_gradients="both")
                else:
                    _, g = bce_logits_mean(cache["llr_c"], ys)
                    grads = backward_batch(model, cache,
                                           np.zeros_like(g),
                                           grad_llr_c_aux=g,
                                           calib_gradients="both")
                grads = {k: grads[k] for k in params}
                optimizer.step(params, grads)
                apply_dict(model, params)
    return model


def tune_fusion_rho(llr_asv, llr_cm, labels, cost_model, grid=None):
    """Pick the nonlinear fusion weight minimizing dev min a-DCF on a grid."""
    from .decision import fuse_nonlinear

    if grid is None:
        grid = np.linspace(0.01, 0.99, 99)
    best_rho, best_val = None, math.inf
    for rho in grid:
        fused = fuse_nonlinear(llr_asv, llr_cm, float(rho))
        val = min_adcf(fused, labels, cost_model).min_adcf
        if val < best_val:
            best_rho, best_val = float(rho), val
    return best_rho, best_val
