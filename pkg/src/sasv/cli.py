"""Command-line surface: simulate | calibrate | fuse | eval | train | det | grid."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import fileio
from .core import CostModel, TrialLabel
from .decision import CalibrationParams, FusionConfig, calibrate, \
    fit_calibration, fuse
from .losses import LossWeights
from .metrics import actual_adcf, eer, det_points, min_adcf
from .sim import EmbeddingSimConfig, GridSpec, ScoreSimConfig, \
    boundary_grid, simulate_embeddings, simulate_scores
from .train import TrainConfig, train_joint


def _add_cost_flags(parser):
    parser.add_argument("--cmiss", type=float, default=1.0)
    parser.add_argument("--cfa-non", type=float, default=10.0)
    parser.add_argument("--cfa-spf", type=float, default=20.0)
    parser.add_argument("--ptar", type=float, default=0.9)
    parser.add_argument("--pnon", type=float, default=0.05)
    parser.add_argument("--pspf", type=float, default=0.05)


def _cost_model(args):
    return CostModel(args.cmiss, args.cfa_non, args.cfa_spf,
                     args.ptar, args.pnon, args.pspf)


def _cost_model_json(cm):
    return {"c_miss_tar": cm.c_miss_tar, "c_fa_non": cm.c_fa_non,
            "c_fa_spf": cm.c_fa_spf, "pi_tar": cm.pi_tar,
            "pi_non": cm.pi_non, "pi_spf": cm.pi_spf,
            "rho": cm.rho, "beta": cm.beta}


def _load_calibration(path):
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    return CalibrationParams(float(doc["w0"]), float(doc["w1"]))


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="sasv",
        description="Spoofing-robust speaker verification back-end")
    parser.add_argument("--jobs", type=int,
                        default=int(os.environ.get("SASV_JOBS", "1")),
                        help="worker fan-out for evaluation (default 1, "
                             "fully serial)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic trials")
    p.add_argument("--mode", choices=["scores", "embeddings"], required=True)
    p.add_argument("--config", help="JSON file overriding simulator defaults")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("calibrate", help="fit an affine score-to-LLR map")
    p.add_argument("--scores", required=True)
    p.add_argument("--task", choices=["asv", "cm"], required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fuse", help="calibrate and fuse ASV and CM scores")
    p.add_argument("--asv", required=True)
    p.add_argument("--cm", required=True)
    p.add_argument("--mode", choices=["linear", "nonlinear"],
                   default="nonlinear")
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--asv-calib")
    p.add_argument("--cm-calib")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="a-DCF / EER report for fused scores")
    p.add_argument("--scores", required=True)
    _add_cost_flags(p)
    p.add_argument("--threshold", type=float,
                   help="fixed (development-set) threshold for actual a-DCF")
    p.add_argument("--unnormalized", action="store_true")
    p.add_argument("--report", required=True)

    p = sub.add_parser("train", help="jointly train a scoring back-end")
    p.add_argument("--arch", choices=["mlp-mlp", "cosine-mlp", "wcos-mlp"],
                   default="wcos-mlp")
    p.add_argument("--fusion", choices=["linear", "nonlinear"],
                   default="nonlinear")
    p.add_argument("--loss", choices=["v1", "v2"], default="v1")
    p.add_argument("--optimizer", choices=["sgd", "adam"], default="adam")
    p.add_argument("--init", choices=["random", "pretrained"],
                   default="random")
    p.add_argument("--asv-emb", required=True)
    p.add_argument("--cm-emb", required=True)
    p.add_argument("--train-proto", required=True)
    p.add_argument("--dev-proto", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=192)
    p.add_argument("--lr", type=float, default=0.000861)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.0)
    _add_cost_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="per-epoch training log (JSON lines)")

    p = sub.add_parser("det", help="DET curve vertices as CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--negatives", choices=["nontarget", "spoof"],
                   required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("grid", help="fused score + decision over an LLR grid")
    p.add_argument("--ckpt", help="use a checkpoint's fusion parameters")
    p.add_argument("--mode", choices=["linear", "nonlinear"])
    p.add_argument("--rho", type=float, default=0.5)
    _add_cost_flags(p)
    p.add_argument("--amin", type=float, default=-8.0)
    p.add_argument("--amax", type=float, default=8.0)
    p.add_argument("--cmin", type=float, default=-8.0)
    p.add_argument("--cmax", type=float, default=8.0)
    p.add_argument("--na", type=int, default=81)
    p.add_argument("--nc", type=int, default=81)
    p.add_argument("--out", required=True)
    return parser


def _cmd_simulate(args):
    os.makedirs(args.out_dir, exist_ok=True)
    overrides = {}
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            overrides = json.load(f)
    if args.mode == "scores":
        cfg = ScoreSimConfig(seed=args.seed)
        if overrides:
            label_of = {label.value: label for label in TrialLabel}
            for field_name in ("means", "covs", "counts"):
                if field_name in overrides:
                    new = {label_of[k]: v
                           for k, v in overrides[field_name].items()}
                    getattr(cfg, field_name).update(new)
            cfg = ScoreSimConfig(cfg.means, cfg.covs, cfg.counts, args.seed)
        llr_asv, llr_cm, labels = simulate_scores(cfg)
        rows_asv, rows_cm = [], []
        for i, (a, c, label) in enumerate(zip(llr_asv, llr_cm, labels)):
            enroll, test = f"e{i:06d}", f"t{i:06d}"
            rows_asv.append((enroll, test, a, label))
            rows_cm.append((enroll, test, c, label))
        fileio.write_scores(os.path.join(args.out_dir, "asv_scores.tsv"),
                            rows_asv)
        fileio.write_scores(os.path.join(args.out_dir, "cm_scores.tsv"),
                            rows_cm)
    else:
        cfg = EmbeddingSimConfig(**overrides, seed=args.seed)
        asv_store, cm_store, trials = simulate_embeddings(cfg)
        fileio.write_embeddings(os.path.join(args.out_dir, "asv_emb.bin"),
                                asv_store)
        fileio.write_embeddings(os.path.join(args.out_dir, "cm_emb.bin"),
                                cm_store)
        fileio.write_protocol(os.path.join(args.out_dir, "protocol.tsv"),
                              trials)
    return 0


def _cmd_calibrate(args):
    rows = fileio.read_scores(args.scores)
    if args.task == "asv":
        pairs = [(s, 1 if label is TrialLabel.TARGET else 0)
                 for _, _, s, label in rows if label is not TrialLabel.SPOOF]
    else:
        pairs = [(s, 0 if label is TrialLabel.SPOOF else 1)
                 for _, _, s, label in rows]
    if not pairs:
        raise ValueError("no usable trials for calibration task "
                         f"{args.task!r}")
    scores, labels = zip(*pairs)
    params = fit_calibration(np.array(scores), np.array(labels))
    fileio.write_report(args.out, {"w0": params.w0, "w1": params.w1,
                                   "task": args.task})
    return 0


def _cmd_fuse(args):
    asv_rows = fileio.read_scores(args.asv)
    cm_rows = fileio.read_scores(args.cm)
    cm_index = {(e, t): (s, label) for e, t, s, label in cm_rows}
    asv_calib = _load_calibration(args.asv_calib) if args.asv_calib \
        else CalibrationParams(0.0, 1.0)
    cm_calib = _load_calibration(args.cm_calib) if args.cm_calib \
        else CalibrationParams(0.0, 1.0)
    config = FusionConfig(args.mode, args.rho)
    out_rows = []
    for enroll, test, s_asv, label in asv_rows:
        key = (enroll, test)
        if key not in cm_index:
            raise ValueError(f"trial {enroll}/{test} missing from CM scores")
        s_cm, cm_label = cm_index[key]
        if cm_label is not label:
            raise ValueError(f"label mismatch for trial {enroll}/{test}")
        llr_a = float(calibrate(s_asv, asv_calib))
        llr_c = float(calibrate(s_cm, cm_calib))
        out_rows.append((enroll, test, float(fuse(llr_a, llr_c, config)),
                         label))
    fileio.write_scores(args.out, out_rows)
    return 0


def _cmd_eval(args):
    rows = fileio.read_scores(args.scores)
    scores = np.array([s for _, _, s, _ in rows])
    labels = [label for _, _, _, label in rows]
    cm = _cost_model(args)
    normalized = not args.unnormalized
    report = min_adcf(scores, labels, cm, normalized=normalized)
    tar = scores[[l is TrialLabel.TARGET for l in labels]]
    non = scores[[l is TrialLabel.NONTARGET for l in labels]]
    spf = scores[[l is TrialLabel.SPOOF for l in labels]]
    sv_eer, sv_tau = eer(tar, non)
    spf_eer, spf_tau = eer(tar, spf)
    doc = {
        "cost_model": _cost_model_json(cm),
        "normalized": normalized,
        "min_adcf": report.min_adcf,
        "min_threshold": report.min_threshold,
        "rates_at_min": {
            "p_miss_tar": report.rates_at_min.p_miss_tar,
            "p_fa_non": report.rates_at_min.p_fa_non,
            "p_fa_spf": report.rates_at_min.p_fa_spf,
        },
        "sv_eer": sv_eer,
        "sv_eer_threshold": sv_tau,
        "spf_eer": spf_eer,
        "spf_eer_threshold": spf_tau,
        "n_trials": len(rows),
    }
    if args.threshold is not None:
        doc["act_adcf"] = actual_adcf(scores, labels, args.threshold, cm,
                                      normalized=normalized)
        doc["act_threshold"] = args.threshold
    fileio.write_report(args.report, doc)
    return 0


def _cmd_train(args):
    asv_store = fileio.read_embeddings(args.asv_emb)
    cm_store = fileio.read_embeddings(args.cm_emb)
    train_trials = fileio.read_protocol(args.train_proto)
    dev_trials = fileio.read_protocol(args.dev_proto)
    cfg = TrainConfig(
        architecture=args.arch,
        fusion_mode=args.fusion,
        loss_variant=args.loss,
        optimizer=args.optimizer,
        init=args.init,
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        seed=args.seed,
        alpha=args.alpha,
        cost_model=_cost_model(args),
        loss_weights=LossWeights(),
    )
    ckpt, log = train_joint(cfg, asv_store, cm_store, train_trials,
                            dev_trials)
    config_echo = {
        "architecture": cfg.architecture, "fusion_mode": cfg.fusion_mode,
        "loss_variant": cfg.loss_variant, "optimizer": cfg.optimizer,
        "init": cfg.init, "epochs": cfg.epochs,
        "batch_size": cfg.batch_size, "lr": cfg.lr, "seed": cfg.seed,
        "alpha": cfg.alpha, "cost_model": _cost_model_json(cfg.cost_model),
        "best_epoch": ckpt.epoch,
    }
    fileio.write_checkpoint(args.out, ckpt.model, config=config_echo,
                            dev_min_adcf=ckpt.dev_min_adcf,
                            dev_threshold=ckpt.dev_threshold)
    if args.log:
        text = "".join(json.dumps(entry, sort_keys=True) + "\n"
                       for entry in log)
        fileio._atomic_write(args.log, text)
    return 0


def _cmd_det(args):
    rows = fileio.read_scores(args.scores)
    scores = np.array([s for _, _, s, _ in rows])
    labels = [label for _, _, _, label in rows]
    pos = scores[[l is TrialLabel.TARGET for l in labels]]
    neg_label = TrialLabel.NONTARGET if args.negatives == "nontarget" \
        else TrialLabel.SPOOF
    neg = scores[[l is neg_label for l in labels]]
    fileio.write_det_csv(args.out, det_points(pos, neg))
    return 0


def _cmd_grid(args):
    cm = _cost_model(args)
    if args.ckpt:
        model, _ = fileio.read_checkpoint(args.ckpt)
        if model.fusion_mode == "nonlinear":
            fusion = FusionConfig("nonlinear", model.rho_tilde)
        else:
            fusion = FusionConfig("linear")
    elif args.mode:
        fusion = FusionConfig(args.mode, args.rho)
    else:
        raise ValueError("grid needs either --ckpt or --mode")
    spec = GridSpec(args.amin, args.amax, args.cmin, args.cmax,
                    args.na, args.nc)
    fileio.write_grid_csv(args.out, boundary_grid(fusion, cm, spec))
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "calibrate": _cmd_calibrate,
    "fuse": _cmd_fuse,
    "eval": _cmd_eval,
    "train": _cmd_train,
    "det": _cmd_det,
    "grid": _cmd_grid,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"sasv {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
