"""Bit-exact file formats: protocols, scores, embeddings, checkpoints, CSV."""

from __future__ import annotations

import json
import os
import struct
import tempfile
import warnings

import numpy as np

from .core import EmbeddingStore, TrialLabel, TrialRecord

EMBEDDING_MAGIC = b"SASVEMB1"
EMBEDDING_VERSION = 1


class FormatError(ValueError):
    """Malformed or truncated input file."""


def _atomic_write(path, data, mode="w"):
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory)
    try:
        kwargs = {} if "b" in mode else {"encoding": "utf-8", "newline": ""}
        with os.fdopen(fd, mode, **kwargs) as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- protocols

def write_protocol(path, records):
    lines = [f"{r.enroll_id}\t{r.test_id}\t{r.label.value}\n"
             for r in records]
    _atomic_write(path, "".join(lines))


def read_protocol(path):
    records = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 tab-separated "
                                  f"fields, got {len(parts)}")
            enroll_id, test_id, label_text = parts
            try:
                label = TrialLabel.from_string(label_text)
                record = TrialRecord(enroll_id, test_id, label)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            key = (enroll_id, test_id)
            if key in seen:
                warnings.warn(f"{path}:{lineno}: duplicate trial "
                              f"{enroll_id}/{test_id}")
            seen.add(key)
            records.append(record)
    return records


# ------------------------------------------------------------------- scores

def _format_score(x):
    # repr round-trips f64 exactly and always carries >= 9 significant digits
    # for non-trivial values
    return repr(float(x))


def write_scores(path, rows):
    """rows: iterable of (enroll_id, test_id, score, TrialLabel)."""
    lines = [f"{e}\t{t}\t{_format_score(s)}\t{label.value}\n"
             for e, t, s, label in rows]
    _atomic_write(path, "".join(lines))


def read_scores(path):
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 tab-separated "
                                  f"fields, got {len(parts)}")
            enroll_id, test_id, score_text, label_text = parts
            try:
                score = float(score_text)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: unparseable score "
                                  f"{score_text!r}") from exc
            try:
                label = TrialLabel.from_string(label_text)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            rows.append((enroll_id, test_id, score, label))
    return rows


# --------------------------------------------------------------- embeddings

def write_embeddings(path, store):
    parts = [EMBEDDING_MAGIC,
             struct.pack("<BII", EMBEDDING_VERSION, len(store), store.dim)]
    for utt_id, vec in store.items():
        id_bytes = utt_id.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise FormatError(f"utterance id too long: {utt_id!r}")
        parts.append(struct.pack("<H", len(id_bytes)))
        parts.append(id_bytes)
        parts.append(vec.astype("<f4").tobytes())
    _atomic_write(path, b"".join(parts), mode="wb")


def read_embeddings(path):
    with open(path, "rb") as f:
        data = f.read()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"{path}: truncated while reading {what}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(8, "magic") != EMBEDDING_MAGIC:
        raise FormatError(f"{path}: bad magic, not an embedding file")
    version, count, dim = struct.unpack("<BII", take(9, "header"))
    if version != EMBEDDING_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dim <= 0:
        raise FormatError(f"{path}: nonpositive dimension {dim}")
    store = EmbeddingStore(dim)
    for k in range(count):
        (id_len,) = struct.unpack("<H", take(2, f"entry {k} id length"))
        try:
            utt_id = take(id_len, f"entry {k} id").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: entry {k} id is not UTF-8") from exc
        values = np.frombuffer(take(4 * dim, f"entry {k} values"),
                               dtype="<f4").astype(np.float64)
        try:
            store.add(utt_id, values)
        except ValueError as exc:
            raise FormatError(f"{path}: entry {k}: {exc}") from exc
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes")
    return store


# -------------------------------------------------------------- checkpoints

def _mlp_to_json(mlp):
    if mlp is None:
        return None
    return {
        "shapes": [list(w.shape) for w in mlp.weights],
        "activations": list(mlp.activations),
        "weights": [w.ravel().tolist() for w in mlp.weights],
        "biases": [b.tolist() for b in mlp.biases],
    }


def _mlp_from_json(obj, where):
    from .nn import MlpParams

    if obj is None:
        return None
    try:
        shapes = obj["shapes"]
        weights = []
        for shape, flat in zip(shapes, obj["weights"], strict=True):
            arr = np.asarray(flat, dtype=np.float64)
            if arr.size != shape[0] * shape[1]:
                raise FormatError(
                    f"{where}: weight array length {arr.size} does not match "
                    f"declared shape {shape}")
            weights.append(arr.reshape(shape))
        biases = []
        for shape, flat in zip(shapes, obj["biases"], strict=True):
            arr = np.asarray(flat, dtype=np.float64)
            if arr.size != shape[0]:
                raise FormatError(
                    f"{where}: bias array length {arr.size} does not match "
                    f"declared shape {shape}")
            biases.append(arr)
        return MlpParams(weights, biases, list(obj["activations"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{where}: malformed MLP block: {exc}") from exc


KNOWN_ARCHITECTURES = ("mlp-mlp", "cosine-mlp", "wcos-mlp")


def checkpoint_to_json(model, config=None, dev_min_adcf=None,
                       dev_threshold=None):
    """Canonical JSON text for a trained model snapshot."""
    doc = {
        "format": "sasv-checkpoint",
        "version": 1,
        "architecture": model.architecture,
        "fusion_mode": model.fusion_mode,
        "d_asv": model.d_asv,
        "d_cm": model.d_cm,
        "asv_mlp": _mlp_to_json(model.asv_mlp),
        "w_asv": None if model.w_asv is None else model.w_asv.tolist(),
        "cm_mlp": _mlp_to_json(model.cm_mlp),
        "asv_calib": {"w0": model.asv_calib.w0, "w1": model.asv_calib.w1},
        "cm_calib": {"w0": model.cm_calib.w0, "w1": model.cm_calib.w1},
        "rho_logit": model.rho_logit,
        "tau": model.tau,
        "config": config,
        "dev_min_adcf": dev_min_adcf,
        "dev_threshold": dev_threshold,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def write_checkpoint(path, model, config=None, dev_min_adcf=None,
                     dev_threshold=None):
    _atomic_write(path, checkpoint_to_json(model, config, dev_min_adcf,
                                           dev_threshold))


def read_checkpoint(path):
    """Returns (ModelParams, metadata dict with config/dev fields)."""
    from .decision import CalibrationParams
    from .train import ModelParams

    with open(path, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != "sasv-checkpoint":
        raise FormatError(f"{path}: not a checkpoint file")
    arch = doc.get("architecture")
    if arch not in KNOWN_ARCHITECTURES:
        raise FormatError(f"{path}: unknown architecture tag {arch!r}")
    try:
        w_asv = doc["w_asv"]
        model = ModelParams(
            architecture=arch,
            fusion_mode=doc["fusion_mode"],
            d_asv=int(doc["d_asv"]),
            d_cm=int(doc["d_cm"]),
            asv_mlp=_mlp_from_json(doc["asv_mlp"], f"{path}: asv_mlp"),
            w_asv=None if w_asv is None else np.asarray(w_asv,
                                                        dtype=np.float64),
            cm_mlp=_mlp_from_json(doc["cm_mlp"], f"{path}: cm_mlp"),
            asv_calib=CalibrationParams(doc["asv_calib"]["w0"],
                                        doc["asv_calib"]["w1"]),
            cm_calib=CalibrationParams(doc["cm_calib"]["w0"],
                                       doc["cm_calib"]["w1"]),
            rho_logit=float(doc["rho_logit"]),
            tau=float(doc["tau"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: malformed checkpoint field: {exc}") \
            from exc
    model.validate()
    meta = {"config": doc.get("config"),
            "dev_min_adcf": doc.get("dev_min_adcf"),
            "dev_threshold": doc.get("dev_threshold")}
    return model, meta


# ---------------------------------------------------------------------- CSV

def _format_g12(x):
    return f"{x:.12g}"


def write_det_csv(path, points):
    lines = ["p_fa,p_miss\n"]
    lines += [f"{_format_g12(p_fa)},{_format_g12(p_miss)}\n"
              for p_fa, p_miss in points]
    _atomic_write(path, "".join(lines))


def write_grid_csv(path, rows):
    lines = ["llr_asv,llr_cm,s_sasv,accept\n"]
    lines += [f"{_format_g12(a)},{_format_g12(c)},{_format_g12(s)},"
              f"{1 if accept else 0}\n" for a, c, s, accept in rows]
    _atomic_write(path, "".join(lines))


def write_report(path, report_dict):
    _atomic_write(path, json.dumps(report_dict, sort_keys=True, indent=2)
                  + "\n")
