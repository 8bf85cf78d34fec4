"""Joint training on spoofs the speaker detector cannot see.

The simulator places spoof test embeddings exactly on the attacked speaker
in ASV space (delta=1), so a cosine ASV system alone is helpless; only the
CM branch carries the evidence.  Jointly training the weighted-cosine +
MLP back-end against the differentiable cost drives the detection cost to
(near) zero.  Run with:

    python3 demos/joint_training_demo.py
"""

import numpy as np

from sasv.core import DEFAULT_COST_MODEL
from sasv.fileio import write_checkpoint
from sasv.metrics import min_adcf
from sasv.nn import cosine_score
from sasv.sim import EmbeddingSimConfig, simulate_embeddings, split_trials
from sasv.train import TrainConfig, train_joint

sim = EmbeddingSimConfig(delta=1.0, n_target=400, n_nontarget=400,
                         n_spoof=400, seed=1)
asv_store, cm_store, trials = simulate_embeddings(sim)
train_trials, dev_trials = split_trials(trials, dev_fraction=0.5, seed=7)
print(f"{len(train_trials)} train / {len(dev_trials)} dev trials, "
      f"ASV dim {asv_store.dim}, CM dim {cm_store.dim}")

# baseline: plain cosine ASV scoring, which cannot tell spoofs apart
cos = np.array([cosine_score(asv_store.get(t.enroll_id),
                             asv_store.get(t.test_id))
                for t in dev_trials])
labels = [t.label for t in dev_trials]
baseline = min_adcf(cos, labels, DEFAULT_COST_MODEL).min_adcf
print(f"cosine ASV alone: dev min a-DCF = {baseline:.3f}")

cfg = TrainConfig(architecture="wcos-mlp", loss_variant="v1",
                  optimizer="sgd", lr=0.3, epochs=15, batch_size=192,
                  seed=3)
ckpt, log = train_joint(cfg, asv_store, cm_store, train_trials, dev_trials)
for entry in log[:5] + (["..."] if len(log) > 5 else []):
    if entry == "...":
        print("  ...")
    else:
        print(f"  epoch {entry['epoch']:3d}: train loss "
              f"{entry['train_loss']:.4f}, dev min a-DCF "
              f"{entry['dev_min_adcf']:.4f}")
print(f"best checkpoint: epoch {ckpt.epoch}, "
      f"dev min a-DCF = {ckpt.dev_min_adcf:.4f}")

write_checkpoint("joint_backend.json", ckpt.model,
                 dev_min_adcf=ckpt.dev_min_adcf,
                 dev_threshold=ckpt.dev_threshold)
print("saved checkpoint to joint_backend.json")
