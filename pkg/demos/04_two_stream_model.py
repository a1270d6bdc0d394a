"""
Two-stream model and one adversarial training step
==================================================

Appearance and motion encoders feed their memories; the joint decoder
predicts the next frame from the concatenated features and memory reads.
A patch discriminator is trained against the prediction.
"""

import numpy as np
import torch

from stmae.config import RunConfig, config_from_dict
from stmae.flow import DifferenceFlow
from stmae.pipeline import build_main, generator_terms, total_generator_loss, train_step

torch.manual_seed(0)
d = RunConfig().to_dict()
d["model"].update(resolution=32, memory_items=8, k_top=4, disc_channels=[8, 8, 8])
d["model"]["encoder"].update(channels=[8, 16, 16, 16], feature_channels=16)
cfg = config_from_dict(d)

model, disc, opt_g, opt_d = build_main(cfg)
n_gen = sum(p.numel() for p in model.generator_parameters())
print(f"generator parameters: {n_gen:,}; discriminator: {sum(p.numel() for p in disc.parameters()):,}")

# A batch holds k_in + 1 frames per clip and the k_in - 1 flows between inputs.
frames = torch.rand(2, 5, 3, 32, 32)
flows = torch.randn(2, 6, 32, 32)
pred, feats = model(frames[:, :4], flows)
print("prediction", tuple(pred.shape), "features", sorted(feats))

terms = generator_terms(model, disc, pred, frames[:, 4], frames[:, 3], feats, cfg.ablation, DifferenceFlow())
print({k: round(v.item(), 4) for k, v in terms.items()})
print("L_G =", round(total_generator_loss(terms, cfg.weights).item(), 4))

# One step: discriminator update, generator update, then the memory write.
model.train()
for step in range(3):
    row = train_step(model, disc, opt_g, opt_d, frames, flows, cfg, DifferenceFlow())
    print(step, {k: round(v, 4) for k, v in row.items()})
assert np.allclose(model.mem_s.items.norm(dim=1).numpy(), 1.0, atol=1e-6)
