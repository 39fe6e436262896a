"""
Threshold and reference-set sweeps
==================================

Two ablations on the default synthetic data: the pairing threshold ``h``
and the size of the reference set used for zero-shot prediction.
"""
import numpy as np

from tgv import TrainConfig
from tgv.synthdata import SynthConfig
from tgv import experiments as ex

split = ex.synthetic_split(SynthConfig(seed=0))
mg = ex.mean_guess_mae(split.train, split.test, "phenotype")
print(f"mean-guess phenotype MAE {mg:.3f}")

# %%
# h = 0 pairs each anchor with its single best tabular match. Admitting
# near-ties gives the encoder more (noisier) positives per anchor.
rows = ex.ablation(split, "h", ex.THRESHOLD_GRID, TrainConfig(seed=0), "phenotype", "regression",
                   run_finetune=False)
for row in rows:
    print(f"h={row.value:<5} zero-shot MAE {row.zs_metric:.3f} +/- {row.zs_std:.3f}")

# %%
# Shrink the reference set. Fewer references means fewer close neighbours.
state = ex.pretrain(split.train, split.schema, TrainConfig(seed=0)).state
ladder = ex.refset_ladder(state, split.train, split.test, "phenotype", "regression")
for frac in ex.REFSET_FRACTIONS:
    r = ladder[frac]
    print(f"{frac:>5.0%} of the reference set: MAE {r.mean:.3f} +/- {r.std:.3f}")
print("monotone:", bool(np.all(np.diff([ladder[f].mean for f in ex.REFSET_FRACTIONS]) > 0)))
