#!/usr/bin/env python3
"""A reduced active-learning sweep that finishes in under a minute.

The full default run (2000-utterance pool, 5 seeds) is what the acceptance
suite uses. Here the pool is 400 utterances and there is one seed. The
numbers are noisier, but every artifact of the real run is produced.
"""

import json
import tempfile
from pathlib import Path

from eglab.harness import ExperimentConfig, run_experiment

out = Path(tempfile.mkdtemp(prefix="eglab_demo_"))
cfg = ExperimentConfig.from_dict({
    "n_seed": 100, "n_pool": 400, "n_test": 200,
    "train": {"epochs": 25},
    "query_fractions": [0.1, 0.25, 0.5],
    "seeds": [0],
    "output_dir": str(out),
})
table = run_experiment(cfg)
print(table.pretty("cer"))
print()
print(table.pretty("mean_ctc"))

summary = json.loads((out / "seed_0" / "ranks_summary.json").read_text())
print("\nrank agreement with entropy on the pool:")
for pair in ("pctc_vs_entropy", "egl_vs_entropy"):
    print(f"  {pair:16s} spearman {summary[pair]['spearman_rho']:.3f}")

probe = json.loads((out / "seed_0" / "ranks" / "silence_probe.json").read_text())
print(f"\nsilence base rate {probe['base_rate']:.3f}; "
      f"high-EGL / low-entropy quadrant holds {probe['n_quadrant']} utterances, "
      f"{probe['n_silence_in_quadrant']} of them noise-only")
print("low-entropy utterances that EGL ranks highest:")
for row in probe["top"][:8]:
    print(f"  {row['id']}  egl rank {row['egl_rank']:.2f}  entropy rank {row['entropy_rank']:.2f}  "
          f"T={row['n_frames']:2d}  ref len {row['reference_length']}  silence {row['silence']}")
print(f"\nartifacts in {out}")
