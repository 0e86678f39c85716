"""Throwaway driver: build the acceptance corpus with the C3 experiments first."""
from dataclasses import replace
from pathlib import Path

import numpy as np

from contextrl.config import load_experiments
from contextrl.harness import read_eval_csv, run_experiment, summarize

CACHE = Path(".cache/acceptance")
ORDER = ["cdakd_n1", "no_clustering_n1", "dqn_n1", "no_distill_n1",
         "cdakd_n100", "dqn_n100", "probe_pretrain"]

cfgs = {c.name: c for c in load_experiments("configs/acceptance.cfg")}
for name in ORDER:
    cfg = cfgs[name]
    out = CACHE / name
    if (out / "manifest.txt").is_file():
        print(f"{name}: cached", flush=True)
        continue
    print(f"running {name} ...", flush=True)
    run_experiment(replace(cfg, output_dir=str(out)))
    tails = []
    for s in cfg.seeds:
        t = read_eval_csv(out / f"seed_{s}" / "eval.csv")
        tails.append(float(np.nanmean(t["R_T"][-10:])))
    print(f"{name} tails: " + " ".join(f"{v:.1f}" for v in tails)
          + f"  mean {np.mean(tails):.1f}", flush=True)

summarize(CACHE, out_dir=CACHE)
print("corpus complete", flush=True)
