"""pe_eff/M recovery curves in information-sharing mode for ARNA, RNA-50% and RNA-10%.

Writes one CSV per arm into --out-dir and prints the median curve.
"""
import argparse
from pathlib import Path

import numpy as np

from arnapf.bench import ScenarioConfig, SceneCache, frac_at, run_scenario, write_results

ARMS = {"arna": dict(algorithm="arna"),
        "rna50": dict(algorithm="rna", ratio=0.5),
        "rna10": dict(algorithm="rna", ratio=0.1)}


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--pes", type=int, default=24)
    p.add_argument("--particles-per-pe", type=int, default=40)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--out-dir", default="results/info_sharing")
    args = p.parse_args()

    out = Path(args.out_dir)
    cache = SceneCache()
    curves = {}
    for name, arm in ARMS.items():
        cfg = ScenarioConfig(mode="info_sharing", m=args.pes, n_p=args.particles_per_pe,
                             frames=args.iterations + 1, width=args.size, height=args.size,
                             replicates=args.seeds, **arm)
        records = run_scenario(cfg, cache)
        write_results(records, out / f"m{args.pes}_{name}.csv")
        curves[name] = [np.median(frac_at(records, k)) for k in range(1, args.iterations + 1)]

    print("iter  " + "".join(f"{n:>8}" for n in curves))
    for k in range(args.iterations):
        print(f"{k + 1:>4}  " + "".join(f"{c[k]:>8.3f}" for c in curves.values()))


if __name__ == "__main__":
    main()
