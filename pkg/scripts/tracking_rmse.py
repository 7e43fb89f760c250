"""Tracking RMSE and exchanged-particle totals versus particles per PE."""
import argparse
from pathlib import Path

import numpy as np

from arnapf.bench import ScenarioConfig, SceneCache, run_scenario, write_results


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--pes", type=int, default=24)
    p.add_argument("--particles-per-pe", type=int, nargs="+", default=[40, 100, 200])
    p.add_argument("--algo", nargs="+", default=["arna", "rna"])
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--out-dir", default="results/tracking")
    args = p.parse_args()

    cache = SceneCache()
    print(f"{'algo':<8}{'n_p':>6}{'median rmse':>13}{'mean rmse':>11}{'exchanged':>11}")
    for algo in args.algo:
        for n_p in args.particles_per_pe:
            cfg = ScenarioConfig(mode="tracking", algorithm=algo, ratio=0.1, m=args.pes, n_p=n_p,
                                 frames=args.frames, width=args.size, height=args.size,
                                 replicates=args.seeds)
            records = run_scenario(cfg, cache)
            write_results(records, Path(args.out_dir) / f"{cfg.label}_np{n_p}.csv")
            err = [r.rmse for r in records]
            exch = np.mean([r.total_exchanged for r in records])
            print(f"{cfg.label:<8}{n_p:>6}{np.median(err):>13.4f}{np.mean(err):>11.4f}"
                  f"{exch:>11.0f}")


if __name__ == "__main__":
    main()
