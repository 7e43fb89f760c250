"""Median tracking RMSE versus particles per PE at several process-noise levels.

The truth and the filter share the noise level (intensity noise only in the
filter). Shows where particle count stops mattering because the error is
set by the data rather than by Monte Carlo noise.
"""
import argparse

import numpy as np

from arnapf.bench import ScenarioConfig, SceneCache, run_scenario

LEVELS = [(0.02, 0.005, 0.1), (0.05, 0.02, 0.1), (0.1, 0.05, 0.1), (0.2, 0.1, 0.1),
          (0.3, 0.15, 0.5)]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--pes", type=int, default=24)
    p.add_argument("--particles-per-pe", type=int, nargs="+", default=[40, 100, 200])
    p.add_argument("--seeds", type=int, default=10)
    args = p.parse_args()

    for sp, sv, si in LEVELS:
        cache = SceneCache()
        meds = []
        for n_p in args.particles_per_pe:
            cfg = ScenarioConfig(mode="tracking", m=args.pes, n_p=n_p, replicates=args.seeds,
                                 sigma_pos=sp, sigma_vel=sv, sigma_i=si,
                                 truth_sigma_pos=sp, truth_sigma_vel=sv)
            meds.append(np.median([r.rmse for r in run_scenario(cfg, cache)]))
        print(f"sigma=({sp}, {sv}, {si})  " + "  ".join(
            f"n_p={n}: {m:.4f}" for n, m in zip(args.particles_per_pe, meds)))


if __name__ == "__main__":
    main()
