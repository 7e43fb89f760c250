"""Command-line entry point: ``arnapf run | gen-scene | report``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .bench import ScenarioConfig, group_runs, read_results, run_scenario, write_results
from .synth import SceneSpec, generate_scene, load_scene, save_scene

# flag dest -> ScenarioConfig field
_RUN_FLAGS = {
    "mode": "mode", "algo": "algorithm", "ratio": "ratio", "pes": "m",
    "particles_per_pe": "n_p", "frames": "frames", "snr": "snr", "seed": "seed",
    "replicates": "replicates", "cutoff": "cutoff", "backend": "backend",
    "width": "width", "height": "height",
}


def load_config(path) -> dict:
    """Read a JSON config whose keys are ScenarioConfig fields or run flag names."""
    with open(path) as fh:
        raw = json.load(fh)
    out = {}
    for key, value in raw.items():
        key = key.replace("-", "_")
        out[_RUN_FLAGS.get(key, key)] = value
    return out


def config_from_args(args) -> ScenarioConfig:
    values = load_config(args.config) if args.config else {}
    for dest, name in _RUN_FLAGS.items():
        v = getattr(args, dest)
        if v is not None:
            values[name] = v
    if values.get("algorithm") == "rna" and "ratio" not in values:
        values["ratio"] = 0.1
    return ScenarioConfig.from_dict(values)


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    scene = load_scene(args.scene) if args.scene else None
    if scene is not None:
        cfg.width, cfg.height, cfg.frames = scene.width, scene.height, len(scene.frames)
    records = run_scenario(cfg, scene=scene)
    if not records:
        print("no replicates requested; nothing to do")
        return 0
    csv_path, summary_path = write_results(records, args.out)
    ok = [r for r in records if not r.diverged]
    for r in records:
        flag = " DIVERGED" if r.diverged else ""
        print(f"{r.run_id}: rmse={r.rmse:.4f} px  final pe_eff/M={r.rows[-1].pe_eff_frac:.3f}  "
              f"exchanged={r.total_exchanged}  bytes={r.total_bytes}{flag}"
              if r.rows else f"{r.run_id}: no iterations{flag}")
    print(f"wrote {csv_path} and {summary_path}")
    return 0 if ok else 2


def cmd_gen_scene(args) -> int:
    spec = SceneSpec(frames=args.frames, width=args.width, height=args.height, snr=args.snr,
                     speed=args.speed, noise_free=args.noise_free)
    scene = generate_scene(spec, args.seed)
    path = save_scene(scene, args.out)
    print(f"wrote {path}: {len(scene.frames)} frames of {scene.width}x{scene.height}, "
          f"i0={scene.trajectory.states[0, 4]:.3f}")
    return 0


def _group_key(run_id: str) -> str:
    return run_id.rsplit("-s", 1)[0]


def cmd_report(args) -> int:
    groups: dict[str, list] = {}
    for path in args.csv:
        for run_id, rows in group_runs(read_results(path)).items():
            groups.setdefault(_group_key(run_id), []).append(rows)
    print(f"{'group':<28}{'runs':>5}{'rmse':>9}{'frac@' + str(args.at):>10}"
          f"{'final frac':>12}{'exchanged':>12}{'bytes':>14}")
    for key, runs in sorted(groups.items()):
        rmses = [np.sqrt(np.mean([r.err_px ** 2 for r in rows])) for rows in runs]
        at = [next((r.pe_eff_frac for r in rows if r.iteration == args.at), np.nan)
              for rows in runs]
        final = [rows[-1].pe_eff_frac for rows in runs]
        exch = [sum(r.exchanged for r in rows) for rows in runs]
        nbytes = [sum(r.bytes for r in rows) for rows in runs]
        print(f"{key:<28}{len(runs):>5}{np.mean(rmses):>9.4f}{np.nanmedian(at):>10.3f}"
              f"{np.median(final):>12.3f}{np.mean(exch):>12.1f}{np.mean(nbytes):>14.1f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arnapf", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a tracking or information-sharing scenario")
    r.add_argument("--config", help="JSON file with scenario settings; flags override it")
    r.add_argument("--mode", choices=["tracking", "info_sharing"])
    r.add_argument("--algo", choices=["rna", "arna", "sir_independent"])
    r.add_argument("--ratio", type=float, help="RNA exchange ratio in [0, 0.5]")
    r.add_argument("--pes", type=int)
    r.add_argument("--particles-per-pe", type=int)
    r.add_argument("--frames", type=int)
    r.add_argument("--snr", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--replicates", type=int)
    r.add_argument("--cutoff", type=float)
    r.add_argument("--backend", choices=["sequential", "parallel"])
    r.add_argument("--width", type=int)
    r.add_argument("--height", type=int)
    r.add_argument("--scene", help="use a scene file from gen-scene instead of generating")
    r.add_argument("--out", default="results.csv")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("gen-scene", help="generate and export a synthetic scene")
    g.add_argument("--frames", type=int, default=50)
    g.add_argument("--width", type=int, default=512)
    g.add_argument("--height", type=int, default=512)
    g.add_argument("--snr", type=float, default=2.0)
    g.add_argument("--speed", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise-free", action="store_true")
    g.add_argument("--out", default="scene.npz")
    g.set_defaults(func=cmd_gen_scene)

    rep = sub.add_parser("report", help="summarize result CSVs")
    rep.add_argument("csv", nargs="+")
    rep.add_argument("--at", type=int, default=10, help="iteration for the pe_eff/M column")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
