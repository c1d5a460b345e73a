"""Print temperature and grid entropy along a relaxation run as CSV.

    python3 scripts/relaxation.py configs/two_species.json --t-end 0.3 > relax.csv
"""

import argparse
import csv
import dataclasses
import sys

from mixkinetic.cli import load_config
from mixkinetic.harness import EntropyProbe
from mixkinetic.simulator import run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--t-end", type=float)
    ap.add_argument("--particles", type=int)
    ap.add_argument("--half-width", type=float, default=10.0)
    args = ap.parse_args()

    _, cfg, sim, _ = load_config(args.config)
    changes = {"grid_half_width": args.half_width, "grid_every": sim.grid_every or sim.output_every}
    if args.t_end is not None:
        changes["t_end"] = args.t_end
    if args.particles is not None:
        changes["n_particles"] = args.particles
    sim = dataclasses.replace(sim, **changes)
    res = run(cfg, sim, probe=EntropyProbe(sim.grid_n, args.half_width))

    w = csv.writer(sys.stdout)
    w.writerow(["time", "H", "LlogL"] + [f"T{i + 1}" for i in range(cfg.n_species)])
    temps = dict(zip(res.table.times, res.temperatures))
    for t, p in res.probes:
        T = temps.get(t)
        w.writerow([f"{t:.6g}", f"{p['H']:.6g}", f"{p['LlogL']:.6g}"]
                   + ([f"{x:.6g}" for x in T] if T is not None else [""] * cfg.n_species))


if __name__ == "__main__":
    main()
