"""Average Obj/Delay/Fairness/Load per scheme over seeded desk-scale instances.

    python3 scripts/compare_table.py --seeds 20 --out table.csv
"""
import argparse
import csv
import sys

import numpy as np

from mopc.admm import SolveOptions
from mopc.baseline import FwOptions
from mopc.cli import COMPARE_SCHEMES, run_scheme
from mopc.gen import desk_scale, generate_instance
from mopc.model import cardinality_ok


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=1500)
    p.add_argument("--out", help="optional CSV with one row per (seed, scheme)")
    args = p.parse_args(argv)

    sopts, fopts = SolveOptions(max_iters=args.max_iters), FwOptions()
    rows = []
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        inst = generate_instance(desk_scale(seed))
        for scheme in COMPARE_SCHEMES:
            rep = run_scheme(inst, scheme, sopts, fopts)
            m = rep.metrics
            rows.append((seed, scheme, m.obj, m.delay, m.fairness, m.load,
                         cardinality_ok(inst, rep.final.x), rep.status))
        print(f"seed {seed} done", file=sys.stderr)

    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("seed", "scheme", "obj", "delay", "fairness", "load", "card_ok", "status"))
            w.writerows(rows)

    print(f"{'scheme':<22}{'Obj':>10}{'Delay':>10}{'Fairness':>10}{'Load':>8}{'card':>6}")
    for scheme in COMPARE_SCHEMES:
        sel = [r for r in rows if r[1] == scheme]
        mean = np.mean([r[2:6] for r in sel], axis=0)
        ok = sum(r[6] for r in sel)
        print(f"{scheme:<22}{mean[0]:10.2f}{mean[1]:10.2f}{mean[2]:10.2f}{mean[3]:8.3f}{ok:>4}/{len(sel)}")
    ncv = {r[0]: r[2] for r in rows if r[1] == "mopc"}
    for base in ("fw-projected", "fw-relaxed-projected"):
        wins = sum(ncv[r[0]] <= r[2] for r in rows if r[1] == base)
        print(f"mopc obj <= {base}: {wins}/{len(ncv)}")


if __name__ == "__main__":
    main()
