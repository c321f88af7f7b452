"""PSNR landscape of one method over a two-parameter grid, printed as a table."""
import argparse

import numpy as np

from crossdiff import bench, synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--method", default="cd", choices=("cd", "pm-grad", "pm-lap"))
    ap.add_argument("--kind", default="shapes", choices=synthetic.KINDS)
    ap.add_argument("--size", type=int, default=96)
    ap.add_argument("--T", default="0.05,0.1,0.2,0.3")
    ap.add_argument("--lam", default=None, help="comma list (default depends on method)")
    ap.add_argument("--seeds", default="0,1")
    args = ap.parse_args()

    lam_default = {"cd": "0.1,0.15,0.3", "pm-grad": "10,20,40,70", "pm-lap": "10,20,50"}[args.method]
    Ts = [float(v) for v in args.T.split(",")]
    lams = [float(v) for v in (args.lam or lam_default).split(",")]
    clean = synthetic.generate_synthetic(args.kind, args.size, 1)
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = bench.sweep(args.method, clean, {"T": Ts, "lambda": lams}, seeds)
    table = {(r.params["T"], r.params["lambda"]): r.psnr for r in rows}
    initial = np.mean([bench.image.psnr(clean, bench.make_noisy(clean, s)) for s in seeds])

    print(f"{args.method} on {args.kind} {args.size}x{args.size}, noisy PSNR {initial:.2f} dB")
    print("T \\ lambda " + "".join(f"{l:>9g}" for l in lams))
    for T in Ts:
        print(f"{T:<11g}" + "".join(f"{table[(T, l)]:9.2f}" for l in lams))
    best = rows[0]
    print(f"best: T={best.params['T']:g} lambda={best.params['lambda']:g} psnr={best.psnr:.2f}")


if __name__ == "__main__":
    main()
