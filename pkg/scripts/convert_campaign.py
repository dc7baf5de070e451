"""Convert a measurement campaign in matrix form into a bundle directory.

Inputs are whitespace-delimited text:

    coords file   one row per node: x y            (meters, N rows)
    range file    N x N matrix, row i column j = range from i to j;
                  the diagonal and missing entries may be 0, nan or negative

Both directions of a pair are kept; the loader averages them and warns when
they disagree by more than 3 sigma. The average range error is not part of
the raw data, so ``--avg-bias`` must be given explicitly.

    python scripts/convert_campaign.py --coords xy.txt --ranges r.txt \\
        --anchors 0 5 38 43 --avg-bias 1.2 --out data/office
"""
import argparse
import json
from pathlib import Path

import numpy as np


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--coords", required=True)
    ap.add_argument("--ranges", required=True)
    ap.add_argument("--anchors", type=int, nargs="+", required=True, help="0-based node indices")
    ap.add_argument("--avg-bias", type=float, required=True, help="average range error (m)")
    ap.add_argument("--sigma-n", type=float, default=1.0)
    ap.add_argument("--range-scale", type=float, default=1.0, help="multiplier to convert ranges to meters")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    xy = np.loadtxt(args.coords, ndmin=2)[:, :2]
    R = np.loadtxt(args.ranges, ndmin=2) * args.range_scale
    n = xy.shape[0]
    if R.shape != (n, n):
        raise SystemExit(f"range matrix is {R.shape}, expected {(n, n)}")
    bad = [a for a in args.anchors if not 0 <= a < n]
    if bad:
        raise SystemExit(f"anchor index out of range: {bad}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    anchors = set(args.anchors)
    with open(out / "nodes.csv", "w") as fh:
        fh.write("id,x_m,y_m,role\n")
        for i in range(n):
            fh.write(f"n{i},{float(xy[i, 0])!r},{float(xy[i, 1])!r},{'anchor' if i in anchors else 'sensor'}\n")
    kept = 0
    with open(out / "ranges.csv", "w") as fh:
        fh.write("i,j,range_m\n")
        for i in range(n):
            for j in range(n):
                r = R[i, j]
                if i != j and np.isfinite(r) and r > 0:
                    fh.write(f"n{i},n{j},{float(r)!r}\n")
                    kept += 1
    meta = {"avg_bias": args.avg_bias, "sigma_n": args.sigma_n, "surrogate": False}
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {out}: {n} nodes ({len(anchors)} anchors), {kept} directed ranges")


if __name__ == "__main__":
    main()
