"""Write a synthetic 44-node office bundle (nodes.csv, ranges.csv, meta.json)."""
import argparse

from robustloc.dataio import make_surrogate_bundle, save_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    b = make_surrogate_bundle(args.seed)
    save_dataset(b, args.out)
    print(f"wrote {args.out}: {b.num_sensors} sensors, {b.num_anchors} anchors, "
          f"{len(b.ranges)} links, average bias {b.avg_bias:.3f} m")


if __name__ == "__main__":
    main()
