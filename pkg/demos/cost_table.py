"""Print parameter and FLO counts for the shipped networks, with per-layer detail.

The per-layer view makes the width multiplier's effect visible: pointwise
convolutions scale with alpha squared, depthwise ones only with alpha.

    python demos/cost_table.py --layers 0.5
"""

import argparse

from framegrind import costmodel as cm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--layers", type=float, metavar="ALPHA",
                    help="also list MobileNet layer costs at this width multiplier")
    args = ap.parse_args()

    rows = cm.table_report(cm.shipped_architectures(), cm.MOBILENET_VARIANTS)
    print(f"{'network':<36}{'params (M)':>12}{'FLO (G)':>10}")
    for r in rows:
        print(f"{r.name:<36}{r.params / 1e6:12.3f}{r.flo / 1e9:10.4f}")

    if args.layers is not None:
        arch = cm.shipped_architecture("mobilenet_v1")
        print(f"\nMobileNet layers at alpha={args.layers:g}, rho=1")
        for i, c in enumerate(cm.layer_costs(arch, args.layers, 1.0)):
            print(f"{i:3d} {c.layer.kind:<14} k={c.layer.k} s={c.layer.stride} "
                  f"{c.in_channels:5d}->{c.out_channels:<5d} {c.out_spatial:4d}px "
                  f"{c.params:9d} params {c.flo / 1e6:8.2f} MFLO")


if __name__ == "__main__":
    main()
