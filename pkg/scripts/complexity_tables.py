#!/usr/bin/env python3
"""Reproduce the architecture complexity tables.

Prints trainable-parameter totals for all twelve architectures on the four
benchmark input shapes, marks agreement with the published reference
totals, and shows the per-layer breakdown for one chosen architecture.
"""

import argparse

from p300kit.arch import builtin_names, get_architecture
from p300kit.complexity import count_params, format_report_text

SHAPES = [(6, 206), (64, 156), (64, 240), (8, 206)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--detail", default="sepconv1d",
                        help="architecture to expand layer by layer")
    parser.add_argument("--bn-running-stats", action="store_true")
    args = parser.parse_args()

    header = f"{'architecture':<16}" + "".join(f"{f'{c}x{s}':>14}" for c, s in SHAPES)
    print(header)
    print("-" * len(header))
    for name in builtin_names():
        cells = []
        for channels, samples in SHAPES:
            report = count_params(get_architecture(name, channels, samples),
                                  count_bn_running_stats=args.bn_running_stats)
            mark = ""
            if report.reference_params is not None:
                mark = "=" if report.total_params == report.reference_params else "!"
            cells.append(f"{report.total_params:>13,}{mark or ' '}")
        print(f"{name:<16}" + "".join(cells))
    print("\n'=' matches the published reference total, '!' differs "
          "(see tests/golden/discrepancy_ledger.json).\n")

    report = count_params(get_architecture(args.detail, 6, 206),
                          count_bn_running_stats=args.bn_running_stats)
    print(format_report_text(report))


if __name__ == "__main__":
    main()
