"""Figure-rendering script over echobits output directories.

    echobits-figures signatures --in ECHO_DIR --out fig_signatures.png
    echobits-figures scaling --in SCALING_DIR --kappa-in KAPPA_DIR --out fig_scaling.png

Exit codes: 0 success, 1 schema mismatch or bad arguments.
"""

from __future__ import annotations

import argparse
import os
import sys

from .render import (
    ScalingSpec,
    SchemaError,
    render_scaling,
    render_signatures,
    signatures_spec_from_dir,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise SchemaError(message)


def main(argv=None) -> int:
    parser = _Parser(prog="echobits-figures")
    sub = parser.add_subparsers(dest="command", required=True)
    sig = sub.add_parser("signatures", help="fidelity and work-echo panels")
    sig.add_argument("--in", dest="in_dir", required=True,
                     help="directory produced by `echobits echo`")
    sig.add_argument("--out", required=True)
    sca = sub.add_parser("scaling", help="overflow-time scaling with inset")
    sca.add_argument("--in", dest="in_dir", required=True,
                     help="directory produced by `echobits scaling`")
    sca.add_argument("--kappa-in", dest="kappa_dir", required=True,
                     help="directory produced by `echobits kappa-curve`")
    sca.add_argument("--out", required=True)
    try:
        ns = parser.parse_args(argv)
        if ns.command == "signatures":
            out = render_signatures(signatures_spec_from_dir(ns.in_dir, ns.out))
        else:
            summary = os.path.join(ns.kappa_dir, "summary.json")
            out = render_scaling(ScalingSpec(
                scaling_csv=os.path.join(ns.in_dir, "scaling.csv"),
                kappa_csv=os.path.join(ns.kappa_dir, "kappa_curve.csv"),
                manifest_path=os.path.join(ns.in_dir, "manifest.json"),
                out_path=ns.out,
                kappa_summary_path=summary if os.path.exists(summary) else None))
        print(f"wrote {out}")
        return 0
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
