"""Headline benchmark: every threshold rule on the severity-5 corruption mix.

Writes one per-batch CSV per (method, alpha, seed) into the results
directory, then prints the aggregated summary table.  Equivalent to looping
``driftcp simulate`` over methods and calling ``driftcp report`` at the end.
"""

import argparse

from driftcp.config import load_config
from driftcp.harness import resolve_outdir, run_simulate
from driftcp.report import run_report

METHODS = ("THR", "NexCP", "QTC", "CUI")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="optional base YAML config")
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--alphas", type=float, nargs="*", default=[0.1, 0.2, 0.3])
    parser.add_argument("--beta", type=float, default=1.0)
    parser.add_argument("--methods", nargs="*", default=list(METHODS))
    parser.add_argument("--output-dir", default=None)
    args = parser.parse_args()

    outdir = resolve_outdir(args.output_dir)
    seeds = ",".join(str(s) for s in range(args.seeds))
    for method in args.methods:
        for alpha in args.alphas:
            cfg = load_config(
                args.config,
                [
                    f"seeds=[{seeds}]",
                    f"predictor.method={method}",
                    f"predictor.alpha={alpha!r}",
                    f"predictor.beta={args.beta!r}",
                ],
            )
            run_simulate(cfg, outdir=outdir)
            print(f"done: {method} alpha={alpha:g}")

    summary, text = run_report(outdir)
    print()
    print(text, end="")
    print(f"\nwrote {outdir}/report.csv")


if __name__ == "__main__":
    main()
