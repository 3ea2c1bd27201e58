"""Run a config's ablation sweep and print the comparison table and a factor timeline.

    python scripts/run_ablation.py configs/momentum_offline.yaml --ticker AAPL
"""

import argparse
import logging

from llmfactor.errors import EmptyTimeline
from llmfactor.runner import compare_reports, export_factor_timeline, load_config, run_experiment
from llmfactor.skgp import Layer


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--ticker", help="also print this stock's +Factor timeline")
    ap.add_argument("--sample-limit", type=int)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    config = load_config(args.config)
    if args.sample_limit:
        import dataclasses
        config = dataclasses.replace(config, sample_limit=args.sample_limit)
    result = run_experiment(config)
    print(compare_reports(list(result.reports.values())))
    print(f"artifacts in {result.run_dir}")

    if args.ticker:
        layer = next((l for l in result.layers if l.uses_factors), None)
        if layer is None:
            print("no factor layer in this config")
            return
        try:
            tl = export_factor_timeline(result.layers[layer].predictions, args.ticker, layer=layer)
        except EmptyTimeline as e:
            print(e)
            return
        print(tl.to_csv(), end="")


if __name__ == "__main__":
    main()
