"""Command line entry point: ``antitree <experiment> --config FILE``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigError
from .harness import EXPERIMENTS, load_config, normalize_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="antitree",
        description="Numerical experiments for Anderson models on antitrees "
                    "with normalized edge weights.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override master seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load_config(args.config)
        config = normalize_config(raw, experiment=args.experiment,
                                  seed=args.seed, out_dir=args.out)
        base_dir = Path(args.config).resolve().parent
        manifest, code = run_experiment(config, threads=max(1, args.threads),
                                        base_dir=base_dir)
    except ConfigError as exc:
        print(f"antitree: config error: {exc}", file=sys.stderr)
        return 1
    ok = sum(1 for c in manifest["cells"] if c["status"] == "ok")
    print(f"antitree {args.experiment}: {ok}/{len(manifest['cells'])} cells ok, "
          f"out={config['output_dir']}, digest={manifest['config_digest'][:12]}")
    for cell in manifest["cells"]:
        if cell["status"] != "ok":
            print(f"  failed {cell['key']}: {cell['error']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
