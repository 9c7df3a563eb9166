#!/usr/bin/env python3
"""Write a hidden-world (hardware emulator) config file.

The resulting JSON carries a marker so training-side tooling refuses to load
it; only `ballu collect` / `ballu eval` and the experiment pipeline may use it.
"""

import argparse
from dataclasses import replace

from ballu.hiddenworld import HiddenWorldConfig


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="hidden_config.json")
    parser.add_argument("--drag", type=float, default=None,
                        help="Override the quadratic balloon drag coefficient.")
    parser.add_argument("--wind", type=float, default=None,
                        help="Override the per-episode lateral wind bias range [N].")
    parser.add_argument("--noise", type=float, default=None,
                        help="Override the per-step force noise std [N].")
    parser.add_argument("--quiet", action="store_true",
                        help="Zero all disturbances (measurement mode).")
    args = parser.parse_args()

    config = HiddenWorldConfig.default()
    if args.quiet:
        config = config.quiet()
    overrides = {}
    if args.drag is not None:
        overrides["drag_coefficient"] = args.drag
    if args.wind is not None:
        overrides["wind_bias_range"] = args.wind
    if args.noise is not None:
        overrides["process_noise_std"] = args.noise
    if overrides:
        config = replace(config, **overrides)
    config.save(args.out)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
