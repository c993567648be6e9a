"""Zero-shot image classification on a synthetic fixture, several seeds.

    python scripts/run_imgc.py --spec '{"n_classes": 10, "n_unseen": 4}' --gan.iterations=300
"""
import json
import sys
import time

import numpy as np

from _common import base_parser, run_seed, seeds
from ontozero import pipeline
from ontozero.config import load_config


def main() -> int:
    p = base_parser(__doc__.splitlines()[0], "imgc")
    args, extra = p.parse_known_args()
    spec = json.loads(args.spec)
    rows = []
    for seed in seeds(args):
        t0 = time.perf_counter()
        cfg, std = run_seed(args, extra, "imgc", seed, spec)
        gen_cfg = load_config(args.config, [("paths.data", cfg.paths.data), ("paths.out", cfg.paths.out),
                                            ("seed", seed), ("mode", "generalized")])
        gen = pipeline.evaluate(gen_cfg)
        pipeline.write_report(gen_cfg, "eval-generalized", gen)
        m = gen["metrics"]
        rows.append((seed, std["metrics"]["acc"], m["acc_s"], m["acc_u"], m["H"], time.perf_counter() - t0))
        print(f"seed {seed}: acc {rows[-1][1]:.3f}  acc_s {m['acc_s']:.3f}  acc_u {m['acc_u']:.3f}  "
              f"H {m['H']:.3f}  ({rows[-1][5]:.1f}s)")
    arr = np.array([r[1:5] for r in rows])
    print("mean:   acc {:.3f}  acc_s {:.3f}  acc_u {:.3f}  H {:.3f}".format(*arr.mean(axis=0)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
