"""Zero-shot KG completion on a synthetic fixture, several seeds.

    python scripts/run_kgc.py --seeds 0,1,2,3,4 --kge.method=distmult
"""
import json
import sys
import time

from _common import base_parser, run_seed, seeds


def main() -> int:
    p = base_parser(__doc__.splitlines()[0], "kgc")
    args, extra = p.parse_known_args()
    spec = json.loads(args.spec)
    for seed in seeds(args):
        t0 = time.perf_counter()
        _, rep = run_seed(args, extra, "kgc", seed, spec)
        m = rep["metrics"]
        print(f"seed {seed}: MRR {m['MRR']:.3f} (random {rep['baseline']['random_MRR']:.3f})  "
              f"Hit@10 {m['Hit@10']:.3f}  Hit@5 {m['Hit@5']:.3f}  Hit@1 {m['Hit@1']:.3f}  "
              f"({time.perf_counter() - t0:.1f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
