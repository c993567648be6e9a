"""Drop-one schema ablation: the full schema against each removed component.

    python scripts/ablation.py --spec '{"n_classes": 10, "n_unseen": 4, "attribute_only": true}'
    python scripts/ablation.py --task kgc
"""
import json
import sys
from pathlib import Path

from _common import base_parser, fixture, seeds
from ontozero import pipeline
from ontozero.config import load_config, parse_overrides


def main() -> int:
    p = base_parser(__doc__.splitlines()[0], "ablation")
    p.add_argument("--task", default="imgc", choices=["imgc", "kgc"])
    args, extra = p.parse_known_args()
    spec = {"task": args.task, **json.loads(args.spec)}
    root = Path(args.out)
    data = fixture(root, spec, spec.get("seed", 0))
    cfg = load_config(args.config, [("task", args.task), ("paths.data", str(data)), ("paths.out", str(root)),
                                    ("seeds", seeds(args)), *parse_overrides(extra)])
    summary = pipeline.ablate_suite(cfg)
    path = pipeline.write_report(cfg, "ablate-suite", summary)
    key = summary["metric"]
    print(f"{'variant':<16}{key:>8}   per seed")
    for label, row in summary["results"].items():
        per = "  ".join(f"{v[key]:.3f}" for v in row["per_seed"].values())
        print(f"{label:<16}{row['mean'][key]:>8.3f}   {per}")
    print(f"report: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
