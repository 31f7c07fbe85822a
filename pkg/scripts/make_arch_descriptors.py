#!/usr/bin/env python3
"""Regenerate the shape-only architecture descriptors committed in descriptors/.

These two descriptors cover real published architectures (a VGG-11 image
classifier and a 1B-parameter grouped-query-attention language model) by
shape alone, so coverage numbers can be computed without shipping weights.
Run from the repository root; the output is deterministic, so a clean run
leaves the committed files unchanged.
"""

import argparse
import json
from pathlib import Path

from neuperm.descriptor import descriptor_to_dict
from neuperm.engine import count_changed_fraction
from neuperm.fixtures import llama32_1b_descriptor, vgg11_descriptor


def emit(out_dir: Path, name: str, desc) -> None:
    path = out_dir / f"{name}.json"
    path.write_text(json.dumps(descriptor_to_dict(desc), indent=2, sort_keys=True) + "\n")
    report = count_changed_fraction(desc)
    print(
        f"{name}: {desc.total_params} params, {len(desc.sites)} sites, "
        f"coverage {report.percent}%"
    )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir", nargs="?", type=Path,
                    default=Path(__file__).resolve().parent.parent / "descriptors")
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    emit(args.out_dir, "vgg11", vgg11_descriptor())
    emit(args.out_dir, "llama32_1b", llama32_1b_descriptor())


if __name__ == "__main__":
    main()
