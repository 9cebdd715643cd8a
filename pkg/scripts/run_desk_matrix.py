#!/usr/bin/env python3
"""Train the desk-scale acceptance matrix: uniform scenario, invariant
variant, groups O2z / O3 / E3, three runs each.

Writes bundles under tests/_artifacts/ where the acceptance suite looks
for them, so a long pytest session can reuse finished runs. Safe to
re-invoke: completed bundles with a matching config are left alone.
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from npsym.cli import BUNDLE_NAME, cmd_train  # noqa: E402
from npsym.config import default_config  # noqa: E402

ARTIFACTS = ROOT / "tests" / "_artifacts"
GROUPS = ("O2z", "O3", "E3")


def desk_cfg(group: str):
    return default_config(
        "desk", scenario="uniform", group=group, variant="invariant",
        output_dir=str(ARTIFACTS / f"desk_{group}"),
        data_dir=str(ARTIFACTS / "datasets"))


def bundle_complete(cfg) -> bool:
    path = Path(cfg.output_dir) / BUNDLE_NAME
    if not path.exists():
        return False
    try:
        bundle = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return False
    return (bundle.get("config") == cfg.to_dict()
            and len(bundle.get("runs", ())) == len(cfg.run_seeds))


def clear_stale_lock(directory: Path):
    # this driver is the sole writer under tests/_artifacts, so any lock
    # left behind belongs to a dead invocation
    lock = directory / ".npsym.lock"
    if lock.exists():
        lock.unlink()


def main() -> int:
    ARTIFACTS.mkdir(parents=True, exist_ok=True)
    clear_stale_lock(ARTIFACTS / "datasets")
    for group in GROUPS:
        cfg = desk_cfg(group)
        if bundle_complete(cfg):
            print(f"{group}: bundle complete, skipping")
            continue
        clear_stale_lock(Path(cfg.output_dir))
        print(f"{group}: training {len(cfg.run_seeds)} runs ...", flush=True)
        cmd_train(cfg, force=True, progress=lambda msg: print(msg, flush=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
