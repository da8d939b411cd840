#!/usr/bin/env python3
"""Sweep depth, batch size, and filter count on one synthetic dataset.

The layer sweep trains each point on the full schedule because depth is
where accuracy visibly accumulates; the batch-size and filter sweeps run
a single epoch each, which is enough to rank the settings. Each axis
writes one CSV (`axis,value,train_acc,val_acc,test_acc,runtime_s`) under
--out, plus the dataset it was measured on.
"""

import argparse
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from forgenet import ablation, data, model, trainer

logger = logging.getLogger("run_ablation_study")

SWEEPS = {
    "layers": (1, 2, 3, 4),
    "batch_size": (16, 32, 64, 128),
    "filters": (2, 4, 8),
}


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--size", type=int, default=32)
    parser.add_argument("--train-videos", type=int, default=500)
    parser.add_argument("--train-frames", type=int, default=4)
    parser.add_argument("--eval-videos", type=int, default=50)
    parser.add_argument("--eval-frames", type=int, default=8)
    parser.add_argument("--epochs", type=int, default=8,
                        help="full schedule, used by the layer sweep")
    parser.add_argument("--batch", type=int, default=16)
    parser.add_argument("--lr", type=float, default=0.001)
    parser.add_argument("--seed", type=int, default=5)
    parser.add_argument(
        "--axes", nargs="+", choices=tuple(SWEEPS), default=tuple(SWEEPS),
        help="which sweeps to run",
    )
    return parser.parse_args()


def main() -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    train_manifest = data.generate_synthetic(
        args.train_videos, args.train_frames, args.size, args.seed, out / "data/train"
    )
    val_manifest = data.generate_synthetic(
        args.eval_videos, args.eval_frames, args.size, args.seed + 1,
        out / "data/val", split="val",
    )
    test_manifest = data.generate_synthetic(
        args.eval_videos, args.eval_frames, args.size, args.seed + 2,
        out / "data/test", split="test",
    )

    base_net = model.NetworkConfig(
        conv_layers=4, filters=4, height=args.size, width=args.size, seed=args.seed
    )
    base_train = trainer.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        early_stop_delta=0.0,
        seed=args.seed,
    )

    for axis in args.axes:
        epochs_override = None if axis == "layers" else 1
        spec = ablation.AblationSpec(
            axis=axis,
            values=SWEEPS[axis],
            base_net=base_net,
            base_train=base_train,
            epochs=epochs_override,
        )
        logger.info("sweeping %s over %s", axis, spec.values)
        rows = ablation.run_ablation(spec, train_manifest, val_manifest, test_manifest)
        csv_path = out / f"ablation_{axis}.csv"
        ablation.write_ablation_csv(rows, csv_path)
        print(f"\n{axis} sweep -> {csv_path}")
        for row in rows:
            print(f"  {axis}={row.value}: train={row.train_acc:.4f} "
                  f"val={row.val_acc:.4f} test={row.test_acc:.4f} "
                  f"({row.runtime_s:.1f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
