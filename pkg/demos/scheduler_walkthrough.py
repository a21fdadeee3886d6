"""Watch most-recent-first polling absorb a slow classifier.

A 30 fps source feeds a cheap overlay stage and an 80 ms classifier. Under the
simulated clock the overlay keeps pace with the camera while the classifier
skips frames and works on the newest one each time it frees up. The overlay
reuses the latest classifier result, so the display never waits for it.

    python demos/scheduler_walkthrough.py --seconds 2
"""

import argparse
from collections import Counter

from framegrind.cli import shipped_config
from framegrind.pipeline import Pipeline, PipelineConfig, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seconds", type=float, default=2.0, help="simulated run length")
    ap.add_argument("--classify-ms", type=float, default=80.0)
    args = ap.parse_args()

    raw = load_config(shipped_config("scheduler")).to_dict()
    raw["clock"]["duration_s"] = args.seconds
    raw["clock"]["service_times"]["classify"] = args.classify_ms
    cfg = PipelineConfig.from_dict(raw)

    # which classifier result was on the board when each frame was displayed
    shown = []

    def on_result(stage, frame, payload):
        if stage == "overlay":
            latest = pipe.board.latest("classify")
            shown.append((frame.id, latest[0] if latest else None))

    pipe = Pipeline(cfg, on_result=on_result)
    report = pipe.run()

    print("frame  classifier result shown")
    for fid, cid in shown[:15]:
        print(f"{fid:5d}  {'-' if cid is None else cid}")
    print("...")
    for row in report.summary().values():
        print(f"{row['stage']:>9}: {row['fps']:6.2f} fps  done {row['done']:4d}  "
              f"skipped {row['skipped']:4d}")
    ages = Counter(fid - cid for fid, cid in shown if cid is not None)
    print("staleness of the shown result (frames):", dict(sorted(ages.items())))


if __name__ == "__main__":
    main()
