"""Convert the public MHealth logs into trial CSVs plus a harbench manifest.

Each ``mHealth_subjectN.log`` holds 23 whitespace-separated signal columns
followed by an activity label (0 = unlabelled).  Every maximal run of one
nonzero label becomes a trial.

    python3 scripts/mhealth_to_manifest.py RAW_DIR OUT_DIR

writes ``OUT_DIR/trials/*.csv`` and ``OUT_DIR/manifest.json``; point
``HARBENCH_DATA_DIR`` at the parent of ``OUT_DIR`` (named ``mhealth``) to
enable the MHealth acceptance criteria.
"""

from __future__ import annotations

import argparse
import json
import re
from pathlib import Path

import numpy as np

TEMPLATE = Path(__file__).resolve().parent.parent / "manifests" / "mhealth.json"


def label_runs(labels: np.ndarray) -> list[tuple[int, int, int]]:
    """(label, start, stop) for every maximal run of a nonzero label."""
    edges = np.flatnonzero(np.diff(labels)) + 1
    starts = np.r_[0, edges]
    stops = np.r_[edges, labels.size]
    return [(int(labels[a]), int(a), int(b)) for a, b in zip(starts, stops) if labels[a] != 0]


def convert(raw_dir: Path, out_dir: Path) -> Path:
    manifest = json.loads(TEMPLATE.read_text())
    n_channels = len(manifest["channel_names"])
    (out_dir / "trials").mkdir(parents=True, exist_ok=True)
    logs = sorted(raw_dir.glob("mHealth_subject*.log"), key=lambda p: int(re.findall(r"\d+", p.stem)[-1]))
    if not logs:
        raise SystemExit(f"no mHealth_subject*.log files in {raw_dir}")
    sources = []
    for log in logs:
        subject = re.findall(r"\d+", log.stem)[-1]
        data = np.loadtxt(log)
        if data.shape[1] != n_channels + 1:
            raise SystemExit(f"{log}: expected {n_channels + 1} columns, got {data.shape[1]}")
        repeat: dict[int, int] = {}
        for label, start, stop in label_runs(data[:, -1].astype(int)):
            repeat[label] = repeat.get(label, 0) + 1
            trial_id = f"subj{subject}_act{label}_run{repeat[label]}"
            rel = f"trials/{trial_id}.csv"
            np.savetxt(out_dir / rel, data[start:stop, :n_channels], delimiter=",", fmt="%.17g")
            sources.append({"subject_id": subject, "activity_id": label, "trial_id": trial_id, "path": rel})
    manifest["trial_sources"] = sources
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("raw_dir", type=Path)
    parser.add_argument("out_dir", type=Path)
    args = parser.parse_args()
    print(convert(args.raw_dir, args.out_dir))


if __name__ == "__main__":
    main()
