"""The same workflow through the command line, into a scratch directory."""

import sys
import tempfile
from pathlib import Path

from iterskel.cli import main

root = Path(tempfile.mkdtemp(prefix="iterskel-"))
print("working in", root)


def step(*args):
    print("\n$ iterskel", " ".join(args))
    rc = main(list(args))
    if rc:
        sys.exit(rc)


step("gen", "--dims", "40,40", "--count", "40", "--seed", "1", "--out", str(root / "train"))
step("gen", "--dims", "40,40", "--count", "8", "--seed", "2", "--out", str(root / "test"))
(root / "small.cfg").write_text("epochs = 3\nbatch_size = 8\n")
step("train", "--data", str(root / "train"), "--config", str(root / "small.cfg"), "--out", str(root / "teacher"))
step("distill", "--teacher", str(root / "teacher" / "weights.skw"), "--data", str(root / "train"),
     "--config", str(root / "small.cfg"), "--out", str(root / "student"))
step("net", "inspect", "--weights", str(root / "student" / "weights.skw"))
step("skel", "--method", "skelite", "--weights", str(root / "student" / "weights.skw"),
     "--input", str(root / "test"), "--trace", str(root / "trace"), "--out", str(root / "pred"))
step("eval", "--pred", str(root / "pred"), "--target", str(root / "test"), "--out", str(root / "report.csv"))
step("bench", "--methods", "boolean,morph,skelite", "--weights", str(root / "student" / "weights.skw"),
     "--data", str(root / "test"), "--out", str(root / "bench"))
print("\ntrace files for sample 0000:", sorted(p.name for p in (root / "trace" / "0000").glob("step??.skt")))
