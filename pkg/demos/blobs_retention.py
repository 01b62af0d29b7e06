"""
Gated learning on a toy problem
===============================

Four Gaussian clusters in the plane; the first task separates clusters 0
and 1, the second clusters 2 and 3.  The gate threshold (0.01) is chosen to
match the gradient scale of this problem.  Plain SGD with the same step is
the reference.

No data files are needed.
"""
import json
import tempfile
from pathlib import Path

from classp.cli import main

ROOT = Path(__file__).resolve().parents[1]
cfg = ROOT / "configs" / "blobs.toml"
out = Path(tempfile.mkdtemp(prefix="blobs-"))

# same task, two optimizers; --set applies to both, so build the SGD arm as a copy
sgd_cfg = out / "blobs-sgd.toml"
sgd_cfg.write_text(cfg.read_text().replace('"blobs-classp"', '"blobs-sgd"').replace('kind = "classp"', 'kind = "sgd"')
                   .replace("optimizer.p = 1\n", ""))
main(["compare", str(cfg), str(sgd_cfg), "--repeats", "5", "--out", str(out)])

###############################################################################
# Per-phase detail for the first seed

doc = json.loads((out / "results.json").read_text())
for arm in doc["arms"]:
    rec = arm["records"][0]
    for p in rec["phases"]:
        accs = ", ".join(f"{k} {v:.1f}%" for k, v in p["accuracy"].items())
        print(f"{arm['arm']:13s} after phase {p['phase']}: {accs}; touched {p['updated_fraction']:.0%} of weights")
