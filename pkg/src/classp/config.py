"""TOML experiment configs with flat dotted keys.

A config is flattened to ``{"optimizer.alpha": 0.2, "phase.1.epochs": 4, ...}``
so that command-line ``--set key=value`` overrides address exactly the same
keys as the file.  Every key is validated before any data is loaded.

Example::

    name = "classp"
    seed = 0
    repeats = 10
    model.layers = [784, 128, 10]
    optimizer.kind = "classp"
    optimizer.alpha = 0.2
    optimizer.p = 1
    dataset.mnist.images = "mnist-subset10k/train-images-idx3-ubyte.gz"
    dataset.mnist.labels = "mnist-subset10k/train-labels-idx1-ubyte.gz"
    phase.1.dataset = "mnist"
    phase.1.classes = [0, 1, 2, 3, 4]
    phase.1.epochs = 4
    phase.1.threshold = 0.5
    phase.1.apply_decay = false
    phase.2.dataset = "mnist"
    phase.2.classes = [5, 6, 7, 8, 9]
    phase.2.epochs = 1
    phase.2.threshold = 0.0
    phase.2.apply_decay = true
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import sys
from pathlib import Path

from .data import Dataset, Phase, TaskSequence, load_idx, make_blobs, permute_features, split_classes
from .errors import ConfigError
from .harness import RunConfig
from .numeric import Pcg32

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DATA_DIR_ENV = "CLASSP_DATA_DIR"

_OPTIMIZER_KEYS = {
    "classp": {"alpha", "threshold", "p", "apply_decay", "epsilon", "exclusive_sum"},
    "sgd": {"alpha"},
    "adagrad": {"alpha", "epsilon"},
    "adam": {"alpha", "beta1", "beta2", "epsilon"},
    "ewc": {"alpha", "lambda", "fisher_samples"},
}

_NUM = (int, float)
_SCHEMA = [
    (r"name", str),
    (r"seed", int),
    (r"repeats", int),
    (r"output", str),
    (r"heldout_eval", bool),
    (r"model\.layers", list),
    (r"optimizer\.kind", str),
    (r"optimizer\.(alpha|threshold|p|epsilon|beta1|beta2|lambda)", _NUM),
    (r"optimizer\.(apply_decay|exclusive_sum)", bool),
    (r"optimizer\.fisher_samples", int),
    (r"dataset\.\w+\.kind", str),
    (r"dataset\.\w+\.(images|labels|test_images|test_labels)", str),
    (r"dataset\.\w+\.(num_classes|per_class|seed)", int),
    (r"dataset\.\w+\.std", _NUM),
    (r"dataset\.\w+\.centers", list),
    (r"phase\.\d+\.dataset", str),
    (r"phase\.\d+\.classes", list),
    (r"phase\.\d+\.(permute_seed|epochs|batch_size)", int),
    (r"phase\.\d+\.(threshold|loss_stop)", _NUM),
    (r"phase\.\d+\.apply_decay", bool),
    (r"eval\.\w+\.dataset", str),
    (r"eval\.\w+\.classes", list),
    (r"eval\.\w+\.permute_seed", int),
]

DEFAULTS = {"seed": 0, "repeats": 1, "heldout_eval": False}
TASK_KEY = re.compile(r"(dataset\.|eval\.|heldout_eval$|model\.|phase\.\d+\.(dataset|classes|permute_seed|epochs|batch_size)$)")


def flatten(tree: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def parse_value(text: str):
    """Parse an override value as TOML, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_override(item: str):
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, _, value = item.partition("=")
    return key.strip(), parse_value(value.strip())


def load_config(path, overrides=()) -> dict:
    try:
        with open(path, "rb") as f:
            tree = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    flat = dict(DEFAULTS)
    flat["name"] = Path(path).stem
    flat.update(flatten(tree))
    for item in overrides:
        k, v = item if isinstance(item, tuple) else parse_override(item)
        flat[k] = v
    validate(flat)
    return flat


def _type_ok(value, typ) -> bool:
    if typ is bool:
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    return isinstance(value, typ)


def validate(flat: dict) -> None:
    for key, value in flat.items():
        for pattern, typ in _SCHEMA:
            if re.fullmatch(pattern, key):
                if not _type_ok(value, typ):
                    raise ConfigError(f"{key}: unexpected value {value!r}")
                break
        else:
            raise ConfigError(f"{key}: unknown key")

    for key in ("model.layers", "optimizer.kind"):
        if key not in flat:
            raise ConfigError(f"{key}: required key missing")
    layers = flat["model.layers"]
    if len(layers) < 2 or not all(isinstance(s, int) and not isinstance(s, bool) and s > 0 for s in layers):
        raise ConfigError(f"model.layers: need >= 2 positive integers, got {layers!r}")
    if flat["repeats"] < 1:
        raise ConfigError("repeats: must be >= 1")
    if flat["seed"] < 0:
        raise ConfigError("seed: must be >= 0")

    kind = flat["optimizer.kind"]
    if kind not in _OPTIMIZER_KEYS:
        raise ConfigError(f"optimizer.kind: unknown optimizer {kind!r}")
    for key in flat:
        if key.startswith("optimizer.") and key != "optimizer.kind":
            if key.split(".", 1)[1] not in _OPTIMIZER_KEYS[kind]:
                raise ConfigError(f"{key}: not a parameter of optimizer {kind!r}")
    for key in ("alpha", "epsilon"):
        v = flat.get(f"optimizer.{key}")
        if v is not None and not v > 0:
            raise ConfigError(f"optimizer.{key}: must be > 0, got {v}")
    for key in ("threshold", "lambda"):
        v = flat.get(f"optimizer.{key}")
        if v is not None and not v >= 0:
            raise ConfigError(f"optimizer.{key}: must be >= 0, got {v}")
    if flat.get("optimizer.p", 1) < 1:
        raise ConfigError(f"optimizer.p: must be >= 1, got {flat['optimizer.p']}")
    for key in ("beta1", "beta2"):
        v = flat.get(f"optimizer.{key}")
        if v is not None and not 0 <= v < 1:
            raise ConfigError(f"optimizer.{key}: must lie in [0, 1), got {v}")
    if flat.get("optimizer.fisher_samples", 1) < 1:
        raise ConfigError("optimizer.fisher_samples: must be >= 1")

    phases = phase_ids(flat)
    if not phases:
        raise ConfigError("phase.1.dataset: at least one phase is required")
    datasets = {k.split(".")[1] for k in flat if k.startswith("dataset.")}
    for i in phases:
        for field in ("epochs", "batch_size"):
            v = flat.get(f"phase.{i}.{field}", 1)
            if v < 1:
                raise ConfigError(f"phase.{i}.{field}: must be >= 1, got {v}")
        v = flat.get(f"phase.{i}.threshold")
        if v is not None and v < 0:
            raise ConfigError(f"phase.{i}.threshold: must be >= 0, got {v}")
    for key, value in flat.items():
        if re.fullmatch(r"(phase\.\d+|eval\.\w+)\.dataset", key) and value not in datasets:
            raise ConfigError(f"{key}: unknown dataset {value!r}")
        if key.endswith(".classes") and not all(isinstance(c, int) and not isinstance(c, bool) for c in value):
            raise ConfigError(f"{key}: classes must be integers")
    for name in datasets:
        kind_ = flat.get(f"dataset.{name}.kind", "idx")
        if kind_ == "idx":
            for part in ("images", "labels"):
                if f"dataset.{name}.{part}" not in flat:
                    raise ConfigError(f"dataset.{name}.{part}: required for IDX datasets")
        elif kind_ == "blobs":
            for part in ("centers", "per_class", "std"):
                if f"dataset.{name}.{part}" not in flat:
                    raise ConfigError(f"dataset.{name}.{part}: required for blob datasets")
            if flat[f"dataset.{name}.std"] < 0:
                raise ConfigError(f"dataset.{name}.std: must be >= 0")
            if flat[f"dataset.{name}.per_class"] < 1:
                raise ConfigError(f"dataset.{name}.per_class: must be >= 1")
        else:
            raise ConfigError(f"dataset.{name}.kind: expected 'idx' or 'blobs', got {kind_!r}")


def phase_ids(flat: dict) -> list:
    ids = {int(m.group(1)) for k in flat if (m := re.match(r"phase\.(\d+)\.", k))}
    out = sorted(ids)
    for i in out:
        if f"phase.{i}.dataset" not in flat:
            raise ConfigError(f"phase.{i}.dataset: required key missing")
    return out


def eval_labels(flat: dict) -> list:
    seen = []
    for k in flat:
        m = re.match(r"eval\.(\w+)\.", k)
        if m and m.group(1) not in seen:
            seen.append(m.group(1))
    for label in seen:
        if f"eval.{label}.dataset" not in flat:
            raise ConfigError(f"eval.{label}.dataset: required key missing")
    return seen


def config_hash(flat: dict) -> str:
    blob = json.dumps(flat, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def task_signature(flat: dict) -> dict:
    """The keys that define the task sequence (shared by compared arms)."""
    return {k: v for k, v in flat.items() if TASK_KEY.match(k)}


def data_root(config_path) -> Path:
    env = os.environ.get(DATA_DIR_ENV)
    return Path(env) if env else Path(config_path).resolve().parent


class _Loader:
    def __init__(self, flat, root: Path):
        self.flat = flat
        self.root = root
        self.cache = {}

    def _path(self, rel) -> Path:
        p = Path(rel)
        p = p if p.is_absolute() else self.root / p
        if not p.is_file():
            raise FileNotFoundError(f"dataset file not found: {p} (set {DATA_DIR_ENV} or fix the path)")
        return p

    def base(self, name: str, split: str = "train") -> Dataset:
        if (name, split) in self.cache:
            return self.cache[name, split]
        f = self.flat
        kind = f.get(f"dataset.{name}.kind", "idx")
        if kind == "idx":
            prefix = "" if split == "train" else "test_"
            img_key, lbl_key = f"dataset.{name}.{prefix}images", f"dataset.{name}.{prefix}labels"
            if img_key not in f or lbl_key not in f:
                raise ConfigError(f"{img_key}: needed for held-out evaluation")
            d = load_idx(self._path(f[img_key]), self._path(f[lbl_key]), name,
                         f.get(f"dataset.{name}.num_classes", 10))
        else:
            # held-out blobs come from a neighbouring generator stream
            rng = Pcg32(f.get(f"dataset.{name}.seed", 0), 1 if split == "train" else 2)
            try:
                d = make_blobs(rng, f[f"dataset.{name}.per_class"], f[f"dataset.{name}.centers"],
                               float(f[f"dataset.{name}.std"]), name)
            except ValueError as e:
                raise ConfigError(f"dataset.{name}: {e}") from None
        self.cache[name, split] = d
        return d

    def view(self, prefix: str, label: str, split: str = "train") -> Dataset:
        f = self.flat
        d = self.base(f[f"{prefix}.dataset"], split)
        try:
            if f"{prefix}.classes" in f:
                d = split_classes(d, f[f"{prefix}.classes"])
            if f"{prefix}.permute_seed" in f:
                d = permute_features(d, rng=Pcg32(f[f"{prefix}.permute_seed"], 7))
        except ValueError as e:
            raise ConfigError(f"{prefix}: {e}") from None
        return d.renamed(label)


def build_run_config(flat: dict, config_path) -> RunConfig:
    """Resolve datasets and build the harness config (may raise FileNotFoundError)."""
    loader = _Loader(flat, data_root(config_path))
    phases = []
    for i in phase_ids(flat):
        pre = f"phase.{i}"
        phases.append(Phase(
            loader.view(pre, f"task{i}"),
            epochs=flat.get(f"{pre}.epochs", 1),
            batch_size=flat.get(f"{pre}.batch_size", 64),
            threshold=flat.get(f"{pre}.threshold"),
            apply_decay=flat.get(f"{pre}.apply_decay"),
            loss_stop=flat.get(f"{pre}.loss_stop"),
        ))
    split = "test" if flat.get("heldout_eval") else "train"
    labels = eval_labels(flat)
    if labels:
        evals = [loader.view(f"eval.{lb}", lb, split) for lb in labels]
    else:
        evals = [loader.view(f"phase.{i}", f"task{i}", split) for i in phase_ids(flat)]
    try:
        tasks = TaskSequence(phases, evals)
    except ValueError as e:
        raise ConfigError(str(e)) from None

    kind = flat["optimizer.kind"]
    args = {}
    for k, v in flat.items():
        if k.startswith("optimizer.") and k != "optimizer.kind":
            name = k.split(".", 1)[1]
            args["lam" if name == "lambda" else name] = v
    if kind == "classp" and "p" in args:
        args["p"] = float(args["p"])
    try:
        return RunConfig(flat["model.layers"], tasks, kind, args, flat["seed"], flat["repeats"])
    except ValueError as e:
        raise ConfigError(str(e)) from None
