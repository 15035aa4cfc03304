"""Run configuration: one YAML document with defaults for everything except the data source."""

import copy
from dataclasses import asdict, fields
from pathlib import Path

import yaml

from .data import SyntheticOrdinalSpec, generate_ordinal, load_csv, read_bin_sidecar, shuffle_labels
from .errors import InvalidInputError
from .net import TrainConfig


class ConfigError(InvalidInputError):
    pass


def _synthetic_defaults():
    d = asdict(SyntheticOrdinalSpec())
    d["seed"] = None  # None: use the run seed
    return d


def _train_defaults():
    d = asdict(TrainConfig())
    d.pop("seed")  # the run seed drives shuffling
    d["external_matrix"] = None
    return d


DEFAULTS = {
    "seed": 0,
    "out_dir": "runs/default",
    "data": {
        "source": None,  # required: synthetic | csv
        "synthetic": _synthetic_defaults(),
        "shuffle_train_labels": False,
        "csv": {"train": None, "test": None, "num_classes": None, "header": False, "bins": None},
    },
    "net": {"hidden_sizes": [32], "weight_init_scale": 1.0},
    "train": _train_defaults(),
    "metrics": ["aem", "aeo", "spearman", "sdd"],
}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def template():
    doc = copy.deepcopy(DEFAULTS)
    doc["data"]["source"] = "synthetic"
    return yaml.safe_dump(doc, sort_keys=False)


def load_config(path=None, text=None, seed=None, out_dir=None):
    """Parse, merge with defaults and validate. ``seed``/``out_dir`` override the file."""
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text()
    try:
        raw = yaml.safe_load(text) if text else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    cfg = _merge(DEFAULTS, raw)
    if seed is not None:
        cfg["seed"] = int(seed)
    if out_dir is not None:
        cfg["out_dir"] = str(out_dir)
    validate(cfg, base=path.parent if path is not None else Path("."))
    return cfg


def _resolve(p, base):
    p = Path(p)
    return p if p.is_absolute() else base / p


def validate(cfg, base=Path(".")):
    src = cfg["data"]["source"]
    if src not in ("synthetic", "csv"):
        raise ConfigError("data.source must be 'synthetic' or 'csv'")
    if src == "csv":
        c = cfg["data"]["csv"]
        if not c["train"] or not c["num_classes"]:
            raise ConfigError("csv data needs data.csv.train and data.csv.num_classes")
        for key in ("train", "test", "bins"):
            if c[key]:
                c[key] = str(_resolve(c[key], base))
                if not Path(c[key]).is_file():
                    raise ConfigError(f"data.csv.{key} not found: {c[key]}")
    else:
        syn = {k: v for k, v in cfg["data"]["synthetic"].items()}
        syn["seed"] = cfg["seed"] if syn["seed"] is None else syn["seed"]
        try:
            SyntheticOrdinalSpec(**syn)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
    ext = cfg["train"]["external_matrix"]
    if ext:
        cfg["train"]["external_matrix"] = str(_resolve(ext, base))
        if not Path(cfg["train"]["external_matrix"]).is_file():
            raise ConfigError(f"train.external_matrix not found: {ext}")
    train_config(cfg)
    hs = cfg["net"]["hidden_sizes"]
    if not isinstance(hs, list) or any(int(h) < 1 for h in hs):
        raise ConfigError("net.hidden_sizes must be a list of positive integers")


def train_config(cfg):
    t = {k: v for k, v in cfg["train"].items() if k != "external_matrix"}
    names = {f.name for f in fields(TrainConfig)}
    try:
        return TrainConfig(seed=cfg["seed"], **{k: v for k, v in t.items() if k in names})
    except (TypeError, InvalidInputError) as exc:
        raise ConfigError(f"invalid train section: {exc}") from None


def build_datasets(cfg):
    """Returns ``(train, test_or_None, bin_centers_or_None)``."""
    d = cfg["data"]
    if d["source"] == "synthetic":
        syn = dict(d["synthetic"])
        syn["seed"] = cfg["seed"] if syn["seed"] is None else syn["seed"]
        train, test = generate_ordinal(SyntheticOrdinalSpec(**syn))
        centers = None
    else:
        c = d["csv"]
        train = load_csv(c["train"], int(c["num_classes"]), bool(c["header"]), "train")
        test = load_csv(c["test"], int(c["num_classes"]), bool(c["header"]), "test") if c["test"] else None
        centers = read_bin_sidecar(c["bins"])[1] if c["bins"] else None
    if d["shuffle_train_labels"]:
        train = shuffle_labels(train, cfg["seed"] + 7919)
    return train, test, centers
