"""Experiment configuration: a flat, typed key=value text format.

Dotted keys group related settings without nesting, which keeps both
diffs and the config hash stable: the hash is over the sorted
canonical key=value lines of the fully resolved configuration, so key
order in the file never matters.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

_SSL_METHODS = ("none", "pi_model", "mean_teacher", "pseudo_label", "vat", "ict")

# key -> (type, default, allowed values or None)
SCHEMA = {
    "task": ("str", "ssl", ("ssl", "uda")),
    "data.kind": ("str", "blobs", ("blobs", "two_moons", "rings", "idx")),
    "data.n": ("int", 600, None),
    "data.test_n": ("int", 1000, None),
    "data.target_n": ("int", 0, None),  # 0: same as data.n (uda)
    "data.k": ("int", 3, None),
    "data.noise_sigma": ("float", 0.25, None),
    "data.separation": ("float", 1.0, None),
    "data.seed": ("int", -1, None),  # -1: derive from the run seed
    "data.labels_per_class": ("int", 3, None),
    "data.val_fraction": ("float", 0.10, None),
    "data.subset_n": ("int", 10000, None),  # idx only; 0: keep everything
    "data.images": ("str", "", None),
    "data.labels": ("str", "", None),
    "data.test_images": ("str", "", None),
    "data.test_labels": ("str", "", None),
    "data.rotation_deg": ("float", 30.0, None),
    "data.translation": ("floats", (1.0, 0.0), None),
    "data.extra_noise": ("float", 0.0, None),
    "data.source_test_fraction": ("float", 0.2, None),
    "model.layers": ("ints", (2, 32, 32, 16), None),
    "model.dropout": ("float", 0.0, None),
    "model.input_noise": ("float", 0.0, None),
    "ssl.method": ("str", "none", _SSL_METHODS),
    "ssl.pl_threshold": ("float", 0.95, None),
    "ssl.ema_decay": ("float", 0.99, None),
    "ssl.vat_eps": ("float", 2.0, None),
    "ssl.vat_xi": ("float", 1e-6, None),
    "ssl.vat_iters": ("int", 1, None),
    "ssl.ict_beta_a": ("float", 0.5, None),
    "centroids.strategy": ("str", "gs", ("gs", "gs_pt", "learned")),
    "centroids.conf_threshold": ("float", 0.9, None),
    "centroids.literal_batch_norm": ("bool", False, None),
    "weights.beta": ("float", 0.18, None),
    "weights.delta": ("float", 0.0, None),
    "weights.alpha": ("float", 1.0, None),
    "uda.gamma_ramp": ("float", 10.0, None),
    "uda.disc_hidden": ("ints", (16,), None),
    "optim.kind": ("str", "adam", ("adam", "sgd_nesterov")),
    "optim.lr": ("float", 3e-3, None),
    "optim.momentum": ("float", 0.9, None),
    "optim.weight_decay": ("float", 1e-4, None),
    "schedule.kind": ("str", "step_decay", ("step_decay", "cosine", "polynomial")),
    "schedule.decay_factor": ("float", 0.1, None),
    "schedule.milestones": ("floats", (0.8,), None),
    "schedule.poly_a": ("float", 10.0, None),
    "schedule.poly_b": ("float", 0.75, None),
    "train.iterations": ("int", 2000, None),
    "train.batch_labeled": ("int", 50, None),
    "train.batch_unlabeled": ("int", 50, None),
    "train.eval_every": ("int", 200, None),
    "train.trace_every": ("int", 1, None),
    "train.swa_start_frac": ("float", 0.75, None),
    "train.swa_every": ("int", 0, None),  # 0: auto, ~10 snapshots
}


def _parse_value(key: str, raw: str):
    kind, _, allowed = SCHEMA[key]
    raw = raw.strip()
    try:
        if kind == "int":
            value = int(raw)
        elif kind == "float":
            value = float(raw)
        elif kind == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes"):
                value = True
            elif low in ("false", "0", "no"):
                value = False
            else:
                raise ValueError(raw)
        elif kind == "ints":
            value = tuple(int(p) for p in raw.split(",") if p.strip()) if raw else ()
        elif kind == "floats":
            value = tuple(float(p) for p in raw.split(",") if p.strip()) if raw else ()
        else:
            value = raw
    except ValueError:
        raise ValueError(f"config key {key}: cannot parse {raw!r} as {kind}")
    if allowed is not None and value not in allowed:
        raise ValueError(f"config key {key}: {value!r} not one of {allowed}")
    return value


def _format_value(key: str, value) -> str:
    kind = SCHEMA[key][0]
    if kind in ("ints", "floats"):
        return ",".join(repr(v) if kind == "floats" else str(v) for v in value)
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return repr(float(value))
    return str(value)


class ExperimentConfig:
    """Resolved settings for one experiment; behaves like a read-mostly
    mapping over the schema keys."""

    def __init__(self, values: dict | None = None):
        self._values = {k: SCHEMA[k][1] for k in SCHEMA}
        if values:
            for k, v in values.items():
                self.set(k, v)

    def __getitem__(self, key: str):
        return self._values[key]

    def set(self, key: str, value) -> None:
        if key not in SCHEMA:
            raise KeyError(f"unknown config key {key!r}")
        # round-trip through the parser so types stay canonical
        self._values[key] = _parse_value(key, value if isinstance(value, str)
                                         else _format_value(key, value))

    def copy(self) -> "ExperimentConfig":
        return ExperimentConfig(dict(self._values))

    def values(self) -> dict:
        return dict(self._values)

    def canonical_lines(self) -> list[str]:
        return [f"{k} = {_format_value(k, self._values[k])}" for k in sorted(self._values)]

    def config_hash(self) -> str:
        text = "\n".join(self.canonical_lines())
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def dump(self, path) -> None:
        Path(path).write_text("\n".join(self.canonical_lines()) + "\n")

    def validate(self) -> None:
        c = self._values
        if c["data.kind"] == "idx":
            for key in ("data.images", "data.labels", "data.test_images", "data.test_labels"):
                if not c[key]:
                    raise ValueError(f"idx data needs {key}")
                if not Path(c[key]).exists():
                    raise ValueError(f"{key}: no such file {c[key]!r}")
        if c["train.iterations"] < 1:
            raise ValueError("train.iterations must be >= 1")
        if c["train.batch_labeled"] < 1:
            raise ValueError("train.batch_labeled must be >= 1")
        if c["weights.alpha"] < 1.0:
            raise ValueError("weights.alpha must be >= 1")
        if c["task"] == "uda" and c["data.kind"] == "idx":
            raise ValueError("uda runs use synthetic source/target pairs")


# published loss-weight pairs per base method: method -> (delta, beta)
REFERENCE_WEIGHTS = {
    "none": (0.00, 0.18),
    "mean_teacher": (0.15, 0.12),
    "vat": (5.62, 0.63),
    "pi_model": (0.19, 0.17),
    "pseudo_label": (0.18, 3.01),
    "ict": (0.16, 2.23),
}
UDA_REFERENCE_BETA = 0.9


def apply_reference_weights(cfg: ExperimentConfig) -> ExperimentConfig:
    """Copy of cfg with beta/delta set to the published defaults for its
    task and base method."""
    out = cfg.copy()
    if cfg["task"] == "uda":
        out.set("weights.beta", UDA_REFERENCE_BETA)
        out.set("weights.delta", 1.0)
    else:
        delta, beta = REFERENCE_WEIGHTS[cfg["ssl.method"]]
        out.set("weights.delta", delta)
        out.set("weights.beta", beta)
    return out


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base.copy() if base else ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        cfg.set(key.strip(), raw.strip())
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text())


def apply_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply repeatable key=value override strings to a copy."""
    out = cfg.copy()
    for item in overrides or ():
        if "=" not in item:
            raise ValueError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        out.set(key.strip(), raw.strip())
    return out
