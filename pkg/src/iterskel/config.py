"""Plain-text ``key = value`` configuration files.

One setting per line; ``#`` starts a comment. Recognised keys::

    # generator
    n_trunks = 1,3          w_trunk = 3        W_trunk = 10
    n_branches = 1          N_branches = 3     depth = 3
    # training / distillation
    lr = 0.001              beta1 = 0.9        beta2 = 0.999
    epsilon = 1e-8          epochs = 30        batch_size = 8
    rollout_N = 8           augment = true     k_max = 10
    arch = 16,16,16         # hidden channel counts
    # losses
    focal_gamma = 2         focal_alpha = 0.25
    neighborhood_m = 3      loss_weights = 1,1,1
    # inference
    binarize_granularity = grid
"""

from dataclasses import fields, replace

from iterskel.errors import FormatError, UsageError


def _ints(v):
    return tuple(int(x) for x in v.split(","))


def _floats(v):
    return tuple(float(x) for x in v.split(","))


def _bool(v):
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


# key -> (section, field name, parser)
KEYS = {
    "n_trunks": ("gen", "n_trunks", _ints),
    "w_trunk": ("gen", "w_trunk", int),
    "W_trunk": ("gen", "W_trunk", int),
    "n_branches": ("gen", "n_branches", int),
    "N_branches": ("gen", "N_branches", int),
    "depth": ("gen", "depth", int),
    "lr": ("train", "lr", float),
    "beta1": ("train", "beta1", float),
    "beta2": ("train", "beta2", float),
    "epsilon": ("train", "epsilon", float),
    "epochs": ("train", "epochs", int),
    "batch_size": ("train", "batch_size", int),
    "rollout_N": ("train", "rollout_N", int),
    "augment": ("train", "augment", _bool),
    "k_max": ("train", "k_max", int),
    "arch": ("net", "hidden", _ints),
    "focal_gamma": ("loss", "focal_gamma", float),
    "focal_alpha": ("loss", "focal_alpha", float),
    "neighborhood_m": ("loss", "neighborhood_m", int),
    "loss_weights": ("loss", "weights", _floats),
    "binarize_granularity": ("infer", "granularity", str),
}


def parse(text):
    """Parse config text into ``{section: {field: value}}``."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise UsageError(f"config line {n}: unknown key {key!r}")
        section, name, conv = KEYS[key]
        try:
            out.setdefault(section, {})[name] = conv(value)
        except ValueError as exc:
            raise FormatError(f"config line {n}: bad value for {key}: {exc}") from exc
    return out


def load(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return parse(fh.read())
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc.strerror}") from exc


def apply(obj, values):
    """``dataclasses.replace`` restricted to the fields ``obj`` actually has."""
    names = {f.name for f in fields(obj)}
    values = dict(values)
    if "beta1" in values or "beta2" in values:
        b1, b2 = getattr(obj, "betas", (0.9, 0.999))
        values["betas"] = (values.pop("beta1", b1), values.pop("beta2", b2))
    try:
        return replace(obj, **{k: v for k, v in values.items() if k in names})
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
