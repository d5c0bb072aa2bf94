"""Layered run configuration: built-in defaults < profile < file < overrides.

The resolved config is a plain nested dict; unknown keys are rejected at
merge time and the fully resolved document is echoed into every output
directory for bit-exact reruns.
"""

from __future__ import annotations

import copy
import os

import yaml

DEFAULTS = {
    "profile": "desk",
    "dataset": {
        "resolution": [64, 64],
        "clip_length": 25,
        "corpus_size": 21,
        "seed": 0,
        "test_fraction": 0.2,
        "motion": {
            "n_keyposes": 3,
            "easing": "linear",
            "amplitude": {"arm": 1.0, "leg": 0.7, "spine": 0.3, "root": 0.3},
            "camera_drift": False,
        },
        "filter": {"brightness_percentile": 5.0},
    },
    "model": {
        "codec_patch": 4,
        "denoiser": {"depth": 4, "width": 64, "heads": 4, "patch_size": 1},
        # rank/alpha 32 follow the published recipe; the desk profile
        # overrides with rank 4 for fast CPU runs.
        "lora": {"rank": 32, "alpha": 32.0,
                 "targets": ["patch_embed", "attn_v", "attn_out"]},
        "control": {"strategy": "ve_se", "d": 64, "window": 4, "heads": 1,
                    "time_posenc": True},
    },
    "train": {
        "mode": "full",            # "full" | "finetune"
        "lr": 8.0e-5,
        "lr_schedule": "constant",  # "constant" | "cosine"
        "warmup_steps": 0,
        "weight_decay": 0.0,
        "steps": 2000,
        "batch": 1,
        "ckpt_every": 500,
        "log_every": 25,
        "gaps": [24],
        "loss_on_conditioned": True,
        "seed": 0,
        "init_checkpoint": None,
    },
    "eval": {
        "gaps": [8, 16, 24],
        "dilation_radius": None,   # null -> auto (5 px at 512x320, scaled)
        "steps": 16,
        "seed": 0,
        "control_source": "gt",    # "gt" | "itw"
    },
}

# Profile bundles; "desk" is the fast-CPU default, "paper" mirrors the
# published resolution / LoRA sizes. Never silently mixed.
PROFILES = {
    "desk": {
        "model": {"lora": {"rank": 4, "alpha": 4.0}},
        # Desk overrides, clearly labeled: the published 8e-5 rate is tuned
        # for a 14B backbone; the ~1M-parameter desk model needs a larger,
        # decayed step to converge within the desk step budgets.
        "train": {"lr": 2.0e-3, "lr_schedule": "cosine", "warmup_steps": 50},
    },
    "paper": {
        "dataset": {"resolution": [512, 320]},
        "model": {"lora": {"rank": 32, "alpha": 32.0}},
        "train": {"lr": 8.0e-5},
    },
}


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def merge_config(base: dict, override: dict, path: str = "") -> dict:
    """Recursive merge; keys absent from base are rejected."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = merge_config(base[key], value, here)
        else:
            out[key] = copy.deepcopy(value)
    return out


def apply_profile(cfg: dict, profile: str) -> dict:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r} "
                          f"(choose from {sorted(PROFILES)})")
    out = merge_config(cfg, PROFILES[profile])
    out["profile"] = profile
    return out


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply 'a.b.c=value' strings; values parse as YAML scalars."""
    out = cfg
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key.path=value: {item!r}")
        key_path, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        node: dict = {}
        leaf = node
        parts = key_path.split(".")
        for part in parts[:-1]:
            leaf[part] = {}
            leaf = leaf[part]
        leaf[parts[-1]] = value
        out = merge_config(out, node)
    return out


def resolve_config(config_file=None, profile=None, overrides=()) -> dict:
    """Defaults -> profile -> file -> command-line overrides.

    When no profile is given explicitly or by the file, the POSEFUSE_PROFILE
    environment variable (default "desk") selects one.
    """
    file_cfg = {}
    if config_file:
        with open(config_file) as fh:
            file_cfg = yaml.safe_load(fh) or {}
    chosen = profile or file_cfg.get("profile") \
        or os.environ.get("POSEFUSE_PROFILE") or "desk"
    cfg = apply_profile(default_config(), chosen)
    cfg = merge_config(cfg, file_cfg)
    cfg["profile"] = chosen
    cfg = apply_overrides(cfg, overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    strategy = cfg["model"]["control"]["strategy"]
    if strategy not in ("ve", "ve_dn", "ve_se", "none"):
        raise ConfigError(f"unknown control strategy {strategy!r}")
    if strategy != "none" \
            and cfg["model"]["control"]["d"] != cfg["model"]["denoiser"]["width"]:
        raise ConfigError("control.d must equal denoiser.width for injection")
    if cfg["train"]["mode"] not in ("full", "finetune"):
        raise ConfigError(f"unknown train mode {cfg['train']['mode']!r}")
    if cfg["train"]["mode"] == "finetune" \
            and not cfg["train"]["init_checkpoint"]:
        raise ConfigError("finetune mode requires train.init_checkpoint")
    W, H = cfg["dataset"]["resolution"]
    stride = cfg["model"]["codec_patch"] * cfg["model"]["denoiser"]["patch_size"]
    if W % stride or H % stride:
        raise ConfigError(
            f"resolution {W}x{H} not divisible by latent stride {stride}")
    if cfg["eval"]["control_source"] not in ("gt", "itw"):
        raise ConfigError("eval.control_source must be 'gt' or 'itw'")


def control_stride(cfg: dict) -> int:
    return cfg["model"]["codec_patch"] * cfg["model"]["denoiser"]["patch_size"]


def save_config(cfg: dict, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)


def dilation_radius_for(cfg: dict, resolution) -> int:
    """Resolve eval.dilation_radius; auto = 5 px at min-dim 320, scaled."""
    r = cfg["eval"]["dilation_radius"]
    if r is not None:
        return int(r)
    return max(1, int(round(5.0 * min(resolution) / 320.0)))
