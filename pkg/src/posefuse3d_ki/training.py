"""Training loop: AdamW on the flow-matching loss with keyframe conditioning.

Two modes:
  * "full": denoiser and control model train jointly from scratch (the desk
    world has no pretrained backbone to adapt);
  * "finetune": base denoiser weights load from a checkpoint and freeze;
    only LoRA adapters, the control model and the injection gate train.

All randomness (t, noise, clip/gap/window choice) flows through one torch
Generator whose state is checkpointed, so an interrupted run resumed from a
checkpoint reproduces the uninterrupted loss trajectory.
"""

from __future__ import annotations

import os

import numpy as np
import torch

from . import checkpoint as ckpt_io
from .config import control_stride, save_config
from .control import PoseFuse3D, build_control_bundle
from .dataset import load_corpus
from .diffusion import (DenoiserConfig, KeyframeDenoiser, LoraConfig,
                        apply_lora, encode_latent, make_conditioning,
                        to_model_space, training_loss)


class TrainingDiverged(RuntimeError):
    pass


def build_models(cfg: dict, frame_size):
    """(denoiser, control model or None) from a resolved config."""
    m = cfg["model"]
    dcfg = DenoiserConfig(
        depth=m["denoiser"]["depth"], width=m["denoiser"]["width"],
        heads=m["denoiser"]["heads"], patch_size=m["denoiser"]["patch_size"],
        channels=3 * m["codec_patch"] ** 2,
        lora=LoraConfig(rank=m["lora"]["rank"], alpha=m["lora"]["alpha"],
                        targets=tuple(m["lora"]["targets"])),
    )
    denoiser = KeyframeDenoiser(dcfg)
    ctrl = None
    if m["control"]["strategy"] != "none":
        ctrl = PoseFuse3D(
            strategy=m["control"]["strategy"], d=m["control"]["d"],
            stride=control_stride(cfg), window=m["control"]["window"],
            heads=m["control"]["heads"], frame_size=frame_size,
            time_posenc=m["control"]["time_posenc"])
    return denoiser, ctrl


def load_models(path, frame_size=None):
    """Rebuild (denoiser, ctrl, cfg) from a checkpoint archive."""
    blob = ckpt_io.load_checkpoint(path)
    cfg = blob["config"]
    W, H = cfg["dataset"]["resolution"]
    denoiser, ctrl = build_models(cfg, frame_size or (H, W))
    if cfg["train"]["mode"] == "finetune":
        apply_lora(denoiser, rank=cfg["model"]["lora"]["rank"],
                   alpha=cfg["model"]["lora"]["alpha"],
                   targets=tuple(cfg["model"]["lora"]["targets"]))
    ckpt_io.load_module_tensors(denoiser, blob["tensors"], "denoiser")
    if ctrl is not None:
        ckpt_io.load_module_tensors(ctrl, blob["tensors"], "posefuse3d")
    denoiser.eval()
    if ctrl is not None:
        ctrl.eval()
    return denoiser, ctrl, cfg


class _ClipCache:
    """Per-clip latents and prepared control inputs, computed once."""

    def __init__(self, records, template, ctrl, codec_patch):
        self.z = []
        self.inputs = []
        for rec in records:
            self.z.append(to_model_space(encode_latent(rec.frames, codec_patch).float()))
            if ctrl is None:
                self.inputs.append(None)
            else:
                bundle = build_control_bundle(rec, template, ctrl.strategy)
                self.inputs.append(ctrl.prepare(bundle, params=rec.params,
                                                dtype=torch.float32))

    def __len__(self):
        return len(self.z)

    def window(self, i, start, length):
        z = self.z[i][start:start + length]
        inputs = None
        if self.inputs[i] is not None:
            inputs = {k: v[start:start + length]
                      for k, v in self.inputs[i].items()}
        return z, inputs


def _trainable(denoiser, ctrl, mode):
    """Ordered (name, param) pairs that receive gradients."""
    named = []
    if mode == "full":
        named += [(f"denoiser/{n}", p) for n, p in denoiser.named_parameters()]
    else:
        for n, p in denoiser.named_parameters():
            trainable = "lora_a" in n or "lora_b" in n or n == "inject.gamma"
            p.requires_grad_(trainable)
            if trainable:
                named.append((f"denoiser/{n}", p))
    if ctrl is not None:
        named += [(f"posefuse3d/{n}", p) for n, p in ctrl.named_parameters()]
    return named


def _save(path, cfg, step, denoiser, ctrl, optimizer, named, generator,
          metrics):
    tensors = ckpt_io.state_dict_to_tensors(denoiser, "denoiser")
    if ctrl is not None:
        tensors.update(ckpt_io.state_dict_to_tensors(ctrl, "posefuse3d"))
    for name, p in named:
        state = optimizer.state.get(p)
        if not state:
            continue
        tensors[f"optim/{name}/step"] = state["step"].float()
        tensors[f"optim/{name}/exp_avg"] = state["exp_avg"]
        tensors[f"optim/{name}/exp_avg_sq"] = state["exp_avg_sq"]
    tensors["rng/torch"] = generator.get_state().numpy().astype(np.uint8)
    ckpt_io.save_checkpoint(path, config=cfg, step=step, tensors=tensors,
                            metrics=metrics)


def _restore_optimizer(optimizer, named, tensors):
    for name, p in named:
        key = f"optim/{name}/exp_avg"
        if key not in tensors:
            continue
        optimizer.state[p] = {
            "step": torch.as_tensor(
                float(tensors[f"optim/{name}/step"].reshape(()))),
            "exp_avg": torch.as_tensor(tensors[key]).to(p.dtype),
            "exp_avg_sq": torch.as_tensor(
                tensors[f"optim/{name}/exp_avg_sq"]).to(p.dtype),
        }


def train(cfg: dict, data_dir, out_dir, *, resume=None, quiet=True) -> dict:
    """Run training per config; writes loss log + checkpoints into out_dir.

    Returns a summary dict with the final checkpoint path and loss values.
    Raises TrainingDiverged on NaN loss (last good checkpoint retained).
    """
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, "config.yaml"))
    records, template = load_corpus(data_dir)
    if not records:
        raise ValueError("no clips in data_dir")
    W, H = records[0].camera.resolution
    tcfg = cfg["train"]

    torch.manual_seed(tcfg["seed"])
    denoiser, ctrl = build_models(cfg, (H, W))
    if tcfg["mode"] == "finetune":
        base = ckpt_io.load_checkpoint(tcfg["init_checkpoint"])
        ckpt_io.load_module_tensors(denoiser, base["tensors"], "denoiser")
        apply_lora(denoiser, rank=cfg["model"]["lora"]["rank"],
                   alpha=cfg["model"]["lora"]["alpha"],
                   targets=tuple(cfg["model"]["lora"]["targets"]))
    named = _trainable(denoiser, ctrl, tcfg["mode"])
    optimizer = torch.optim.AdamW([p for _, p in named], lr=tcfg["lr"],
                                  weight_decay=tcfg["weight_decay"])
    generator = torch.Generator().manual_seed(tcfg["seed"] + 1)

    cache = _ClipCache(records, template, ctrl, cfg["model"]["codec_patch"])
    gaps = [g for g in tcfg["gaps"] if g + 1 <= records[0].n_frames]
    if not gaps:
        raise ValueError("no training gap fits the clip length")

    step0 = 0
    log_path = os.path.join(out_dir, "loss.csv")
    if resume:
        blob = ckpt_io.load_checkpoint(resume)
        ckpt_io.load_module_tensors(denoiser, blob["tensors"], "denoiser")
        if ctrl is not None:
            ckpt_io.load_module_tensors(ctrl, blob["tensors"], "posefuse3d")
        _restore_optimizer(optimizer, named, blob["tensors"])
        generator.set_state(torch.as_tensor(
            blob["tensors"]["rng/torch"]).to(torch.uint8))
        step0 = blob["step"]
    elif os.path.exists(log_path):
        os.remove(log_path)

    def rint(high):
        return int(torch.randint(high, (1,), generator=generator))

    def lr_at(step):
        lr = tcfg["lr"]
        warm = tcfg["warmup_steps"]
        if warm and step < warm:
            return lr * (step + 1) / warm
        if tcfg["lr_schedule"] == "cosine":
            u = (step - warm) / max(tcfg["steps"] - warm, 1)
            return lr * 0.5 * (1.0 + np.cos(np.pi * min(u, 1.0)))
        return lr

    last_ckpt = None
    losses = []
    log_lines = ["step,loss\n"] if step0 == 0 else []
    mode = "a" if step0 else "w"
    with open(log_path, mode) as log_fh:
        if step0 == 0:
            log_fh.write(log_lines.pop())
        for step in range(step0, tcfg["steps"]):
            gap = gaps[rint(len(gaps))]
            length = gap + 1
            zs, controls = [], []
            for _ in range(tcfg["batch"]):
                i = rint(len(cache))
                start = rint(records[i].n_frames - gap)
                z, inputs = cache.window(i, start, length)
                zs.append(z)
                if ctrl is not None:
                    controls.append(ctrl(inputs))
            z = torch.stack(zs)
            control = torch.stack(controls) if controls else None
            cond, mask = make_conditioning(z, [0, gap])
            loss = training_loss(
                denoiser, z, cond, mask, control, generator=generator,
                include_conditioned=tcfg["loss_on_conditioned"])
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise TrainingDiverged(
                    f"non-finite loss at step {step}; last good checkpoint: "
                    f"{last_ckpt}")
            for group in optimizer.param_groups:
                group["lr"] = lr_at(step)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss_val)
            if (step + 1) % tcfg["log_every"] == 0 or step == step0:
                log_fh.write(f"{step},{loss_val:.6f}\n")
                log_fh.flush()
                if not quiet:
                    print(f"step {step + 1}/{tcfg['steps']} "
                          f"loss {loss_val:.4f}")
            if (step + 1) % tcfg["ckpt_every"] == 0:
                last_ckpt = os.path.join(out_dir, f"step_{step + 1:06d}.ckpt")
                _save(last_ckpt, cfg, step + 1, denoiser, ctrl, optimizer,
                      named, generator, {"loss": loss_val})

    final = os.path.join(out_dir, "final.ckpt")
    _save(final, cfg, tcfg["steps"], denoiser, ctrl, optimizer, named,
          generator, {"loss": losses[-1] if losses else float("nan")})
    return {"checkpoint": final, "first_loss": losses[0] if losses else None,
            "last_loss": losses[-1] if losses else None, "steps": tcfg["steps"]}
