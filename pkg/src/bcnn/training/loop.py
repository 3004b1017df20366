"""Two-step training loop, metrics CSV, and checkpoint files.

Step 1 trains real-valued weights with binarized activations and L2
decay on convolution weights; step 2 continues from those weights as
shadows behind sign(), without decay and without any clipping.  Each
step runs its own warmup + half-cosine schedule with a freshly reset
optimizer; the reset is flagged in the log and the metrics file.

Checkpoints store the full training state: real parameters (including
shadow magnitudes, which the deployment model format deliberately
drops), BN running statistics, Adam moments, and the shuffle RNG, so a
resumed run continues bit-for-bit.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, replace
from typing import Dict, List, Optional

import numpy as np

from .. import model_io
from ..model_io import FormatError, TruncatedError, _Reader
from ..network import Model, build_model, forward, named_buffers, named_parameters, preprocess
from .engine import TrainMode, backward_train, forward_train
from .losses import distributional_loss, labels_to_pmf, softmax_cross_entropy
from .optim import Adam, lr_at

CKPT_MAGIC = b"BCKP"
CKPT_VERSION = 1


@dataclass
class StepSettings:
    max_lr: float = 5e-4
    warmup_epochs: int = 5
    decay_epochs: int = 20
    weight_decay: float = 0.0
    batch_size: int = 64
    loss: str = "cross_entropy"  # or "distributional"

    @property
    def total_epochs(self) -> int:
        return self.warmup_epochs + self.decay_epochs


def default_step1(decay_epochs: int = 20) -> StepSettings:
    return StepSettings(weight_decay=1e-5, decay_epochs=decay_epochs)


def default_step2(decay_epochs: int = 100) -> StepSettings:
    return StepSettings(weight_decay=0.0, decay_epochs=decay_epochs)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _rng_state_bytes(rng: np.random.Generator) -> bytes:
    st = rng.bit_generator.state
    inner = st["state"]
    return (inner["state"].to_bytes(16, "little")
            + inner["inc"].to_bytes(16, "little")
            + struct.pack("<II", int(st["has_uint32"]), int(st["uinteger"])))


def _rng_from_bytes(raw: bytes) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = {
        "bit_generator": "PCG64",
        "state": {"state": int.from_bytes(raw[0:16], "little"),
                  "inc": int.from_bytes(raw[16:32], "little")},
        "has_uint32": struct.unpack("<I", raw[32:36])[0],
        "uinteger": struct.unpack("<I", raw[36:40])[0],
    }
    return np.random.Generator(bg)


def save_checkpoint(path: str, model: Model, optimizer: Adam,
                    rng: np.random.Generator, step: int, epochs_done: int) -> None:
    """Atomic write of the full training state."""
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(struct.pack("<HBI", CKPT_VERSION, step, epochs_done))
    model_io.write_config(buf, model.config)
    for _, arr, _ in named_parameters(model):
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    for _, arr in named_buffers(model):
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    buf.write(struct.pack("<Q", optimizer.t))
    for name, arr, _ in named_parameters(model):
        buf.write(np.ascontiguousarray(optimizer.m[name], dtype="<f4").tobytes())
        buf.write(np.ascontiguousarray(optimizer.v[name], dtype="<f4").tobytes())
    buf.write(_rng_state_bytes(rng))
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path: str) -> dict:
    """Read a checkpoint into a dict; model arrays are freshly built."""
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    if r.take(4) != CKPT_MAGIC:
        raise model_io.BadMagicError(f"{path!r} is not a checkpoint file")
    version, step, epochs_done = struct.unpack("<HBI", r.take(7))
    if version != CKPT_VERSION:
        raise model_io.VersionError(f"unsupported checkpoint version {version}")
    cfg = model_io.read_config(r, origin=repr(path))
    model = build_model(cfg, seed=0)
    for _, arr, _ in named_parameters(model):
        arr[...] = r.f32s(arr.size).reshape(arr.shape)
    for _, arr in named_buffers(model):
        arr[...] = r.f32s(arr.size).reshape(arr.shape)
    (t,) = struct.unpack("<Q", r.take(8))
    moments = {}
    for name, arr, _ in named_parameters(model):
        m = r.f32s(arr.size).reshape(arr.shape)
        v = r.f32s(arr.size).reshape(arr.shape)
        moments[name] = (m, v)
    rng = _rng_from_bytes(r.take(40))
    if not r.done():
        raise FormatError(f"trailing bytes in checkpoint {path!r}")
    return {"model": model, "step": step, "epochs_done": epochs_done,
            "adam_t": t, "moments": moments, "rng": rng}


def _config_bytes(cfg) -> bytes:
    buf = io.BytesIO()
    model_io.write_config(buf, cfg)
    return buf.getvalue()


def _restore_optimizer(opt: Adam, state: dict) -> None:
    opt.t = state["adam_t"]
    for name, _, _ in opt.params:
        m, v = state["moments"][name]
        opt.m[name] = m.copy()
        opt.v[name] = v.copy()


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def set_weight_mode(model: Model, mode: str) -> None:
    for blk in model.blocks:
        mods = [blk.conv_a, blk.conv_b] + ([blk.conv_id] if blk.conv_id else [])
        for m in mods:
            m.weight_mode = mode


def evaluate(model: Model, x4: np.ndarray, labels: np.ndarray, step: int,
             batch_size: int = 250) -> float:
    """Inference-mode accuracy; step 1 evaluates real weights, step 2 signs."""
    set_weight_mode(model, "real" if step == 1 else "binary")
    correct = 0
    for i in range(0, len(x4), batch_size):
        logits = forward(model, x4[i : i + batch_size], preprocessed=True)
        correct += int((logits.argmax(axis=1) == labels[i : i + batch_size]).sum())
    return correct / len(labels)


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------

def run_step(model: Model, step: int, settings: StepSettings,
             train_images: np.ndarray, train_labels: np.ndarray,
             test_images: np.ndarray, test_labels: np.ndarray,
             csv_path: str, ckpt_path: str, seed: int = 0,
             resume: Optional[str] = None, fresh_cycle: bool = False,
             teacher_pmf: Optional[np.ndarray] = None,
             log=print) -> List[dict]:
    """Train one step to completion, appending one CSV row per epoch.

    resume: path to a checkpoint of this same step to continue from.
    fresh_cycle: take only the weights from the checkpoint and restart
    the schedule with a reset optimizer (used for extra decay cycles).
    teacher_pmf: (N, classes) probability rows for the distributional
    loss; without it, one-hot rows stand in (degenerate teacher).
    """
    mode = TrainMode(weight_mode="real" if step == 1 else "sign",
                     act_mode="sign", bn_mode="batch", update_running=True)
    if settings.loss == "distributional" and teacher_pmf is None:
        teacher_pmf = labels_to_pmf(train_labels, model.config.classes)
    x4 = preprocess(train_images, model.config)
    t4 = preprocess(test_images, model.config)
    start_epoch = 0
    rng = np.random.default_rng(seed * 1000 + step)

    opt = Adam(named_parameters(model), weight_decay=settings.weight_decay,
               decay_groups=frozenset({"conv", "dw"}))
    if resume is not None:
        state = load_checkpoint(resume)
        if state["step"] != step and not fresh_cycle:
            raise FormatError(
                f"checkpoint is for step {state['step']}, cannot resume step {step}")
        src = state["model"]
        # compare in the serialized domain: checkpoint configs have been
        # through float32, the live config may hold wider Python floats
        if _config_bytes(src.config) != _config_bytes(model.config):
            raise FormatError("checkpoint config does not match this run")
        for (name, arr, _), (_, src_arr, _) in zip(named_parameters(model),
                                                   named_parameters(src)):
            arr[...] = src_arr
        for (_, arr), (_, src_arr) in zip(named_buffers(model), named_buffers(src)):
            arr[...] = src_arr
        if fresh_cycle:
            opt.reset()
            log(f"[train] optimizer state reset for a fresh step-{step} cycle")
        else:
            _restore_optimizer(opt, state)
            rng = state["rng"]
            start_epoch = state["epochs_done"]

    header_needed = start_epoch == 0
    history = []
    n = len(train_labels)
    with open(csv_path, "a" if not header_needed else "w", newline="") as fh:
        if header_needed:
            fh.write(f"# step={step} max_lr={settings.max_lr:g} "
                     f"warmup={settings.warmup_epochs} decay={settings.decay_epochs} "
                     f"weight_decay={settings.weight_decay:g} "
                     f"batch_size={settings.batch_size} loss={settings.loss} "
                     f"seed={seed} adam_betas=0.9,0.999 adam_eps=1e-8\n")
            fh.write("epoch,lr,train_loss,train_acc,eval_acc\n")
        for epoch in range(start_epoch, settings.total_epochs):
            lr = lr_at(epoch, settings.max_lr, settings.warmup_epochs,
                       settings.decay_epochs)
            perm = rng.permutation(n)
            loss_sum, correct = 0.0, 0
            for i in range(0, n, settings.batch_size):
                idx = perm[i : i + settings.batch_size]
                if len(idx) < 2:
                    continue  # batch statistics need at least two samples
                xb, yb = x4[idx], train_labels[idx]
                logits, cache = forward_train(model, xb, mode)
                if settings.loss == "distributional":
                    loss, dlogits = distributional_loss(logits, teacher_pmf[idx])
                else:
                    loss, dlogits = softmax_cross_entropy(logits, yb)
                grads = backward_train(model, dlogits, cache, mode)
                opt.step(grads, lr)
                loss_sum += loss * len(idx)
                correct += int((logits.argmax(axis=1) == yb).sum())
            train_loss = loss_sum / n
            train_acc = correct / n
            eval_acc = evaluate(model, t4, test_labels, step)
            row = {"epoch": epoch, "lr": lr, "train_loss": train_loss,
                   "train_acc": train_acc, "eval_acc": eval_acc}
            history.append(row)
            fh.write(f"{epoch},{lr:.8g},{train_loss:.6f},{train_acc:.4f},{eval_acc:.4f}\n")
            fh.flush()
            save_checkpoint(ckpt_path, model, opt, rng, step, epoch + 1)
            log(f"[train] step {step} epoch {epoch:3d} lr {lr:.3g} "
                f"loss {train_loss:.4f} acc {train_acc:.3f} eval {eval_acc:.3f}")
    return history


def train_two_step(config, train_images, train_labels, test_images, test_labels,
                   out_dir: str, seed: int = 0,
                   step1: Optional[StepSettings] = None,
                   step2: Optional[StepSettings] = None,
                   log=print) -> dict:
    """Full 2-step procedure; returns final history and accuracy."""
    os.makedirs(out_dir, exist_ok=True)
    step1 = step1 or default_step1()
    step2 = step2 or default_step2()
    model = build_model(config, seed=seed)
    h1 = run_step(model, 1, step1, train_images, train_labels, test_images,
                  test_labels, os.path.join(out_dir, "metrics_step1.csv"),
                  os.path.join(out_dir, "checkpoint_step1.bin"), seed=seed, log=log)
    log("[train] step 1 complete; optimizer state reset for step 2")
    h2 = run_step(model, 2, step2, train_images, train_labels, test_images,
                  test_labels, os.path.join(out_dir, "metrics_step2.csv"),
                  os.path.join(out_dir, "checkpoint_step2.bin"), seed=seed, log=log)
    return {"model": model, "step1": h1, "step2": h2,
            "final_eval_acc": h2[-1]["eval_acc"] if h2 else float("nan")}
