"""Training loops (energy discrepancy and persistent contrastive divergence)
plus the two end-to-end recipes: lattice coupling recovery and continuous
density estimation on bit-encoded planar datasets.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bits import Dataset
from .gray import float_to_bits_batch
from .loss import EnergyOverflowError, LossConfig, ed_loss_batch
from .metrics import (
    MetricRecord,
    MetricsLog,
    mmd_hamming,
    neg_log_rmse,
    nll_importance,
)
from .models import IsingEnergy, MlpEnergy, l1_subgradient, save_checkpoint
from .perturb import scheme_from_config
from .rng import RngStream
from .samplers import (
    PcdBuffer,
    generate_ising_dataset,
    gibbs_sweeps_batch,
    pcd_gradient,
    sweeps_for_site_steps,
)
from .synthetic import sample_synthetic

LOSS_ABORT_THRESHOLD = 1.0e6

# A degenerate channel (eps 0 or 1) zeroes every energy gap, but float dust
# in the cancelled gradient still reaches Adam's normaliser, so updates are
# tiny rather than exactly zero.  Anything this far below the step size is a
# flatline; a live run's first bias-corrected step has magnitude ~ lr.
FLATLINE_UPDATE_FRACTION = 1.0e-6


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(n_params, beta1=0.9, beta2=0.999, eps=1e-8):
    return AdamState(np.zeros(n_params), np.zeros(n_params), 0, beta1, beta2, eps)


def adam_step(state, params, grad, lr):
    """One bias-corrected Adam update.  Returns the new parameter vector.

    The moment buffers are updated in place; non-finite gradients are
    rejected so a corrupted step cannot silently poison the moments.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient passed to adam_step")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class TrainResult:
    model: object
    losses: np.ndarray
    status: str  # "ok" or "aborted"
    flags: dict
    aborted_at: Optional[int] = None


def _run_flags(losses, w, M, max_update, lr, aborted):
    """Classify a finished run: diverged / flatlined / converged.

    With w = 0 the stabilised loss is unbounded below, so a plunge far past
    -log M signals the runaway minimiser; with w > 0 the loss cannot cross
    log(w) - log(M) and the flag stays off.
    """
    flags = {
        "diverged": bool(aborted),
        "flatlined": False,
        "converged": False,
        "min_loss": None,
        "final_loss": None,
    }
    if len(losses) == 0:
        flags["diverged"] = True
        return flags
    min_loss = float(np.min(losses))
    flags["min_loss"] = min_loss
    flags["final_loss"] = float(losses[-1])
    if w == 0.0 and min_loss < -10.0 - math.log(M):
        flags["diverged"] = True
    flags["flatlined"] = max_update <= FLATLINE_UPDATE_FRACTION * lr
    if not flags["diverged"] and not flags["flatlined"]:
        span = max(1, len(losses) // 10)
        head = float(np.mean(losses[:span]))
        tail = float(np.mean(losses[-span:]))
        flags["converged"] = tail < head
    return flags


def train_ed(
    model,
    data,
    scheme,
    rng,
    *,
    steps,
    lr,
    batch_size,
    loss_cfg=None,
    l1_coeff=0.0,
    eval_every=0,
    eval_fn=None,
):
    """Minimise the stabilised contrastive loss with Adam.

    Minibatches are drawn uniformly with replacement.  Training aborts (and
    the result is flagged) if the loss goes non-finite, exceeds 1e6, or an
    energy evaluation overflows.
    """
    loss_cfg = loss_cfg or LossConfig()
    X = data.states if isinstance(data, Dataset) else np.asarray(data, dtype=np.uint8)
    N = X.shape[0]
    params = model.get_params()
    adam = adam_init(params.shape[0])
    losses = []
    max_update = 0.0
    aborted_at = None
    for step in range(steps):
        batch = X[rng.integers(0, N, size=batch_size)]
        try:
            report = ed_loss_batch(model, scheme, batch, loss_cfg, rng)
        except EnergyOverflowError:
            aborted_at = step
            break
        losses.append(report.loss)
        if not math.isfinite(report.loss) or report.loss > LOSS_ABORT_THRESHOLD:
            aborted_at = step
            break
        grad = report.grad
        if l1_coeff > 0.0:
            grad = grad + l1_subgradient(model, l1_coeff)
        new_params = adam_step(adam, params, grad, lr)
        max_update = max(max_update, float(np.max(np.abs(new_params - params))))
        model.set_params(new_params)
        params = model.get_params()  # re-read so any projection sticks
        if eval_every > 0 and eval_fn is not None and (step + 1) % eval_every == 0:
            recent = float(np.mean(losses[-eval_every:]))
            eval_fn(model, step + 1, recent)
    losses = np.asarray(losses, dtype=np.float64)
    flags = _run_flags(losses, loss_cfg.w, loss_cfg.M, max_update, lr, aborted_at is not None)
    status = "aborted" if aborted_at is not None else "ok"
    return TrainResult(model, losses, status, flags, aborted_at)


def train_pcd(
    model,
    data,
    rng,
    *,
    steps,
    lr,
    batch_size,
    k=10,
    buffer_size=None,
    l1_coeff=0.0,
    eval_every=0,
    eval_fn=None,
):
    """Persistent contrastive divergence baseline with Adam.

    The persistent chains are initialised from data and advanced k sweeps
    per step.  The recorded trace holds gradient norms (PCD has no loss).
    """
    X = data.states if isinstance(data, Dataset) else np.asarray(data, dtype=np.uint8)
    N = X.shape[0]
    buffer_size = buffer_size or batch_size
    chains = X[rng.integers(0, N, size=buffer_size)].copy()
    buffer = PcdBuffer(chains=chains, k=k, rng=rng.split(1))
    params = model.get_params()
    adam = adam_init(params.shape[0])
    grad_norms = []
    max_update = 0.0
    aborted_at = None
    for step in range(steps):
        batch = X[rng.integers(0, N, size=batch_size)]
        grad = pcd_gradient(model, batch, buffer)
        if not np.all(np.isfinite(grad)):
            aborted_at = step
            break
        if l1_coeff > 0.0:
            grad = grad + l1_subgradient(model, l1_coeff)
        grad_norms.append(float(np.linalg.norm(grad)))
        new_params = adam_step(adam, params, grad, lr)
        max_update = max(max_update, float(np.max(np.abs(new_params - params))))
        model.set_params(new_params)
        params = model.get_params()
        if eval_every > 0 and eval_fn is not None and (step + 1) % eval_every == 0:
            eval_fn(model, step + 1, float(np.mean(grad_norms[-eval_every:])))
    grad_norms = np.asarray(grad_norms, dtype=np.float64)
    flags = {
        "diverged": aborted_at is not None,
        "flatlined": max_update <= FLATLINE_UPDATE_FRACTION * lr,
        "converged": aborted_at is None and max_update > FLATLINE_UPDATE_FRACTION * lr,
        "min_loss": float(np.min(grad_norms)) if len(grad_norms) else None,
        "final_loss": float(grad_norms[-1]) if len(grad_norms) else None,
    }
    status = "aborted" if aborted_at is not None else "ok"
    return TrainResult(model, grad_norms, status, flags, aborted_at)


def _write_summary(out_dir, summary):
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_ising_recipe(cfg, digest="", out_dir=None):
    """Coupling recovery on the L x L lattice, sweeping the l1 penalty.

    Returns a summary dict with the best recovery score across the sweep.
    """
    task = cfg["task"]
    train = cfg["train"]
    L = task["L"]
    d = L * L
    rng = RngStream(cfg["seed"])
    if task.get("data_file"):
        from .bits import load_dataset_csv

        data = load_dataset_csv(task["data_file"])
        J_true = np.loadtxt(task["j_file"], delimiter=",").reshape(d, d)
    else:
        data, J_true = generate_ising_dataset(
            L,
            task["sigma"],
            task["n"],
            task["gibbs_site_steps"],
            rng.split(0),
            periodic=task["periodic"],
        )
    scheme = None
    if train["method"] == "ed":
        scheme = scheme_from_config(cfg["scheme"])
    sweep = list(train["l1_sweep"]) or [train["l1_coeff"]]
    loss_cfg = LossConfig(M=train["M"], w=train["w"])
    log = MetricsLog(config_digest=digest)
    per_l1 = {}
    best = None
    for i, coeff in enumerate(sweep):
        model = IsingEnergy(d)
        if train["method"] == "pcd":
            result = train_pcd(
                model,
                data,
                rng.split(10 + i),
                steps=train["steps"],
                lr=train["lr"],
                batch_size=train["batch"],
                k=train["pcd_k"],
                l1_coeff=coeff,
            )
        else:
            result = train_ed(
                model,
                data,
                scheme,
                rng.split(10 + i),
                steps=train["steps"],
                lr=train["lr"],
                batch_size=train["batch"],
                loss_cfg=loss_cfg,
                l1_coeff=coeff,
            )
        score = neg_log_rmse(
            model.J, J_true, off_diagonal_only=cfg["eval"]["neg_log_rmse_off_diagonal_only"]
        )
        log.log(train["steps"], MetricRecord(f"neg_log_rmse[l1={coeff!r}]", score))
        per_l1[repr(coeff)] = {"neg_log_rmse": score, "status": result.status, **result.flags}
        if best is None or score > best[1]:
            best = (coeff, score, model, result)
    summary = {
        "task": "ising",
        "config_digest": digest,
        "best_l1": best[0],
        "best_neg_log_rmse": best[1],
        "per_l1": per_l1,
        "status": best[3].status,
        "flags": best[3].flags,
    }
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        log.write(os.path.join(out_dir, "metrics.csv"))
        save_checkpoint(
            best[2],
            os.path.join(out_dir, "checkpoint.json"),
            step=train["steps"],
            seed=cfg["seed"],
            digest=digest,
        )
        np.savetxt(os.path.join(out_dir, "j_true.csv"), J_true, delimiter=",")
        _write_summary(out_dir, summary)
    summary["model"] = best[2]
    summary["j_true"] = J_true
    return summary


def run_density_recipe(cfg, digest="", out_dir=None):
    """Density estimation on bit-encoded planar data with an MLP energy."""
    task = cfg["task"]
    train = cfg["train"]
    ev = cfg["eval"]
    rng = RngStream(cfg["seed"])
    bbox = tuple(tuple(b) for b in task["bbox"])
    points = sample_synthetic(
        task["name"], task["n_train"], rng.split(0), params=task["generator_params"] or None
    )
    data = Dataset(float_to_bits_batch(points, bbox=bbox), provenance=task["name"])
    eval_points = sample_synthetic(
        task["name"], task["n_eval"], rng.split(1), params=task["generator_params"] or None
    )
    eval_data = Dataset(float_to_bits_batch(eval_points, bbox=bbox), provenance=task["name"])
    d = data.states.shape[1]
    model = MlpEnergy(d, rng.split(2), input_encoding=cfg["model"]["input_encoding"],
                      hidden=cfg["model"]["hidden"])
    scheme = scheme_from_config(cfg["scheme"])
    log = MetricsLog(config_digest=digest)
    eval_rng = rng.split(3)

    def eval_fn(m, step, recent_loss):
        log.log(step, MetricRecord("loss", recent_loss))
        if ev["nll_S_train"] > 0:
            rec = nll_importance(m, eval_data, ev["nll_S_train"], eval_rng)
            log.log(step, rec)

    result = train_ed(
        model,
        data,
        scheme,
        rng.split(4),
        steps=train["steps"],
        lr=train["lr"],
        batch_size=train["batch"],
        loss_cfg=LossConfig(M=train["M"], w=train["w"]),
        eval_every=train["eval_every"],
        eval_fn=eval_fn,
    )
    summary = {
        "task": "density",
        "name": task["name"],
        "config_digest": digest,
        "status": result.status,
        "flags": result.flags,
    }
    if result.status == "ok":
        final_nll = nll_importance(model, eval_data, ev["nll_S"], rng.split(5))
        log.log(train["steps"], final_nll)
        summary["nll"] = final_nll.value
        summary["nll_stderr"] = final_nll.stderr
        if ev["mmd_repeats"] > 0:
            mmd_rng = rng.split(6)
            vals = []
            sweeps = sweeps_for_site_steps(ev["mmd_gibbs_site_steps"], d)
            for _ in range(ev["mmd_repeats"]):
                if ev["mmd_chain_init"] == "data":
                    idx = mmd_rng.integers(0, data.states.shape[0], size=ev["mmd_samples"])
                    chains = data.states[idx].copy()
                else:
                    chains = mmd_rng.integers(0, 2, size=(ev["mmd_samples"], d)).astype(np.uint8)
                gibbs_sweeps_batch(model, chains, sweeps, mmd_rng)
                truth = sample_synthetic(
                    task["name"], ev["mmd_samples"], mmd_rng,
                    params=task["generator_params"] or None,
                )
                truth_bits = float_to_bits_batch(truth, bbox=bbox)
                vals.append(mmd_hamming(chains, truth_bits, bandwidth=ev["mmd_bandwidth"]))
            mmd_mean = float(np.mean(vals))
            mmd_stderr = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else None
            rec = MetricRecord("mmd", mmd_mean, stderr=mmd_stderr, n_samples=ev["mmd_samples"])
            log.log(train["steps"], rec)
            summary["mmd"] = mmd_mean
            summary["mmd_stderr"] = mmd_stderr
            summary["mmd_values"] = [float(v) for v in vals]
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        log.write(os.path.join(out_dir, "metrics.csv"))
        if result.status == "ok":
            save_checkpoint(
                model,
                os.path.join(out_dir, "checkpoint.json"),
                step=train["steps"],
                seed=cfg["seed"],
                digest=digest,
            )
        _write_summary(out_dir, summary)
    summary["model"] = model
    return summary
