"""Training orchestration: single runs, persisted records, sweeps.

One run is a pure function of (config, seed): data, splits, parameter
init, batch order, dropout masks and method randomness all come from
counter-based streams keyed by those two values, so every persisted
number is reproducible byte for byte.
"""

from __future__ import annotations

import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import centroids as ct
from . import ssl_methods as sm
from .clustering import CMOutput, cm_forward, cm_loss, init_cm
from .config import SCHEMA, ExperimentConfig, apply_overrides
from .data import (Dataset, SSLSplit, gen_synthetic, load_idx, make_ssl_split,
                   next_batch, next_unlabeled_batch, shift_crop, shift_domain)
from .evaluation import paired_t_test, top1
from .nn import (LRSchedule, MLPConfig, OptimizerState, ParamSet,
                 WeightAverager, average_weights, averaged_params,
                 forward_features, init_mlp, lr_at, optimizer_step)
from .streams import rng_stream
from .tape import Tape, add, concat_rows, matmul, softmax_rows
from .uda import (DiscriminatorConfig, dann_domain_loss, delta_schedule,
                  init_discriminator, proxy_a_distance)

RECORD_SCHEMA_VERSION = 1

TRACE_FIELDS = ("step", "lr", "delta", "ce", "e1", "e2", "e3", "e4",
                "cm_total", "base", "total")


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, term: str, breakdown: dict):
        detail = ", ".join(f"{k}={v:.6g}" for k, v in breakdown.items())
        super().__init__(
            f"non-finite loss term '{term}' at step {step} ({detail})"
        )
        self.step = step
        self.term = term
        self.breakdown = breakdown


@dataclass
class RunRecord:
    config_hash: str
    seed: int
    trace: dict = field(default_factory=dict)
    val_curve: list = field(default_factory=list)
    final_acc: float = 0.0  # best-validation checkpoint on test/target data
    swa_acc: float = 0.0
    source_test_acc: float | None = None  # uda only
    pad: float | None = None  # uda only
    wall_clock_s: float = 0.0
    schema_version: int = RECORD_SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "RunRecord":
        return RunRecord(**json.loads(line))


def append_record(path, record: RunRecord) -> None:
    with open(path, "a") as f:
        f.write(record.to_json() + "\n")


def read_records(path) -> list[RunRecord]:
    records = []
    with open(path) as f:
        for line in f:
            if line.strip():
                records.append(RunRecord.from_json(line))
    return records


def _softmax_np(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _mlp_config(cfg: ExperimentConfig) -> MLPConfig:
    return MLPConfig(layer_sizes=cfg["model.layers"],
                     dropout_rate=cfg["model.dropout"],
                     input_noise_sigma=cfg["model.input_noise"])


def _schedule(cfg: ExperimentConfig) -> LRSchedule:
    return LRSchedule(kind=cfg["schedule.kind"], base_lr=cfg["optim.lr"],
                      decay_factor=cfg["schedule.decay_factor"],
                      milestones=tuple(cfg["schedule.milestones"]),
                      poly_a=cfg["schedule.poly_a"], poly_b=cfg["schedule.poly_b"])


def eval_logits(params: ParamSet, mlp_cfg: MLPConfig, X: np.ndarray) -> np.ndarray:
    """Deterministic eval-mode pass through backbone and cluster head."""
    f = forward_features(params, X, mlp_cfg, mode="eval")
    return f @ params["cm.W"].T + params["cm.b"]


def eval_accuracy(params: ParamSet, mlp_cfg: MLPConfig, X, y) -> float:
    return top1(ct.predict(_softmax_np(eval_logits(params, mlp_cfg, X))), y)


def _dataset_slice(ds: Dataset, idx) -> Dataset:
    return Dataset(ds.X[idx], None if ds.y is None else ds.y[idx], ds.k, ds.name)


def _build_ssl_data(cfg: ExperimentConfig, seed: int) -> SSLSplit:
    data_seed = cfg["data.seed"] if cfg["data.seed"] >= 0 else seed
    if cfg["data.kind"] == "idx":
        train = load_idx(cfg["data.images"], cfg["data.labels"])
        test = load_idx(cfg["data.test_images"], cfg["data.test_labels"])
        if cfg["data.subset_n"] and cfg["data.subset_n"] < train.n:
            pick = rng_stream(data_seed, "data/subset").permutation(train.n)
            train = _dataset_slice(train, np.sort(pick[: cfg["data.subset_n"]]))
    else:
        n, test_n = cfg["data.n"], cfg["data.test_n"]
        full = gen_synthetic(cfg["data.kind"], n + test_n, cfg["data.k"],
                             cfg["data.noise_sigma"], data_seed,
                             separation=cfg["data.separation"])
        train = _dataset_slice(full, np.arange(n))
        test = _dataset_slice(full, np.arange(n, n + test_n))
    return make_ssl_split(train, cfg["data.labels_per_class"],
                          cfg["data.val_fraction"], data_seed, test)


def _build_uda_data(cfg: ExperimentConfig, seed: int):
    """Source gets a train/val/test split; the target set trains
    unlabeled and its retained labels are used only for evaluation."""
    data_seed = cfg["data.seed"] if cfg["data.seed"] >= 0 else seed
    n = cfg["data.n"]
    n_t = cfg["data.target_n"] or n
    full = gen_synthetic(cfg["data.kind"], n + n_t, cfg["data.k"],
                         cfg["data.noise_sigma"], data_seed,
                         separation=cfg["data.separation"])
    source = _dataset_slice(full, np.arange(n))
    target = shift_domain(_dataset_slice(full, np.arange(n, n + n_t)),
                          cfg["data.rotation_deg"],
                          cfg["data.translation"] or None,
                          cfg["data.extra_noise"], data_seed)

    perm = rng_stream(data_seed, "uda/source_split").permutation(n)
    n_test = int(round(cfg["data.source_test_fraction"] * n))
    n_val = int(round(cfg["data.val_fraction"] * n))
    test_idx = perm[:n_test]
    val_idx = perm[n_test: n_test + n_val]
    train_idx = perm[n_test + n_val:]
    split = SSLSplit(train=source, labeled_idx=train_idx,
                     unlabeled_idx=np.zeros(0, dtype=np.int64),
                     val_idx=val_idx, test=_dataset_slice(source, test_idx))
    return split, target


def _make_predictor(main_tape, lifted, params: ParamSet, mlp_cfg: MLPConfig):
    """Model closure for perturbation/interpolation losses: eval-mode
    backbone plus softmax head, on whichever tape the caller supplies."""

    def model_fn(t, Xt):
        pd = lifted if t is main_tape else {n: t.constant(a) for n, a in params.items()}
        f = forward_features(pd, Xt, mlp_cfg, mode="eval", tape=t)
        return softmax_rows(add(matmul(f, pd["cm.W"], transpose_b=True), pd["cm.b"]))

    return model_fn


def _teacher_probs(teacher: WeightAverager, mlp_cfg: MLPConfig, X: np.ndarray) -> np.ndarray:
    tp = averaged_params(teacher)
    return _softmax_np(eval_logits(tp, mlp_cfg, X))


def run_experiment(cfg: ExperimentConfig, seed: int, out_dir=None) -> RunRecord:
    """Execute one full training run; see module docstring for the
    determinism contract."""
    cfg.validate()
    started = time.perf_counter()
    task = cfg["task"]
    mlp_cfg = _mlp_config(cfg)
    schedule = _schedule(cfg)
    iterations = cfg["train.iterations"]
    n_l, n_u = cfg["train.batch_labeled"], cfg["train.batch_unlabeled"]
    weights = ct.LossWeights(beta=cfg["weights.beta"], delta=cfg["weights.delta"],
                             alpha=cfg["weights.alpha"])
    strategy = ct.CentroidStrategy(kind=cfg["centroids.strategy"],
                                   conf_threshold=cfg["centroids.conf_threshold"])
    method = sm.SSLMethodConfig(
        kind=cfg["ssl.method"] if task == "ssl" else "none",
        pl_threshold=cfg["ssl.pl_threshold"], ema_decay=cfg["ssl.ema_decay"],
        vat_eps=cfg["ssl.vat_eps"], vat_xi=cfg["ssl.vat_xi"],
        vat_iters=cfg["ssl.vat_iters"], ict_beta_a=cfg["ssl.ict_beta_a"])

    if task == "ssl":
        split = _build_ssl_data(cfg, seed)
        target = None
        k = split.train.k
    else:
        split, target = _build_uda_data(cfg, seed)
        k = split.train.k

    params = init_mlp(mlp_cfg, seed)
    init_cm(k, mlp_cfg.feature_dim, seed, params,
            random_centroids=(strategy.kind == "learned"))
    disc_cfg = DiscriminatorConfig(hidden=cfg["uda.disc_hidden"])
    if task == "uda":
        init_discriminator(mlp_cfg.feature_dim, disc_cfg, seed, params)
    n_disc_layers = len(disc_cfg.hidden) + 1

    trainable = [n for n in params.names()
                 if n != "cm.M" or strategy.kind == "learned"]
    opt = OptimizerState(kind=cfg["optim.kind"], momentum=cfg["optim.momentum"],
                         weight_decay=cfg["optim.weight_decay"])
    tracker = ct.CentroidTracker.zeros(k, mlp_cfg.feature_dim,
                                       cfg["centroids.literal_batch_norm"])
    teacher = (WeightAverager("ema", cfg["ssl.ema_decay"], params)
               if method.needs_teacher else None)
    swa = WeightAverager("swa")
    swa_start = int(np.ceil(cfg["train.swa_start_frac"] * iterations))
    swa_every = cfg["train.swa_every"] or max(1, iterations // 40)

    trace = {f: [] for f in TRACE_FIELDS}
    val_curve = []
    best_acc, best_params = -1.0, None

    def one_step(step: int) -> None:
        nonlocal best_acc, best_params
        if task == "ssl":
            X_l, y_l, X_u = next_batch(split, n_l, n_u, seed, step)
        else:
            X_l, y_l, _ = next_batch(split, n_l, 0, seed, step)
            X_u = next_unlabeled_batch(target, n_u, seed, step)
        have_u = len(X_u) > 0

        tape = Tape()
        lifted = {}
        for name in params.names():
            if name == "cm.M" and strategy.tracker_driven:
                continue  # lifted after the tracker update below
            lifted[name] = tape.leaf(params[name])

        f_l = forward_features(lifted, X_l, mlp_cfg, mode="train", seed=seed,
                               step=step, stream="main_l", tape=tape)
        f_u = (forward_features(lifted, X_u, mlp_cfg, mode="train", seed=seed,
                                step=step, stream="main_u", tape=tape)
               if have_u else None)

        if strategy.tracker_driven:
            if strategy.kind == "gs_pt" and have_u:
                gamma_u_np = _softmax_np(
                    f_u.value @ params["cm.W"].T + params["cm.b"])
                ct.augment_with_pseudo(tracker, f_l.value, y_l, f_u.value,
                                       gamma_u_np, strategy.conf_threshold)
            else:
                ct.update_centroids(tracker, f_l.value, y_l)
            params["cm.M"] = tracker.mu.copy()
            lifted["cm.M"] = tape.constant(tracker.mu)

        W_t, b_t, M_t = lifted["cm.W"], lifted["cm.b"], lifted["cm.M"]
        out_l = cm_forward(f_l, W_t, b_t, M_t)
        out_u = cm_forward(f_u, W_t, b_t, M_t) if have_u else None

        if weights.beta != 0.0:
            if have_u:
                joint = CMOutput(gamma=concat_rows([out_l.gamma, out_u.gamma]),
                                 recon=concat_rows([out_l.recon, out_u.recon]))
                cm_br = cm_loss(concat_rows([f_l, f_u]), joint, M_t, weights.alpha)
            else:
                cm_br = cm_loss(f_l, out_l, M_t, weights.alpha)
            cm_term = cm_br.total
            cm_floats = cm_br.floats()
        else:
            cm_term = 0.0
            cm_floats = {"e1": 0.0, "e2": 0.0, "e3": 0.0, "e4": 0.0, "cm_total": 0.0}

        delta_eff = weights.delta
        base_term = 0.0
        if task == "uda":
            # one schedule: the ramped coefficient multiplies the whole
            # adversarial term, so the reversed backbone signal ramps
            # with it and the reversal scale inside stays at 1
            delta_eff = weights.delta * delta_schedule(
                step / iterations, cfg["uda.gamma_ramp"])
            base_term = dann_domain_loss(tape, f_l, f_u, lifted, 1.0,
                                         n_disc_layers)
        elif method.kind != "none" and have_u:
            def consistency_gamma(tag):
                # stochastic pass for consistency losses: fresh noise and
                # dropout streams, plus pixel shift-crop on image data
                X_in = X_u
                if cfg["data.kind"] == "idx":
                    X_in = shift_crop(X_u, rng_stream(seed, f"crop/{tag}", step))
                f = forward_features(lifted, X_in, mlp_cfg, mode="train",
                                     seed=seed, step=step, stream=tag, tape=tape)
                return cm_forward(f, W_t, b_t, M_t).gamma

            if method.kind == "pi_model":
                base_term = sm.pi_consistency(consistency_gamma("pi0"),
                                              consistency_gamma("pi1"))
            elif method.kind == "mean_teacher":
                base_term = sm.mean_teacher_consistency(
                    consistency_gamma("mt"), _teacher_probs(teacher, mlp_cfg, X_u))
            elif method.kind == "pseudo_label":
                base_term = sm.pseudo_label_loss(out_u.gamma, method.pl_threshold)
            elif method.kind == "vat":
                model_fn = _make_predictor(tape, lifted, params, mlp_cfg)
                base_term = sm.vat_loss(tape, model_fn, X_u, method.vat_eps,
                                        method.vat_xi, method.vat_iters,
                                        rng_stream(seed, "vat", step))
            elif method.kind == "ict":
                model_fn = _make_predictor(tape, lifted, params, mlp_cfg)
                base_term = sm.ict_loss(tape, model_fn, X_u,
                                        _teacher_probs(teacher, mlp_cfg, X_u),
                                        method.ict_beta_a,
                                        rng_stream(seed, "ict", step))

        eff_weights = ct.LossWeights(beta=weights.beta, delta=delta_eff,
                                     alpha=weights.alpha)
        total, breakdown = ct.combined_loss(out_l.gamma, y_l, cm_term,
                                                 base_term, eff_weights)
        breakdown.update(cm_floats)
        for term, value in breakdown.items():
            if not np.isfinite(value):
                raise TrainingDiverged(step, term, breakdown)

        tape.backward(total)
        grads = {name: lifted[name].grad for name in trainable}
        optimizer_step(opt, params, grads, lr_at(schedule, step, iterations))

        if teacher is not None:
            average_weights(teacher, params)
        if step >= swa_start and (step - swa_start) % swa_every == 0:
            average_weights(swa, params)

        if step % cfg["train.trace_every"] == 0 or step == iterations - 1:
            trace["step"].append(step)
            trace["lr"].append(lr_at(schedule, step, iterations))
            trace["delta"].append(delta_eff)
            trace["ce"].append(breakdown["ce"])
            trace["base"].append(breakdown["base"])
            trace["total"].append(breakdown["total"])
            for f in ("e1", "e2", "e3", "e4", "cm_total"):
                trace[f].append(cm_floats[f])

        if ((step + 1) % cfg["train.eval_every"] == 0 or step == iterations - 1) \
                and len(split.val_idx) > 0:
            acc = eval_accuracy(params, mlp_cfg, split.val_X, split.val_y)
            val_curve.append([step, acc])
            if acc > best_acc:
                best_acc, best_params = acc, params.clone()

    for step in range(iterations):
        try:
            one_step(step)
        except FloatingPointError as exc:
            raise TrainingDiverged(step, "forward value overflow", {}) from exc
        except ValueError as exc:
            if "non-finite gradient" in str(exc):
                raise TrainingDiverged(step, "gradient overflow", {}) from exc
            raise

    if best_params is None:
        best_params = params.clone()
    if swa.count == 0:
        average_weights(swa, params)
    swa_params = averaged_params(swa)

    record = RunRecord(config_hash=cfg.config_hash(), seed=seed)
    record.trace = trace
    record.val_curve = val_curve
    if task == "ssl":
        record.final_acc = eval_accuracy(best_params, mlp_cfg,
                                         split.test.X, split.test.y)
        record.swa_acc = eval_accuracy(swa_params, mlp_cfg,
                                       split.test.X, split.test.y)
    else:
        record.final_acc = eval_accuracy(best_params, mlp_cfg, target.X, target.y)
        record.swa_acc = eval_accuracy(swa_params, mlp_cfg, target.X, target.y)
        record.source_test_acc = eval_accuracy(best_params, mlp_cfg,
                                               split.test.X, split.test.y)
        F_s = forward_features(best_params, split.train.X[split.labeled_idx],
                               mlp_cfg, mode="eval")
        F_t = forward_features(best_params, target.X, mlp_cfg, mode="eval")
        record.pad = proxy_a_distance(F_s, F_t, probe_seed=seed)
    record.wall_clock_s = time.perf_counter() - started

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = f"{cfg.config_hash()}_s{seed}"
        ckpt = best_params.clone()
        ckpt["tracker.mu"] = tracker.mu
        ckpt["tracker.counts"] = tracker.counts.astype(np.float64)
        ckpt.save(out_dir / f"{stem}_best.ckpt")
        swa_params.save(out_dir / f"{stem}_swa.ckpt")
        append_record(out_dir / "records.jsonl", record)
    return record


def _sweep_worker(args):
    values, seed = args
    cfg = ExperimentConfig(values)
    try:
        return run_experiment(cfg, seed), None
    except Exception as exc:  # cell failures must not sink the sweep
        return None, f"{type(exc).__name__}: {exc}"


def sweep(cfg: ExperimentConfig, grid: dict, seeds, out_dir,
          baseline: dict | None = None, workers: int | None = None):
    """Cartesian product of grid values x seeds, one run each.

    Writes records.jsonl plus summary.csv under out_dir and returns the
    summary rows. A failing cell is marked failed and the sweep moves
    on. `baseline` names the cell other cells are t-tested against.
    """
    for key in grid:
        if key not in SCHEMA:
            raise ValueError(f"grid key {key!r} is not a config path")
    if baseline:
        for key in baseline:
            if key not in SCHEMA:
                raise ValueError(f"baseline key {key!r} is not a config path")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    grid_keys = sorted(grid)
    cells = [dict(zip(grid_keys, combo))
             for combo in itertools.product(*(grid[k] for k in grid_keys))]
    jobs = []
    for cell in cells:
        cell_cfg = apply_overrides(cfg, [f"{k}={v}" for k, v in cell.items()])
        for seed in seeds:
            jobs.append((cell_cfg.values(), seed))

    if workers is None:
        workers = int(os.environ.get("CLUREG_WORKERS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(j) for j in jobs]

    records_path = out_dir / "records.jsonl"
    per_cell = []
    idx = 0
    for cell in cells:
        accs, swa_accs, failures = [], [], []
        for seed in seeds:
            record, err = results[idx]
            idx += 1
            if record is None:
                failures.append(f"seed {seed}: {err}")
            else:
                append_record(records_path, record)
                accs.append(record.final_acc)
                swa_accs.append(record.swa_acc)
        per_cell.append({"cell": cell, "accs": accs, "swa_accs": swa_accs,
                         "failures": failures})

    baseline_accs = None
    if baseline is not None:
        want = {k: str(v) for k, v in baseline.items()}
        for entry in per_cell:
            got = {k: str(v) for k, v in entry["cell"].items()}
            if all(got.get(k) == v for k, v in want.items()):
                baseline_accs = entry["accs"]
                entry["is_baseline"] = True
                break

    rows = []
    for entry in per_cell:
        accs, swa_accs = entry["accs"], entry["swa_accs"]
        row = dict(entry["cell"])
        row["n_seeds"] = len(accs)
        row["n_failed"] = len(entry["failures"])
        row["mean_acc"] = float(np.mean(accs)) if accs else ""
        row["std_acc"] = float(np.std(accs, ddof=1)) if len(accs) > 1 else ""
        row["mean_swa_acc"] = float(np.mean(swa_accs)) if swa_accs else ""
        row["std_swa_acc"] = (float(np.std(swa_accs, ddof=1))
                              if len(swa_accs) > 1 else "")
        if (baseline_accs and accs and not entry.get("is_baseline")
                and len(accs) == len(baseline_accs) and len(accs) >= 2):
            row["p_vs_baseline"] = paired_t_test(accs, baseline_accs)[1]
        else:
            row["p_vs_baseline"] = ""
        rows.append(row)

    columns = grid_keys + ["n_seeds", "n_failed", "mean_acc", "std_acc",
                           "mean_swa_acc", "std_swa_acc", "p_vs_baseline"]
    with open(out_dir / "summary.csv", "w") as f:
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(str(row.get(c, "")) for c in columns) + "\n")
    return rows
