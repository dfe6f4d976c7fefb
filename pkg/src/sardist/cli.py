"""Command-line interface.

Subcommands: synth, despeckle, train, estimate, metric, delineate, eval,
ablate, selftest. Every run writes exactly one JSON manifest alongside its
outputs recording the resolved configuration, inputs, outputs, seed, tool
version and wall-clock duration.

Flag precedence: explicit flags > --config JSON file > built-in defaults.
Thread count resolves as --threads > SARDIST_THREADS > 1; one thread is the
bitwise reference path.

Exit codes: 0 success, 1 validation error (bad values, malformed files,
diverged training), 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, replace

import numpy as np

from . import __version__
from .errors import ValidationError
from .evaluation import (LabeledScores, build_labeled_set, default_tau_grid,
                         emit_report, f1_vs_threshold, pr_curve)
from .disturbance import log_ratio_map, mahalanobis_map, threshold_map
from .inference import SweepConfig, estimate_from_stack, sweep_estimate
from .model import Model, ModelConfig, load_checkpoint, preset_input_patch, \
    preset_model_size, save_checkpoint
from .preprocess import PreprocessConfig, clip_unit, despeckle_stack, logit
from .raster import (read_estimate, read_mask, read_metric_map, read_stack,
                     write_delineation, write_estimate, write_mask,
                     write_metric_map, write_stack)
from .synth import SynthConfig, generate_scene, generate_training_corpus, load_corpus
from .training import TrainConfig, train


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def _load_config_file(args) -> dict:
    if getattr(args, "config", None) is None:
        return {}
    with open(args.config, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValidationError(f"{args.config}: config file must hold a JSON object")
    return data


class _Resolver:
    """flag > config file > default, with flag names in kebab-case."""

    def __init__(self, args):
        self.args = args
        self.file = _load_config_file(args)
        self.resolved: dict = {}

    def get(self, name: str, default):
        flag = getattr(self.args, name.replace("-", "_"), None)
        if flag is not None:
            value = flag
        elif name in self.file:
            value = self.file[name]
        else:
            value = default
        self.resolved[name] = value
        return value


def _threads(resolver: _Resolver) -> int:
    env = os.environ.get("SARDIST_THREADS")
    fallback = int(env) if env else 1
    return int(resolver.get("threads", fallback))


def _write_manifest(target: str, subcommand: str, resolver: _Resolver,
                    inputs: list[str], outputs: list[str], seed: int | None,
                    t0: float, extra: dict | None = None) -> None:
    manifest = {
        "subcommand": subcommand,
        "version": __version__,
        "config": resolver.resolved,
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "duration_seconds": time.time() - t0,
    }
    if extra:
        manifest.update(extra)
    if os.path.isdir(target):
        path = os.path.join(target, "run.manifest.json")
    else:
        path = target + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _synth_config(r: _Resolver) -> SynthConfig:
    base = SynthConfig()
    gamma0 = r.get("class-gamma0", base.class_gamma0)
    if isinstance(gamma0, str):
        gamma0 = json.loads(gamma0)
    if gamma0 is not None:
        gamma0 = tuple(tuple(float(v) for v in entry) for entry in gamma0)
    return SynthConfig(
        height=int(r.get("height", base.height)),
        width=int(r.get("width", base.width)),
        num_steps=int(r.get("steps", base.num_steps)),
        num_classes=int(r.get("classes", base.num_classes)),
        looks=float(r.get("looks", base.looks)),
        seasonal_amplitude_db=float(r.get("seasonal-amplitude-db", base.seasonal_amplitude_db)),
        seasonal_period=float(r.get("seasonal-period", base.seasonal_period)),
        disturbance_delta_db=float(r.get("delta-db", base.disturbance_delta_db)),
        disturbance_fraction=float(r.get("fraction", base.disturbance_fraction)),
        class_gamma0=gamma0,
    )


def _preprocess_config(r: _Resolver) -> PreprocessConfig:
    base = PreprocessConfig()
    return PreprocessConfig(
        clip_epsilon=float(r.get("clip-epsilon", base.clip_epsilon)),
        tv_weight_db=float(r.get("tv-weight", base.tv_weight_db)),
        tv_iterations=int(r.get("tv-iterations", base.tv_iterations)),
        tv_step=float(r.get("tv-step", base.tv_step)),
    )


def _model_config(r: _Resolver) -> ModelConfig:
    kind = str(r.get("model", "transformer"))
    base = ModelConfig.gru_default() if kind == "gru" else ModelConfig.transformer_default()
    head_hidden = r.get("head-hidden", base.head_hidden)
    return ModelConfig(
        kind=kind,
        input_size=int(r.get("input-size", base.input_size)),
        patch_size=int(r.get("patch-size", base.patch_size)),
        d_model=int(r.get("d-model", base.d_model)),
        num_heads=int(r.get("heads", base.num_heads)),
        num_layers=int(r.get("layers", base.num_layers)),
        ff_dim=int(r.get("ff", base.ff_dim)),
        head_hidden=None if head_hidden is None else int(head_hidden),
        dropout=float(r.get("dropout", base.dropout)),
        max_t=int(r.get("max-t", base.max_t)),
        sigma_floor=float(r.get("sigma-floor", base.sigma_floor)),
    )


def _train_config(r: _Resolver, seed: int) -> TrainConfig:
    base = TrainConfig()
    steps = r.get("steps-per-epoch", base.steps_per_epoch)
    return TrainConfig(
        batch_size=int(r.get("batch-size", base.batch_size)),
        epochs=int(r.get("epochs", base.epochs)),
        lr_initial=float(r.get("lr", base.lr_initial)),
        lr_after_decay=float(r.get("lr-after-decay", base.lr_after_decay)),
        decay_epoch=int(r.get("decay-epoch", base.decay_epoch)),
        t_min=int(r.get("t-min", base.t_min)),
        t_max=int(r.get("t-max", base.t_max)),
        seed=seed,
        steps_per_epoch=None if steps is None else int(steps),
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_synth(args) -> int:
    t0 = time.time()
    r = _Resolver(args)
    cfg = _synth_config(r)
    seed = int(r.get("seed", 0))
    kind = r.get("kind", "scene")
    if kind == "corpus":
        count = int(r.get("count", 64))
        out_dir = r.get("out-dir", None)
        if out_dir is None:
            raise ValidationError("synth corpus needs --out-dir")
        manifest = generate_training_corpus(cfg, count, seed, out_dir)
        _write_manifest(out_dir, "synth", r, [], [manifest], seed, t0)
        print(f"wrote {count} sequences to {out_dir}")
        return 0
    if kind != "scene":
        raise ValidationError(f"synth kind must be scene or corpus, got {kind!r}")
    out = r.get("out", None)
    truth_out = r.get("mask", None)
    if out is None or truth_out is None:
        raise ValidationError("synth scene needs --out and --mask")
    stack, mask = generate_scene(cfg, seed)
    write_stack(stack, out)
    write_mask(mask, truth_out)
    _write_manifest(out, "synth", r, [], [out, truth_out], seed, t0)
    print(f"wrote scene {out} ({stack.num_steps} frames) and truth {truth_out}")
    return 0


def _cmd_despeckle(args) -> int:
    t0 = time.time()
    r = _Resolver(args)
    cfg = _preprocess_config(r)
    allow_raw = bool(r.get("allow-raw", False))
    manifest_in = r.get("manifest", None)
    if manifest_in is not None:
        out_dir = r.get("out-dir", None)
        if out_dir is None:
            raise ValidationError("despeckle --manifest needs --out-dir")
        os.makedirs(out_dir, exist_ok=True)
        with open(manifest_in, "r", encoding="utf-8") as fh:
            corpus = json.load(fh)
        base = os.path.dirname(manifest_in)
        outputs = []
        for entry in corpus["entries"]:
            stack = read_stack(os.path.join(base, entry["path"]), allow_raw=allow_raw)
            out_path = os.path.join(out_dir, entry["path"])
            write_stack(despeckle_stack(stack, cfg), out_path)
            outputs.append(out_path)
        out_manifest = os.path.join(out_dir, "corpus.json")
        with open(out_manifest, "w", encoding="utf-8") as fh:
            json.dump(corpus, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_manifest(out_dir, "despeckle", r, [manifest_in], outputs, None, t0)
        print(f"despeckled {len(outputs)} sequences into {out_dir}")
        return 0
    inp = r.get("input", None)
    out = r.get("out", None)
    if inp is None or out is None:
        raise ValidationError("despeckle needs --input and --out (or --manifest/--out-dir)")
    stack = read_stack(inp, allow_raw=allow_raw)
    write_stack(despeckle_stack(stack, cfg), out)
    _write_manifest(out, "despeckle", r, [inp], [out], None, t0)
    print(f"despeckled {inp} -> {out}")
    return 0


def _cmd_train(args) -> int:
    t0 = time.time()
    r = _Resolver(args)
    corpus_path = r.get("corpus", None)
    out_dir = r.get("out", None)
    if corpus_path is None or out_dir is None:
        raise ValidationError("train needs --corpus and --out")
    seed = int(r.get("seed", 0))
    model_cfg = _model_config(r)
    train_cfg = _train_config(r, seed)
    sequences = load_corpus(corpus_path)
    frames = logit(clip_unit(sequences, 1e-4)).astype(np.float32)
    model = Model(model_cfg, seed=seed)
    result = train(model, train_cfg, frames)
    save_checkpoint(result.model, out_dir)
    loss_path = os.path.join(out_dir, "loss.csv")
    with open(loss_path, "w", encoding="utf-8") as fh:
        fh.write(result.loss_csv())
    _write_manifest(out_dir, "train", r, [corpus_path],
                    [out_dir, loss_path], seed, t0,
                    extra={"diverged": result.diverged,
                           "completed_epochs": result.completed_epochs,
                           "parameters": result.model.parameter_count()})
    if result.diverged:
        print(f"training diverged after epoch {result.completed_epochs}; "
              f"checkpoint holds the last finished epoch", file=sys.stderr)
        return 1
    print(f"trained {model_cfg.kind} ({result.model.parameter_count()} params), "
          f"final nll {result.loss_rows[-1][1]:.6g}")
    return 0


def _cmd_estimate(args) -> int:
    t0 = time.time()
    r = _Resolver(args)
    ckpt = r.get("checkpoint", None)
    inp = r.get("input", None)
    out_mu = r.get("out-mu", None)
    out_sigma = r.get("out-sigma", None)
    if None in (ckpt, inp, out_mu, out_sigma):
        raise ValidationError("estimate needs --checkpoint, --input, --out-mu, --out-sigma")
    sweep = SweepConfig(
        stride=int(r.get("stride", 4)),
        batch_size=int(r.get("batch-size", 64)),
        threads=_threads(r),
    )
    drop_last = int(r.get("drop-last", 0))
    stack = read_stack(inp, allow_raw=bool(r.get("allow-raw", False)))
    frames = stack.values if drop_last == 0 else stack.values[:-drop_last]
    if frames.shape[0] < 2:
        raise ValidationError(f"only {frames.shape[0]} frames left after --drop-last")
    model = load_checkpoint(ckpt)
    est = sweep_estimate(model, logit(clip_unit(frames, 1e-4)), sweep)
    write_estimate(est, out_mu, out_sigma)
    _write_manifest(out_mu, "estimate", r, [ckpt, inp], [out_mu, out_sigma], None, t0)
    print(f"estimated {inp} -> {out_mu}, {out_sigma}")
    return 0


def _cmd_metric(args) -> int:
    t0 = time.time()
    r = _Resolver(args)
    kind = r.get("kind", None)
    stack_path = r.get("stack", None)
    out = r.get("out", None)
    if kind not in ("mahalanobis", "logratio"):
        raise ValidationError("metric --kind must be mahalanobis or logratio")
    if stack_path is None or out is None:
        raise ValidationError("metric needs --stack and --out")
    stack = read_stack(stack_path, allow_raw=bool(r.get("allow-raw", False)))
    frame = int(r.get("frame", -1))
    count = stack.num_steps
    frame = frame if frame >= 0 else count + frame
    if not 0 <= frame < count:
        raise ValidationError(f"frame {frame} outside stack of {count} frames")
    if kind == "mahalanobis":
        mu_path = r.get("mu", None)
        sigma_path = r.get("sigma", None)
        if mu_path is None or sigma_path is None:
            raise ValidationError("metric --kind mahalanobis needs --mu and --sigma")
        est = read_estimate(mu_path, sigma_path)
        post = logit(clip_unit(stack.values[frame], 1e-4))
        dmap = mahalanobis_map(est, post)
        inputs = [stack_path, mu_path, sigma_path]
    else:
        baseline = int(r.get("baseline-frames", frame))
        if baseline < 2:
            raise ValidationError(f"log ratio needs >= 2 baseline frames, got {baseline}")
        if baseline > count:
            raise ValidationError(f"baseline {baseline} exceeds stack of {count} frames")
        dmap = log_ratio_map(stack.values[:baseline], stack.values[frame])
        inputs = [stack_path]
    write_metric_map(dmap, out)
    _write_manifest(out, "metric", r, inputs, [out], None, t0)
    print(f"wrote {kind} map {out} (units {dmap.units})")
    return 0


def _cmd_delineate(args) -> int:
    t0 = time.time()
    r = _Resolver(args)
    metric_path = r.get("metric", None)
    out = r.get("out", None)
    tau = r.get("tau", None)
    if metric_path is None or out is None or tau is None:
        raise ValidationError("delineate needs --metric, --tau and --out")
    dmap = read_metric_map(metric_path)
    delineation = threshold_map(dmap, float(tau))
    write_delineation(delineation, out)
    _write_manifest(out, "delineate", r, [metric_path], [out], None, t0)
    frac = float(delineation.mask.mean())
    print(f"delineated {out}: {delineation.mask.sum()} pixels ({frac:.2%}) above {tau}")
    return 0


def _evaluate_stack(stack_values: np.ndarray, truth: np.ndarray, method: str,
                    checkpoint: str | None, sweep: SweepConfig,
                    max_points: int) -> tuple:
    """Two-image protocol on (S,C,H,W) values; returns (curve, f1 rows, set)."""
    count = stack_values.shape[0]
    if count < 4:
        raise ValidationError(f"evaluation needs >= 4 frames, got {count}")
    baseline = stack_values[:count - 2]
    heldout_pre = stack_values[count - 2]
    post = stack_values[count - 1]
    if method in ("transformer", "gru"):
        if checkpoint is None:
            raise ValidationError(f"method {method} needs --checkpoint")
        model = load_checkpoint(checkpoint)
        if model.cfg.kind != method:
            raise ValidationError(
                f"checkpoint holds a {model.cfg.kind}, but method is {method}"
            )
        est = sweep_estimate(model, logit(clip_unit(baseline, 1e-4)), sweep)
        pre_map = mahalanobis_map(est, logit(clip_unit(heldout_pre, 1e-4)))
        post_map = mahalanobis_map(est, logit(clip_unit(post, 1e-4)))
    elif method == "logratio":
        pre_map = log_ratio_map(baseline, heldout_pre)
        post_map = log_ratio_map(baseline, post)
    else:
        raise ValidationError(f"unknown method {method!r}")
    labeled = build_labeled_set(pre_map, post_map, truth)
    curve = pr_curve(labeled, max_points=max_points)
    f1_rows = f1_vs_threshold(labeled, default_tau_grid(labeled))
    return curve, f1_rows, labeled


def _cmd_eval(args) -> int:
    t0 = time.time()
    r = _Resolver(args)
    stack_path = r.get("stack", None)
    truth_path = r.get("truth", None)
    out_dir = r.get("out-dir", None)
    method = r.get("method", "transformer")
    if None in (stack_path, truth_path, out_dir):
        raise ValidationError("eval needs --stack, --truth and --out-dir")
    sweep = SweepConfig(
        stride=int(r.get("stride", 4)),
        batch_size=int(r.get("batch-size", 64)),
        threads=_threads(r),
    )
    max_points = int(r.get("max-points", 512))
    stack = read_stack(stack_path, allow_raw=bool(r.get("allow-raw", False)))
    truth = read_mask(truth_path)
    curve, f1_rows, _ = _evaluate_stack(
        stack.values, truth, method, r.get("checkpoint", None), sweep, max_points)
    os.makedirs(out_dir, exist_ok=True)
    summary = emit_report(out_dir, curve, f1_rows)
    outputs = [os.path.join(out_dir, name) for name in
               ("pr_curve.csv", "f1_vs_tau.csv", "pr_curve.svg", "f1_vs_tau.svg",
                "summary.json")]
    _write_manifest(out_dir, "eval", r, [stack_path, truth_path], outputs, None, t0,
                    extra={"method": method})
    print(f"{method}: pr_auc={summary['pr_auc']:.4f} best_f1={summary['best_f1']:.4f} "
          f"best_tau={summary['best_tau']:.4f}")
    return 0


def _cmd_ablate(args) -> int:
    t0 = time.time()
    r = _Resolver(args)
    out_dir = r.get("out-dir", None)
    if out_dir is None:
        raise ValidationError("ablate needs --out-dir")
    grid = r.get("grid", "all")
    seed = int(r.get("seed", 0))
    corpus_size = int(r.get("corpus-size", 64))
    epochs = int(r.get("epochs", 2))
    scene_size = int(r.get("scene-size", 64))
    batch_size = int(r.get("batch-size", 32))
    threads = _threads(r)
    grids = ("input-patch", "model-size", "learning-rate")
    chosen = grids if grid == "all" else (grid,)
    for g in chosen:
        if g not in grids:
            raise ValidationError(f"unknown grid {g!r}; choose from {grids} or all")

    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for g in chosen:
        for label, model_cfg, lr in _ablate_presets(g):
            row = _run_ablate_case(
                g, label, model_cfg, lr, seed, corpus_size, epochs,
                scene_size, batch_size, threads, out_dir)
            rows.append(row)
            print(f"{g} {label}: params={row[2]} pr_auc={row[3]:.4f}")
    csv_path = os.path.join(out_dir, "ablation_summary.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("grid,preset,parameters,pr_auc,best_f1\n")
        for g, label, params, auc, f1 in rows:
            fh.write(f"{g},{label},{params},{auc:.6g},{f1:.6g}\n")
    _write_manifest(out_dir, "ablate", r, [], [csv_path], seed, t0)
    print(f"wrote {csv_path}")
    return 0


def _ablate_presets(grid: str):
    if grid == "input-patch":
        for input_size, patch in ((16, 8), (32, 8), (32, 16)):
            yield f"input{input_size}_patch{patch}", \
                replace(preset_input_patch(input_size, patch), ff_dim=512,
                        num_layers=2), None
    elif grid == "model-size":
        for ff, layers in ((512, 2), (768, 4), (1024, 8)):
            yield f"ff{ff}_layers{layers}", preset_model_size(ff, layers), None
    else:
        for lr in (1e-4, 1e-5, 1e-6):
            yield f"lr{lr:g}", preset_model_size(512, 2), lr


def _run_ablate_case(grid, label, model_cfg, lr, seed, corpus_size, epochs,
                     scene_size, batch_size, threads, out_dir):
    case_dir = os.path.join(out_dir, f"{grid}_{label}")
    os.makedirs(case_dir, exist_ok=True)
    synth_cfg = SynthConfig(height=max(model_cfg.input_size, 16),
                            width=max(model_cfg.input_size, 16),
                            seasonal_amplitude_db=2.0)
    corpus_manifest = generate_training_corpus(
        synth_cfg, corpus_size, seed, os.path.join(case_dir, "corpus"))
    sequences = load_corpus(corpus_manifest)
    frames = logit(clip_unit(sequences, 1e-4)).astype(np.float32)
    tc = TrainConfig(batch_size=batch_size, epochs=epochs, seed=seed,
                     lr_initial=lr if lr is not None else 1e-3,
                     lr_after_decay=(lr if lr is not None else 1e-3) / 10.0,
                     decay_epoch=max(1, epochs))
    model = Model(model_cfg, seed=seed)
    result = train(model, tc, frames)
    scene_cfg = replace(synth_cfg, height=max(scene_size, model_cfg.input_size),
                        width=max(scene_size, model_cfg.input_size))
    stack, truth = generate_scene(scene_cfg, splitmix64_scene(seed))
    sweep = SweepConfig(stride=model_cfg.patch_size, batch_size=64, threads=threads)
    baseline = stack.values[:stack.num_steps - 2]
    est = sweep_estimate(result.model, logit(clip_unit(baseline, 1e-4)), sweep)
    pre_map = mahalanobis_map(est, logit(clip_unit(stack.values[-2], 1e-4)))
    post_map = mahalanobis_map(est, logit(clip_unit(stack.values[-1], 1e-4)))
    labeled = build_labeled_set(pre_map, post_map, truth)
    curve = pr_curve(labeled)
    return (grid, label, result.model.parameter_count(), curve.auc, curve.best_f1)


def splitmix64_scene(seed: int) -> int:
    from .synth import splitmix64

    return splitmix64(seed, 0xAB1A7E)


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return run_selftest()


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(sp) -> None:
    sp.add_argument("--config", help="JSON file with flag defaults")
    sp.add_argument("--seed", type=int)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sardist",
        description="Self-supervised disturbance mapping from dual-pol "
                    "backscatter time series.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.set_defaults(command=None)
    sub = parser.add_subparsers(dest="command")

    sp = sub.add_parser("synth", help="generate synthetic scenes or training corpora")
    _add_common(sp)
    sp.add_argument("--kind", choices=("scene", "corpus"))
    sp.add_argument("--out")
    sp.add_argument("--mask")
    sp.add_argument("--out-dir")
    sp.add_argument("--count", type=int)
    sp.add_argument("--height", type=int)
    sp.add_argument("--width", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--classes", type=int)
    sp.add_argument("--looks", type=float)
    sp.add_argument("--seasonal-amplitude-db", type=float)
    sp.add_argument("--seasonal-period", type=float)
    sp.add_argument("--delta-db", type=float)
    sp.add_argument("--fraction", type=float)
    sp.add_argument("--class-gamma0",
                    help="JSON list of per-class (vv, vh) mean backscatter")
    sp.set_defaults(func=_cmd_synth)

    sp = sub.add_parser("despeckle", help="TV-despeckle a stack or a whole corpus")
    _add_common(sp)
    sp.add_argument("--input")
    sp.add_argument("--out")
    sp.add_argument("--manifest")
    sp.add_argument("--out-dir")
    sp.add_argument("--clip-epsilon", type=float)
    sp.add_argument("--tv-weight", type=float)
    sp.add_argument("--tv-iterations", type=int)
    sp.add_argument("--tv-step", type=float)
    sp.add_argument("--allow-raw", action="store_const", const=True)
    sp.set_defaults(func=_cmd_despeckle)

    sp = sub.add_parser("train", help="train a forecasting model on a corpus")
    _add_common(sp)
    sp.add_argument("--corpus")
    sp.add_argument("--out")
    sp.add_argument("--model", choices=("transformer", "gru"))
    sp.add_argument("--input-size", type=int)
    sp.add_argument("--patch-size", type=int)
    sp.add_argument("--d-model", type=int)
    sp.add_argument("--heads", type=int)
    sp.add_argument("--layers", type=int)
    sp.add_argument("--ff", type=int)
    sp.add_argument("--head-hidden", type=int)
    sp.add_argument("--dropout", type=float)
    sp.add_argument("--max-t", type=int)
    sp.add_argument("--sigma-floor", type=float)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--lr-after-decay", type=float)
    sp.add_argument("--decay-epoch", type=int)
    sp.add_argument("--t-min", type=int)
    sp.add_argument("--t-max", type=int)
    sp.add_argument("--steps-per-epoch", type=int)
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("estimate", help="sliding-window forecast of a scene")
    _add_common(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--input")
    sp.add_argument("--out-mu")
    sp.add_argument("--out-sigma")
    sp.add_argument("--stride", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--threads", type=int)
    sp.add_argument("--drop-last", type=int)
    sp.add_argument("--allow-raw", action="store_const", const=True)
    sp.set_defaults(func=_cmd_estimate)

    sp = sub.add_parser("metric", help="compute a disturbance metric map")
    _add_common(sp)
    sp.add_argument("--kind", choices=("mahalanobis", "logratio"))
    sp.add_argument("--stack")
    sp.add_argument("--frame", type=int)
    sp.add_argument("--baseline-frames", type=int)
    sp.add_argument("--mu")
    sp.add_argument("--sigma")
    sp.add_argument("--out")
    sp.add_argument("--allow-raw", action="store_const", const=True)
    sp.set_defaults(func=_cmd_metric)

    sp = sub.add_parser("delineate", help="threshold a metric map to a binary mask")
    _add_common(sp)
    sp.add_argument("--metric")
    sp.add_argument("--tau", type=float)
    sp.add_argument("--out")
    sp.set_defaults(func=_cmd_delineate)

    sp = sub.add_parser("eval", help="two-image evaluation against a truth mask")
    _add_common(sp)
    sp.add_argument("--stack")
    sp.add_argument("--truth")
    sp.add_argument("--method", choices=("transformer", "gru", "logratio"))
    sp.add_argument("--checkpoint")
    sp.add_argument("--out-dir")
    sp.add_argument("--stride", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--threads", type=int)
    sp.add_argument("--max-points", type=int)
    sp.add_argument("--allow-raw", action="store_const", const=True)
    sp.set_defaults(func=_cmd_eval)

    sp = sub.add_parser("ablate", help="run preset ablation grids at desk scale")
    _add_common(sp)
    sp.add_argument("--grid", choices=("input-patch", "model-size", "learning-rate", "all"))
    sp.add_argument("--out-dir")
    sp.add_argument("--corpus-size", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--scene-size", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--threads", type=int)
    sp.set_defaults(func=_cmd_ablate)

    sp = sub.add_parser("selftest", help="run the built-in invariant checks")
    sp.set_defaults(func=_cmd_selftest)

    return parser


if __name__ == "__main__":
    sys.exit(main())
