"""Command-line interface.

Subcommands: ``gen`` (synthetic dataset), ``train``, ``eval``, ``sweep``
(one-axis ablation), and ``fair`` (standalone graph filtering).  Every
flag has a JSON config-file equivalent (key = flag name with
underscores); explicit flags override file values, and the resolved
union is recorded in a manifest next to the artifacts.  Outputs carry no
timestamps, so identical invocations produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, backend
from .data import (
    CameraModel,
    Dataset,
    load_poses,
    normalize,
    save_poses,
    synth_generate,
)
from .fairing import FairingConfig, fair_direct, fair_jacobi, fair_spectral
from .graph import build_operators, default_human36m_skeleton, load_skeleton
from .metrics import evaluate_poses
from .model import (
    NetworkConfig,
    load_checkpoint,
    network_forward,
    params_count,
    params_init,
    save_checkpoint,
)
from .plots import write_line_plot
from .train import TrainConfig, linear_baseline_mpjpe, train
from .data import denormalize

GEN_DEFAULTS = {
    "n": 2000,
    "seed": 0,
    "noise": 0.0,
    "skeleton": "h36m",
    "focal": 1150.0,
    "px": 500.0,
    "py": 500.0,
    "distance": 2500.0,
    "angle_bound": 60.0,
}

MODEL_DEFAULTS = {
    "layers": 10,
    "width": 96,
    "hops": 3,
    "alpha": 0.2,
    "beta": 0.5,
    "layer_kind": "hoifnet",
    "batchnorm": True,
}

TRAIN_DEFAULTS = {
    "epochs": 50,
    "batch_size": 64,
    "lr": 1e-3,
    "decay_factor": 0.96,
    "decay_every": 100_000,
    "seed": 0,
    "checkpoint_every": 0,
    "eval_fraction": 0.2,
}

EVAL_DEFAULTS = {
    "protocol": "all",
    "pa_scale": True,
    "skeleton": "h36m",
}

FAIR_DEFAULTS = {
    "graph": "h36m",
    "s": None,
    "alpha": None,
    "method": "all",
    "tol": 1e-10,
    "max_iter": 10_000,
}

SWEEP_AXES = ("alpha", "beta", "depth", "hops", "layer_kind")


def _load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return data


def _resolve(defaults: dict, args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    resolved = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        file_values = _load_config_file(config_path)
        unknown = sorted(set(file_values) - set(defaults))
        if unknown:
            raise ValueError(f"config file {config_path} has unknown keys: {unknown}")
        resolved.update(file_values)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _write_manifest(path: Path, command: str, resolved: dict, artifacts: list[str]) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "backend": backend.ACTIVE_BACKEND,
        "config": resolved,
        "artifacts": artifacts,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _skeleton_from(value: str):
    if value == "h36m":
        return default_human36m_skeleton()
    return load_skeleton(value)


def _model_config(resolved: dict) -> NetworkConfig:
    return NetworkConfig(
        num_layers=int(resolved["layers"]),
        hidden_width=int(resolved["width"]),
        hops=int(resolved["hops"]),
        alpha=float(resolved["alpha"]),
        beta=float(resolved["beta"]),
        use_batchnorm=bool(resolved["batchnorm"]),
        layer_kind=str(resolved["layer_kind"]),
    )


def _train_config(resolved: dict) -> TrainConfig:
    return TrainConfig(
        epochs=int(resolved["epochs"]),
        batch_size=int(resolved["batch_size"]),
        lr=float(resolved["lr"]),
        decay_factor=float(resolved["decay_factor"]),
        decay_every_steps=int(resolved["decay_every"]),
        seed=int(resolved["seed"]),
        checkpoint_every=int(resolved["checkpoint_every"]),
        eval_fraction=float(resolved["eval_fraction"]),
    )


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    resolved = _resolve(GEN_DEFAULTS, args)
    if int(resolved["n"]) < 1:
        raise ValueError(f"--n must be >= 1, got {resolved['n']}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    skeleton = _skeleton_from(resolved["skeleton"])
    camera = CameraModel(
        focal=float(resolved["focal"]),
        principal_point=(float(resolved["px"]), float(resolved["py"])),
        subject_distance=float(resolved["distance"]),
    )
    dataset = synth_generate(
        skeleton,
        camera,
        n=int(resolved["n"]),
        noise_std_2d=float(resolved["noise"]),
        seed=int(resolved["seed"]),
        angle_bound_deg=float(resolved["angle_bound"]),
    )
    csv_path = out_dir / "poses.csv"
    save_poses(dataset, csv_path)
    summary = {
        "samples": len(dataset),
        "joints": skeleton.num_joints,
        "x2d_mean": dataset.x2d.mean(axis=0).tolist(),
        "x2d_std": dataset.x2d.std(axis=0).tolist(),
        "y3d_mean": dataset.y3d.mean(axis=0).tolist(),
        "y3d_std": dataset.y3d.std(axis=0).tolist(),
    }
    stats_path = out_dir / "gen_stats.json"
    with open(stats_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir / "gen_manifest.json", "gen", resolved, [csv_path.name, stats_path.name])
    print(f"wrote {len(dataset)} samples to {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    resolved = _resolve({**MODEL_DEFAULTS, **TRAIN_DEFAULTS, "skeleton": "h36m"}, args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    skeleton = _skeleton_from(resolved["skeleton"])
    dataset = load_poses(args.data, skeleton)
    model_cfg = _model_config(resolved)
    train_cfg = _train_config(resolved)
    n_params = params_count(params_init(model_cfg, train_cfg.seed))
    print(
        f"training {model_cfg.layer_kind}: {model_cfg.num_layers} layers, "
        f"width {model_cfg.hidden_width}, hops {model_cfg.effective_hops}, "
        f"{n_params} trainable parameters"
    )

    def checkpoint_cb(epoch, params, state):
        prefix = out_dir / f"checkpoint_epoch{epoch:04d}"
        save_checkpoint(prefix, model_cfg, params, seed=train_cfg.seed, step=state.step)
        print(f"checkpoint written: {prefix}.json")

    def log_cb(row):
        print(
            f"epoch {row.epoch}/{train_cfg.epochs} "
            f"train_loss={row.train_loss:.6f} eval_mpjpe={row.eval_mpjpe:.3f} "
            f"eval_pa_mpjpe={row.eval_pa_mpjpe:.3f} lr={row.lr:.6g}"
        )

    result = train(model_cfg, train_cfg, dataset, checkpoint_cb=checkpoint_cb, log_cb=log_cb)

    history_path = out_dir / "history.csv"
    result.history.write_csv(history_path)
    checkpoint_meta = {
        "initial_mpjpe": result.history.initial_mpjpe,
        "initial_pa_mpjpe": result.history.initial_pa_mpjpe,
        "epochs": result.history.rows_as_dicts(),
    }
    extra = {"normalization": result.stats.to_dict(), "best_epoch": result.best_epoch}
    save_checkpoint(
        out_dir / "checkpoint_final",
        model_cfg,
        result.params,
        seed=train_cfg.seed,
        step=result.state.step,
        history=checkpoint_meta,
        extra=extra,
    )
    save_checkpoint(
        out_dir / "checkpoint_best",
        model_cfg,
        result.best_params,
        seed=train_cfg.seed,
        step=result.state.step,
        history=checkpoint_meta,
        extra=extra,
    )
    epochs = [row.epoch for row in result.history.rows]
    svg_path = out_dir / "loss_curve.svg"
    write_line_plot(
        svg_path,
        [("train loss", epochs, [row.train_loss for row in result.history.rows])],
        y2_series=[("eval MPJPE (mm)", epochs, [row.eval_mpjpe for row in result.history.rows])],
        title="training progress",
        xlabel="epoch",
        ylabel="train loss",
        y2label="eval MPJPE (mm)",
    )
    artifacts = [
        history_path.name,
        "checkpoint_final.json",
        "checkpoint_final.bin",
        "checkpoint_best.json",
        "checkpoint_best.bin",
        svg_path.name,
    ]
    _write_manifest(out_dir / "run_manifest.json", "train", resolved, artifacts)
    print(
        f"done: best epoch {result.best_epoch} "
        f"(eval_mpjpe={result.state.best_eval:.3f} mm); artifacts in {out_dir}"
    )
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    resolved = _resolve(EVAL_DEFAULTS, args)
    model_cfg, params, manifest = load_checkpoint(args.checkpoint)
    extra = manifest.get("extra") or {}
    if "normalization" not in extra:
        raise ValueError(
            f"checkpoint {args.checkpoint} carries no normalization statistics; "
            "was it written by `fairlift train`?"
        )
    from .data import NormStats

    stats = NormStats.from_dict(extra["normalization"])
    skeleton = _skeleton_from(resolved["skeleton"])
    dataset = load_poses(args.data, skeleton)
    if stats.mean2d.shape[0] != skeleton.num_joints:
        raise ValueError(
            f"checkpoint was trained on {stats.mean2d.shape[0]} joints but the "
            f"dataset has {skeleton.num_joints}"
        )
    out_dir = Path(args.out) if args.out else Path(args.checkpoint).parent
    out_dir.mkdir(parents=True, exist_ok=True)

    root = skeleton.root_joint
    norm_ds, _ = normalize(dataset, stats)
    ops = build_operators(skeleton, model_cfg.effective_hops)
    pred_norm, _ = network_forward(model_cfg, ops, params, norm_ds.x2d, mode="eval")
    pred_mm = denormalize(pred_norm, stats)
    gt_mm = dataset.y3d - dataset.y3d[:, root : root + 1, :]

    protocol = str(resolved["protocol"])
    with_pa = protocol in ("2", "all")
    report = evaluate_poses(
        pred_mm, gt_mm, root=root, with_pa=with_pa, pa_scale=bool(resolved["pa_scale"])
    )
    report_path = out_dir / "eval_report.json"
    report.write_json(report_path)
    if args.append_csv:
        report.append_csv_row(args.append_csv, label=str(args.checkpoint))
    print(f"mpjpe_mm={report.mpjpe_mm:.4f}")
    if report.pa_mpjpe_mm is not None:
        print(f"pa_mpjpe_mm={report.pa_mpjpe_mm:.4f}")
    print(f"pck150={report.pck150:.4f}")
    print(f"auc={report.auc:.4f}")
    _write_manifest(out_dir / "eval_manifest.json", "eval", resolved, [report_path.name])
    return 0


# ---------------------------------------------------------------------------
# sweep


def _sweep_values(axis: str, raw: str):
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ValueError("--values must list at least one value")
    if axis in ("alpha", "beta"):
        return [float(p) for p in parts]
    if axis in ("depth", "hops"):
        return [int(p) for p in parts]
    return parts  # layer_kind


def cmd_sweep(args) -> int:
    if args.axis not in SWEEP_AXES:
        raise ValueError(f"--axis must be one of {SWEEP_AXES}, got {args.axis!r}")
    values = _sweep_values(args.axis, args.values)
    resolved = _resolve({**MODEL_DEFAULTS, **TRAIN_DEFAULTS, "skeleton": "h36m"}, args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    skeleton = _skeleton_from(resolved["skeleton"])
    dataset = load_poses(args.data, skeleton)

    rows = []
    for value in values:
        variant = dict(resolved)
        if args.axis == "depth":
            variant["layers"] = value
        else:
            variant[args.axis] = value
        model_cfg = _model_config(variant)
        train_cfg = _train_config(variant)
        result = train(model_cfg, train_cfg, dataset)
        final = result.history.rows[-1]
        rows.append((value, final.eval_mpjpe, final.eval_pa_mpjpe))
        print(
            f"{args.axis}={value}: eval_mpjpe={final.eval_mpjpe:.3f} "
            f"eval_pa_mpjpe={final.eval_pa_mpjpe:.3f}"
        )

    csv_path = out_dir / "sweep.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{args.axis},mpjpe_mm,pa_mpjpe_mm\n")
        for value, err, pa_err in rows:
            fh.write(f"{value},{err!r},{pa_err!r}\n")

    categorical = args.axis == "layer_kind"
    xs = list(range(len(values))) if categorical else [float(v) for v in values]
    svg_path = out_dir / "sweep.svg"
    write_line_plot(
        svg_path,
        [
            ("MPJPE (mm)", xs, [r[1] for r in rows]),
            ("PA-MPJPE (mm)", xs, [r[2] for r in rows]),
        ],
        title=f"error vs {args.axis}",
        xlabel=args.axis,
        ylabel="error (mm)",
        x_tick_labels=[str(v) for v in values] if categorical else None,
    )
    resolved_with_axis = {**resolved, "axis": args.axis, "values": values}
    _write_manifest(out_dir / "sweep_manifest.json", "sweep", resolved_with_axis,
                    [csv_path.name, svg_path.name])
    print(f"sweep complete: {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# fair


def cmd_fair(args) -> int:
    resolved = _resolve(FAIR_DEFAULTS, args)
    if resolved["s"] is None and resolved["alpha"] is None:
        raise ValueError("provide --s or --alpha")
    cfg = FairingConfig(
        s=resolved["s"],
        alpha=resolved["alpha"],
        tol=float(resolved["tol"]),
        max_iter=int(resolved["max_iter"]),
    )
    skeleton = _skeleton_from(resolved["graph"])
    signal = np.loadtxt(args.signal, delimiter=",", ndmin=2)
    ops = build_operators(skeleton, max_hop=1)
    method = str(resolved["method"])
    if method not in ("spectral", "direct", "jacobi", "all"):
        raise ValueError(f"--method must be spectral/direct/jacobi/all, got {method!r}")

    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    outputs = {}
    report = {
        "s": cfg.s,
        "alpha": cfg.alpha,
        "tol": cfg.tol,
        "methods": [],
    }
    methods = ("spectral", "direct", "jacobi") if method == "all" else (method,)
    for name in methods:
        if name == "spectral":
            result = fair_spectral(ops, cfg.s, signal)
        elif name == "direct":
            result = fair_direct(ops, cfg.s, signal)
        else:
            result, iterations, residual = fair_jacobi(ops, cfg, signal)
            report["jacobi_iterations"] = iterations
            report["jacobi_final_residual"] = residual
        outputs[name] = result
        out_path = Path(f"{prefix}_{name}.csv")
        np.savetxt(out_path, result, delimiter=",", fmt="%.17g")
        report["methods"].append(name)
    artifacts = [f"{prefix.name}_{name}.csv" for name in methods]
    if len(outputs) > 1:
        names = list(outputs)
        deviation = max(
            float(np.abs(outputs[a] - outputs[b]).max())
            for i, a in enumerate(names)
            for b in names[i + 1 :]
        )
        report["max_pairwise_deviation"] = deviation
        print(f"max pairwise deviation: {deviation:.3e}")
    report_path = Path(f"{prefix}_report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    artifacts.append(report_path.name)
    _write_manifest(Path(f"{prefix}_manifest.json"), "fair", resolved, artifacts)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairlift",
        description="2D-to-3D pose lifting with implicit-fairing graph convolutions",
    )
    parser.add_argument("--version", action="version", version=f"fairlift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic pose dataset")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--n", type=int, help="number of samples")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--noise", type=float, help="2D noise std (px)")
    gen.add_argument("--skeleton", help="skeleton JSON path or 'h36m'")
    gen.add_argument("--focal", type=float, help="camera focal length (px)")
    gen.add_argument("--px", type=float, help="principal point x (px)")
    gen.add_argument("--py", type=float, help="principal point y (px)")
    gen.add_argument("--distance", type=float, help="subject distance (mm)")
    gen.add_argument("--angle-bound", dest="angle_bound", type=float,
                     help="per-joint rotation bound (deg)")
    gen.add_argument("--config", help="JSON config file")
    gen.set_defaults(func=cmd_gen)

    tr = sub.add_parser("train", help="train a lifting network")
    tr.add_argument("--data", required=True, help="pose CSV")
    tr.add_argument("--out", required=True, help="output directory")
    tr.add_argument("--skeleton", help="skeleton JSON path or 'h36m'")
    tr.add_argument("--layers", type=int)
    tr.add_argument("--width", type=int)
    tr.add_argument("--hops", type=int)
    tr.add_argument("--alpha", type=float)
    tr.add_argument("--beta", type=float)
    tr.add_argument("--layer-kind", dest="layer_kind", choices=["gcn_baseline", "ifnet", "hoifnet"])
    tr.add_argument("--no-batchnorm", dest="batchnorm", action="store_const", const=False)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--batch-size", dest="batch_size", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--decay-factor", dest="decay_factor", type=float)
    tr.add_argument("--decay-every", dest="decay_every", type=int)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    tr.add_argument("--eval-fraction", dest="eval_fraction", type=float)
    tr.add_argument("--config", help="JSON config file")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ev.add_argument("--checkpoint", required=True, help="checkpoint prefix (no extension)")
    ev.add_argument("--data", required=True, help="pose CSV")
    ev.add_argument("--out", help="output directory (default: checkpoint directory)")
    ev.add_argument("--skeleton", help="skeleton JSON path or 'h36m'")
    ev.add_argument("--protocol", choices=["1", "2", "all"])
    ev.add_argument("--pa-no-scale", dest="pa_scale", action="store_const", const=False,
                    help="rigid (no-scale) Procrustes alignment")
    ev.add_argument("--append-csv", dest="append_csv", help="append one aggregate row here")
    ev.add_argument("--config", help="JSON config file")
    ev.set_defaults(func=cmd_eval)

    sw = sub.add_parser("sweep", help="train/evaluate across one hyperparameter axis")
    sw.add_argument("--data", required=True)
    sw.add_argument("--out", required=True)
    sw.add_argument("--axis", required=True, help=f"one of {SWEEP_AXES}")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--skeleton", help="skeleton JSON path or 'h36m'")
    sw.add_argument("--layers", type=int)
    sw.add_argument("--width", type=int)
    sw.add_argument("--hops", type=int)
    sw.add_argument("--alpha", type=float)
    sw.add_argument("--beta", type=float)
    sw.add_argument("--layer-kind", dest="layer_kind", choices=["gcn_baseline", "ifnet", "hoifnet"])
    sw.add_argument("--no-batchnorm", dest="batchnorm", action="store_const", const=False)
    sw.add_argument("--epochs", type=int)
    sw.add_argument("--batch-size", dest="batch_size", type=int)
    sw.add_argument("--lr", type=float)
    sw.add_argument("--decay-factor", dest="decay_factor", type=float)
    sw.add_argument("--decay-every", dest="decay_every", type=int)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    sw.add_argument("--eval-fraction", dest="eval_fraction", type=float)
    sw.add_argument("--config", help="JSON config file")
    sw.set_defaults(func=cmd_sweep)

    fa = sub.add_parser("fair", help="filter a graph signal three ways")
    fa.add_argument("--signal", required=True, help="CSV signal, one row per node")
    fa.add_argument("--out", required=True, help="output prefix")
    fa.add_argument("--graph", help="skeleton JSON path or 'h36m'")
    fa.add_argument("--s", type=float, help="smoothing strength s >= 0")
    fa.add_argument("--alpha", type=float, help="mixing weight alpha = 1/(1+s)")
    fa.add_argument("--method", choices=["spectral", "direct", "jacobi", "all"])
    fa.add_argument("--tol", type=float)
    fa.add_argument("--max-iter", dest="max_iter", type=int)
    fa.add_argument("--config", help="JSON config file")
    fa.set_defaults(func=cmd_fair)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
