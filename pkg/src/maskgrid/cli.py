"""Command-line pipeline runner.

Subcommands cover the full flow: scene simulation, oracle or model
encoding, the conditioning sweep, threshold calibration, estimator
training, decoding, MVDR separation, and scoring. Every report carries the
config hash, seed, and package version; identical configs and seeds yield
identical output bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import beamform, coding, conditioning, container, decode, estimator
from . import metrics, scene, stft
from ._version import __version__
from .config import RunConfig, load_config
from .errors import (CollisionError, ConfigError, DegenerateInputError,
                     FormatError, MaskGridError, NumericError)
from .signal import TimeSignal, load_wav, save_wav


def _meta(cfg: RunConfig) -> dict:
    return {"version": __version__, "config_hash": cfg.hash, "seed": cfg.seed}


def _write_csv(path, rows, columns, meta: dict) -> None:
    with open(path, "w", newline="") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}: {value}\n")
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row[c] for c in columns})


def _write_json(path, payload: dict, meta: dict) -> None:
    with open(path, "w") as fh:
        json.dump({"meta": meta, **payload}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_table(out_dir: Path, name: str, rows, columns, meta, fmt: str):
    if fmt == "json":
        path = out_dir / f"{name}.json"
        _write_json(path, {"rows": rows}, meta)
    else:
        path = out_dir / f"{name}.csv"
        _write_csv(path, rows, columns, meta)
    return path


def _draw_doas(rng, count: int, min_gap_deg: float, span_deg: float) -> np.ndarray:
    for _ in range(1000):
        angles = rng.uniform(0.0, span_deg, count)
        gaps = [coding.wrapped_distance(angles[i], angles[j], span_deg)
                for i in range(count) for j in range(i + 1, count)]
        if not gaps or min(gaps) >= min_gap_deg:
            return np.sort(angles)
    raise ConfigError(f"cannot place {count} sources {min_gap_deg} deg apart "
                      f"in a {span_deg} deg span")


def _cycle(values, i):
    return values[i % len(values)]


def _build_scene(cfg: RunConfig, doas=None, seed: int | None = None):
    """Scene spec and render from the config; doas/seed may be overridden."""
    seed = cfg.seed if seed is None else seed
    doas = cfg.doas_deg if doas is None else tuple(doas)
    sources = []
    for i, doa in enumerate(doas):
        signal = scene.synth_source(
            _cycle(cfg.source_kinds, i), cfg.duration_s,
            pitch_hz=_cycle(cfg.pitches_hz, i), seed=seed + i,
            sample_rate_hz=cfg.sample_rate_hz)
        sources.append(scene.SourceSpec(doa, _cycle(cfg.distances_m, i), signal))
    spec = scene.SceneSpec(tuple(sources), room=cfg.room_spec(),
                           span_deg=cfg.span_deg, min_gap_deg=cfg.min_gap_deg,
                           seed=seed)
    geometry = cfg.geometry()
    if spec.room is None:
        rendered = scene.simulate_anechoic(spec, geometry)
    else:
        rendered = scene.simulate_shoebox(spec, geometry)
    return spec, rendered


def _varied_scene(cfg: RunConfig, index: int):
    """Scene with rotated DoAs for validation/training batches."""
    seed = cfg.seed + 1000 * (index + 1)
    rng = np.random.default_rng(seed)
    doas = _draw_doas(rng, len(cfg.doas_deg), cfg.min_gap_deg, cfg.span_deg)
    return _build_scene(cfg, doas=doas, seed=seed)


def _oracle_parts(cfg: RunConfig, rendered):
    """STFTs, thresholded masks, and the configured oracle coding."""
    stft_cfg = cfg.stft_config()
    mixture_spec = stft.analyze(rendered.mixture, stft_cfg)
    image_specs = [stft.analyze(img.channel(cfg.geometry().reference_mic), stft_cfg)
                   for img in rendered.source_images]
    masks = coding.compute_irm(image_specs, cfg.eps_m_db)
    grid = cfg.grid()
    encoders = {
        "mwsbc": lambda: coding.encode_mwsbc(masks, rendered.truth, grid),
        "mwslc": lambda: coding.encode_mwslc(masks, rendered.truth, grid,
                                             cfg.sigma_deg),
        "mwslc_sum": lambda: coding.encode_mwslc_sum(masks, rendered.truth,
                                                     grid, cfg.sigma_deg),
    }
    return mixture_spec, image_specs, masks, encoders[cfg.coding_kind]()


def _estimated_coding(cfg: RunConfig, mixture_spec, oracle):
    """Oracle, corrupted-oracle, or trained-model coding per config."""
    mode = cfg.estimate_mode
    if mode == "oracle":
        return oracle
    if mode == "corrupt":
        return estimator.corrupt_oracle(oracle, cfg.noise_std,
                                        cfg.blur_cells, cfg.seed)
    if not cfg.params_path:
        raise ConfigError("estimate.params_path is required for mode=model")
    params = container.load_params(cfg.params_path)
    return estimator.forward(params, estimator.features(mixture_spec), cfg.grid())


def _decode_coding(cfg: RunConfig, tensor):
    fl = decode.freq_average(tensor)
    detections = decode.peak_search(fl, cfg.eps_theta, cfg.delta_theta_deg)
    estimates = decode.cluster_doas(detections, cfg.sigma_deg,
                                    tensor.grid.span_deg, cfg.min_support_frac)
    sampled = decode.sample_masks(tensor, estimates)
    return estimates, sampled


def _save_scene(cfg: RunConfig, rendered, out_dir: Path) -> None:
    save_wav(rendered.mixture, out_dir / "mixture.wav")
    for i, img in enumerate(rendered.source_images):
        save_wav(img, out_dir / f"src{i + 1:02d}_image.wav")
        save_wav(rendered.dry_sources[i], out_dir / f"src{i + 1:02d}_dry.wav")
    _write_json(out_dir / "truth.json", {
        "doas_deg": [float(a) for a in rendered.truth.angles_deg],
        "span_deg": rendered.truth.span_deg,
        "sample_rate_hz": rendered.mixture.sample_rate_hz,
        "channels": rendered.mixture.channels,
    }, _meta(cfg))


def _load_truth(out_dir: Path) -> coding.DoaSet:
    with open(out_dir / "truth.json") as fh:
        data = json.load(fh)
    return coding.DoaSet(np.array(data["doas_deg"]), data["span_deg"])


def _doas_payload(estimates) -> dict:
    return {"clusters": [{"center_deg": float(c.center_deg),
                          "support": int(c.support)}
                         for c in estimates.clusters],
            "span_deg": estimates.span_deg}


def _load_doas(out_dir: Path) -> decode.DoaEstimates:
    with open(out_dir / "doas.json") as fh:
        data = json.load(fh)
    clusters = tuple(
        decode.DoaCluster(c["center_deg"], c["support"],
                          np.array([c["center_deg"]]))
        for c in data["clusters"])
    return decode.DoaEstimates(clusters, data["span_deg"])


def cmd_simulate(cfg: RunConfig, args) -> int:
    _, rendered = _build_scene(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _save_scene(cfg, rendered, out_dir)
    print(f"scene with {rendered.truth.count} sources -> {out_dir}")
    return 0


def cmd_encode(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out)
    truth = _load_truth(out_dir)
    stft_cfg = cfg.stft_config()
    ref = cfg.geometry().reference_mic
    image_specs = []
    for i in range(truth.count):
        image = load_wav(out_dir / f"src{i + 1:02d}_image.wav")
        image_specs.append(stft.analyze(image.channel(ref), stft_cfg))
    masks = coding.compute_irm(image_specs, cfg.eps_m_db)
    grid = cfg.grid()
    kind = cfg.coding_kind
    if kind == "mwsbc":
        tensor = coding.encode_mwsbc(masks, truth, grid)
    elif kind == "mwslc":
        tensor = coding.encode_mwslc(masks, truth, grid, cfg.sigma_deg)
    else:
        tensor = coding.encode_mwslc_sum(masks, truth, grid, cfg.sigma_deg)
    container.save_masks(out_dir / "masks.bin", masks, truth.span_deg)
    container.save_coding(out_dir / "coding.bin", tensor)
    _write_json(out_dir / "encode.json", {
        "kind": kind, "theta_count": grid.theta_count,
        "span_deg": grid.span_deg, "sigma_deg": cfg.sigma_deg,
        "eps_m_db": cfg.eps_m_db,
    }, _meta(cfg))
    print(f"{kind} coding ({tensor.frames} frames, {tensor.bins} bins, "
          f"{grid.theta_count} cells) -> {out_dir}")
    return 0


def cmd_conditioning(cfg: RunConfig, args) -> int:
    _, rendered = _build_scene(cfg)
    mixture_spec, image_specs, masks, _ = _oracle_parts(cfg, rendered)
    report = conditioning.theta_sweep(
        masks, rendered.truth, cfg.sigma_deg, cfg.span_deg,
        cfg.conditioning_theta_counts)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = report.as_table()
    path = _write_table(out_dir, "conditioning", rows,
                        conditioning.SWEEP_COLUMNS, _meta(cfg), args.format)
    print(f"{len(rows)} sweep rows -> {path}")
    return 0


def cmd_calibrate(cfg: RunConfig, args) -> int:
    scenes = []
    for i in range(cfg.calibration_scene_count):
        _, rendered = _varied_scene(cfg, i)
        _, _, masks, tensor = _oracle_parts(cfg, rendered)
        scenes.append((tensor, rendered.truth))
    result = decode.calibrate_threshold(
        scenes, cfg.eps_theta_candidates, cfg.delta_theta_deg,
        cfg.sigma_deg, cfg.tolerance_deg, cfg.min_support_frac)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [{"eps_theta": r.eps_theta, "precision": r.precision,
             "recall": r.recall, "f1": r.f1} for r in result.rows]
    _write_table(out_dir, "calibration", rows,
                 ("eps_theta", "precision", "recall", "f1"),
                 _meta(cfg), args.format)
    _write_json(out_dir / "calibration_best.json", {
        "best_eps_theta": result.best_eps_theta,
        "best_f1": result.best_f1,
    }, _meta(cfg))
    print(f"best eps_theta {result.best_eps_theta:g} (F1 {result.best_f1:.3f}) "
          f"over {len(rows)} candidates -> {out_dir}")
    return 0


def _target_for(cfg: RunConfig, masks, truth, kind: str):
    grid = cfg.grid()
    if kind == "mwsbc":
        return coding.encode_mwsbc(masks, truth, grid)
    return coding.encode_mwslc(masks, truth, grid, cfg.sigma_deg)


def cmd_train(cfg: RunConfig, args) -> int:
    train_cfg = cfg.train_config()
    pairs = []
    total = cfg.train_scene_count + cfg.val_scene_count
    for i in range(total):
        _, rendered = _varied_scene(cfg, i)
        mixture_spec, _, masks, _ = _oracle_parts(cfg, rendered)
        target = _target_for(cfg, masks, rendered.truth, train_cfg.target_kind)
        pairs.append((estimator.features(mixture_spec), target))
    split = cfg.train_scene_count
    params, history = estimator.train(pairs[:split], pairs[split:], train_cfg,
                                      hidden_dim=cfg.hidden_dim)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    container.save_params(out_dir / "params.bin", params)
    _write_csv(out_dir / "history.csv", history.as_table(),
               estimator.TrainHistory.HISTORY_COLUMNS, _meta(cfg))
    print(f"{len(history.epochs)} epochs (best {history.best_epoch}, "
          f"early stop {history.stopped_early}) -> {out_dir}")
    return 0


def cmd_decode(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out)
    tensor = container.load_coding(out_dir / "coding.bin")
    estimates, sampled = _decode_coding(cfg, tensor)
    _write_json(out_dir / "doas.json", _doas_payload(estimates), _meta(cfg))
    container.save_masks(out_dir / "sampled_masks.bin", sampled,
                         estimates.span_deg)
    angles = ", ".join(f"{c.center_deg:.1f}" for c in estimates.clusters)
    print(f"{estimates.count} speakers at [{angles}] deg -> {out_dir}")
    return 0


def cmd_beamform(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out)
    mixture = load_wav(out_dir / "mixture.wav")
    estimates = _load_doas(out_dir)
    masks = container.load_masks(out_dir / "sampled_masks.bin")
    mixture_spec = stft.analyze(mixture, cfg.stft_config())
    separated = beamform.separate(mixture_spec, masks, estimates.centers_deg,
                                  cfg.geometry(), cfg.loading_eps)
    for i, sep in enumerate(separated):
        save_wav(stft.synthesize(sep), out_dir / f"sep{i + 1:02d}.wav")
    print(f"{len(separated)} separated channels -> {out_dir}")
    return 0


def _trim_to(signals, length: int):
    return [TimeSignal(s.samples[:, :length], s.sample_rate_hz) for s in signals]


def cmd_eval(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out)
    truth = _load_truth(out_dir)
    estimates = _load_doas(out_dir)
    ref = cfg.geometry().reference_mic
    references = [load_wav(out_dir / f"src{i + 1:02d}_image.wav").channel(ref)
                  for i in range(truth.count)]
    separated = sorted(out_dir.glob("sep[0-9][0-9].wav"))
    separated = [load_wav(p).channel(0) for p in separated]
    mixture_ref = load_wav(out_dir / "mixture.wav").channel(ref)
    length = min(s.length for s in separated + references + [mixture_ref])
    report = metrics.evaluate_scene(
        out_dir.name, estimates, truth, _trim_to(separated, length),
        _trim_to([mixture_ref], length)[0], _trim_to(references, length),
        cfg.tolerance_deg)
    path = _write_table(out_dir, "report", [report.as_row()],
                        metrics.EvalReport.COLUMNS, _meta(cfg), args.format)
    print(f"MAE {report.doa_mae_deg:.2f} deg, F1 {report.f1:.2f}, "
          f"delta SI-SDR {report.delta_si_sdr_db:.2f} dB -> {path}")
    return 0


def cmd_pipeline(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _, rendered = _build_scene(cfg)
    _save_scene(cfg, rendered, out_dir)
    mixture_spec, image_specs, masks, oracle = _oracle_parts(cfg, rendered)
    container.save_masks(out_dir / "masks.bin", masks, rendered.truth.span_deg)
    tensor = _estimated_coding(cfg, mixture_spec, oracle)
    container.save_coding(out_dir / "coding.bin", tensor)
    estimates, sampled = _decode_coding(cfg, tensor)
    _write_json(out_dir / "doas.json", _doas_payload(estimates), _meta(cfg))
    container.save_masks(out_dir / "sampled_masks.bin", sampled,
                         rendered.truth.span_deg)
    if estimates.count == 0:
        raise DegenerateInputError("decoder produced no speakers; cannot "
                                   "beamform (eps_theta too high?)")
    separated = beamform.separate(mixture_spec, sampled, estimates.centers_deg,
                                  cfg.geometry(), cfg.loading_eps)
    sep_signals = []
    for i, sep in enumerate(separated):
        signal = stft.synthesize(sep)
        sep_signals.append(signal)
        save_wav(signal, out_dir / f"sep{i + 1:02d}.wav")
    ref = cfg.geometry().reference_mic
    references = [img.channel(ref) for img in rendered.source_images]
    mixture_ref = rendered.mixture.channel(ref)
    length = min(s.length for s in sep_signals + references)
    report = metrics.evaluate_scene(
        out_dir.name, estimates, rendered.truth, _trim_to(sep_signals, length),
        _trim_to([mixture_ref], length)[0], _trim_to(references, length),
        cfg.tolerance_deg)
    path = _write_table(out_dir, "report", [report.as_row()],
                        metrics.EvalReport.COLUMNS, _meta(cfg), args.format)
    print(f"MAE {report.doa_mae_deg:.2f} deg, precision {report.precision:.2f}, "
          f"recall {report.recall:.2f}, delta SI-SDR "
          f"{report.delta_si_sdr_db:.2f} dB -> {path}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "encode": cmd_encode,
    "conditioning": cmd_conditioning,
    "calibrate": cmd_calibrate,
    "train": cmd_train,
    "decode": cmd_decode,
    "beamform": cmd_beamform,
    "eval": cmd_eval,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskgrid",
        description="Angular-grid mask coding: simulation, encoding, "
                    "decoding, beamforming, and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="maskgrid_out",
                       help="artifact directory (default: maskgrid_out)")
        p.add_argument("--theta-count", type=int, default=None)
        p.add_argument("--sigma-deg", type=float, default=None)
        p.add_argument("--eps-theta", type=float, default=None)
        p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides[("run", "seed")] = args.seed
    if args.theta_count is not None:
        overrides[("grid", "theta_count")] = args.theta_count
    if args.sigma_deg is not None:
        overrides[("coding", "sigma_deg")] = args.sigma_deg
    if args.eps_theta is not None:
        overrides[("decode", "eps_theta")] = args.eps_theta
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, CollisionError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (NumericError, DegenerateInputError) as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return 3
    except (FormatError, OSError) as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
