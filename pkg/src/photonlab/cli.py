"""Command-line front end: dataset-prepare, simulate, train, infer, tv, eval, profile, bench.

Every verb takes ``--config FILE.json``; explicit flags override config
values and the merged result is written to ``config.json`` in the output
directory. Exit codes: 0 success, 1 computational failure, 2 usage or IO
error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import cae, dataset_io, imageio, metrics, nn, photon_sim, tv_recon

log = logging.getLogger("photonlab")

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2
SEED_ENV = "PHOTONLAB_SEED"
IMAGE_SUFFIXES = (".pgm", ".png", ".f32")


class UsageError(Exception):
    """Bad arguments or unusable inputs; maps to exit code 2."""


# -- config plumbing ---------------------------------------------------------

def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None


def _resolve(args, defaults: dict) -> dict:
    """defaults < config file < explicit flags; the seed falls back to $PHOTONLAB_SEED."""
    cfg = dict(defaults)
    cfg.update(_load_config(args.config))
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if "seed" in defaults and cfg.get("seed") is None:
        env = os.environ.get(SEED_ENV)
        try:
            cfg["seed"] = int(env) if env is not None else 0
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    return cfg


def _prepare_out(out) -> Path:
    if out is None:
        raise UsageError("an output directory is required (--out or config 'out')")
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    return out


def _write_config(out: Path, cfg: dict) -> None:
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _camera(spec) -> tuple[str, photon_sim.CameraModel]:
    if isinstance(spec, dict):
        return "custom", photon_sim.CameraModel(**spec)
    try:
        return spec, photon_sim.get_preset(spec)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None


def _pmap(fn, items, jobs: int):
    """Ordered map; output never depends on the worker count."""
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


# -- input discovery ---------------------------------------------------------

def _collect_frames(inputs) -> list[tuple[str, np.ndarray]]:
    """(name, image) pairs from files, plain image directories or pair caches, in stable order."""
    found = []
    for item in inputs:
        p = Path(item)
        if p.is_dir() and (p / "manifest.json").exists():
            for e in dataset_io.read_manifest(p)["pairs"]:
                found.append((Path(e["frame"]).stem, p / e["frame"]))
        elif p.is_dir():
            found.extend((f.stem, f) for f in sorted(p.iterdir()) if f.suffix.lower() in IMAGE_SUFFIXES)
        elif p.exists():
            found.append((p.stem, p))
        else:
            raise UsageError(f"input not found: {p}")
    if not found:
        raise UsageError("no input images found")
    out = []
    for name, path in found:
        try:
            out.append((name, imageio.read_image(path)))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read image {path}: {exc}") from None
    return out


def _truth_dir_images(directory) -> dict:
    p = Path(directory)
    if (p / "manifest.json").exists():
        m = dataset_io.read_manifest(p)
        return {Path(e["truth"]).stem: imageio.read_image(p / e["truth"]) for e in m["pairs"]}
    if not p.is_dir():
        raise UsageError(f"not a directory: {p}")
    return {f.stem: imageio.read_image(f) for f in sorted(p.iterdir()) if f.suffix.lower() in IMAGE_SUFFIXES}


def _recon_dir_images(directory) -> dict:
    # prefer lossless float outputs when both are present
    p = Path(directory)
    if not p.is_dir():
        raise UsageError(f"not a directory: {p}")
    images = {}
    for f in sorted(p.iterdir()):
        if f.suffix.lower() in IMAGE_SUFFIXES and (f.suffix == ".f32" or f.stem not in images):
            images[f.stem] = imageio.read_image(f)
    return images


def _save_recon(out: Path, name: str, img: np.ndarray, fmt: str, save_f32: bool) -> None:
    if fmt == "png":
        imageio.write_png(out / f"{name}.png", imageio.to_uint8(img))
    else:
        imageio.write_pgm(out / f"{name}.pgm", imageio.to_uint8(img))
    if save_f32:
        imageio.write_f32i(out / f"{name}.f32", img)


# -- verbs -------------------------------------------------------------------

def _idx_images(path) -> np.ndarray:
    try:
        arr = dataset_io.read_idx(path)
    except FileNotFoundError:
        raise UsageError(f"IDX file not found: {path}") from None
    except dataset_io.IdxError as exc:
        raise UsageError(str(exc)) from None
    if len(arr.shape) != 3:
        raise UsageError(f"{path}: expected an image IDX file (3 dims), got shape {arr.shape}")
    return arr.images()


def _prepare_pairs(images, cfg, out: Path) -> dict:
    name, cam = _camera(cfg["camera"])
    split = dataset_io.make_split(len(images), cfg["train_count"], cfg["test_count"], cfg["seed"])
    summary = {"dataset": cfg["dataset"], "camera_preset": name, "master_seed": cfg["seed"],
               "train_count": len(split.train_indices), "test_count": len(split.test_indices)}
    for part, idx in (("train", split.train_indices), ("test", split.test_indices)):
        pairs = dataset_io.build_pairs(images, idx, cam, cfg["seed"], cfg["dataset"])
        pairs.camera_preset = name
        dataset_io.save_pairs(pairs, out / part)
    (out / "manifest.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def cmd_dataset_prepare(args) -> int:
    cfg = _resolve(args, {"images": None, "dataset": "mnist", "train_count": 6021, "test_count": 669,
                          "camera": "paper-like", "seed": None, "out": None})
    if cfg["images"] is None:
        raise UsageError("--images is required")
    images = _idx_images(cfg["images"])
    out = _prepare_out(cfg["out"])
    _write_config(out, cfg)
    try:
        summary = _prepare_pairs(images, cfg, out)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    log.info("prepared %d train / %d test pairs in %s", summary["train_count"], summary["test_count"], out)
    return EXIT_OK


def _simulate_one(task):
    img, cam, n_frames, seed = task
    if n_frames == 1:
        return photon_sim.simulate_frame(img, cam, photon_sim.derive_seed(seed, 0))
    return photon_sim.accumulate_frames(img, cam, n_frames, seed)


def cmd_simulate(args) -> int:
    cfg = _resolve(args, {"input": None, "camera": "paper-like", "n_frames": 1, "mu": None,
                          "seed": None, "out": None, "jobs": 1})
    if not cfg["input"]:
        raise UsageError("--input is required")
    _, cam = _camera(cfg["camera"])
    if cfg["mu"] is not None:
        cam = cam.with_mu(cfg["mu"])
    if cfg["n_frames"] < 1:
        raise UsageError("--n-frames must be >= 1")
    items = _collect_frames(cfg["input"])
    out = _prepare_out(cfg["out"])
    _write_config(out, cfg)
    # image k of the input list uses streams derived from (seed, k)
    seeds = [photon_sim.derive_seed(cfg["seed"], k) for k in range(len(items))]
    frames = _pmap(_simulate_one, [(img, cam, cfg["n_frames"], s) for (_, img), s in zip(items, seeds)], cfg["jobs"])
    for (name, _), frame in zip(items, frames):
        if cfg["n_frames"] == 1:
            imageio.write_pgm(out / f"{name}.pgm", (frame * 255).astype(np.uint8))
        else:
            imageio.write_pgm(out / f"{name}.pgm", frame, plain=True, maxval=cfg["n_frames"])
    log.info("simulated %d images into %s", len(items), out)
    return EXIT_OK


def _train_defaults() -> dict:
    d = asdict(cae.TrainConfig())
    d.pop("shuffle_seed")
    return d


def _train_config(cfg) -> cae.TrainConfig:
    keys = {f.name for f in fields(cae.TrainConfig)}
    try:
        return cae.TrainConfig(**{k: v for k, v in cfg.items() if k in keys})
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _run_training(train_pairs, test_pairs, depth, tcfg, seed, out: Path):
    try:
        arch = cae.build_architecture(depth)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    weights, history = cae.train(train_pairs, arch, tcfg, seed, test_pairs=test_pairs)
    cae.save_weights(weights, out / "model.caew")
    history.write_csv(out / "history.csv")
    return weights, history


def cmd_train(args) -> int:
    cfg = _resolve(args, {"pairs": None, "test_pairs": None, "depth": 7, "seed": None, "out": None,
                          **_train_defaults()})
    if cfg["pairs"] is None:
        raise UsageError("--pairs is required")
    tcfg = _train_config(cfg)
    try:
        train_pairs = dataset_io.load_pairs(cfg["pairs"])
        test_pairs = dataset_io.load_pairs(cfg["test_pairs"]) if cfg["test_pairs"] else None
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if len(train_pairs) == 0:
        raise UsageError(f"pair cache {cfg['pairs']} is empty")
    out = _prepare_out(cfg["out"])
    _write_config(out, cfg)
    _, history = _run_training(train_pairs, test_pairs, cfg["depth"], tcfg, cfg["seed"], out)
    log.info("trained %d epochs; final train MSE %.6f", len(history.records), history.records[-1].train_mse)
    return EXIT_OK


def _write_timings(out: Path, rows) -> None:
    with open(out / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "seconds"])
        for name, sec in rows:
            w.writerow([name, f"{sec:.6f}"])


def _infer_all(weights, items, out: Path, fmt: str, save_f32: bool) -> list:
    timings, recons = [], []
    for name, frame in items:
        t0 = time.perf_counter()
        y = cae.forward(weights, frame)
        sec = time.perf_counter() - t0
        log.info("cae %s: %.2f ms", name, 1e3 * sec)
        _save_recon(out, name, y, fmt, save_f32)
        timings.append((name, sec))
        recons.append(y)
    _write_timings(out, timings)
    return recons


def cmd_infer(args) -> int:
    cfg = _resolve(args, {"model": None, "input": None, "out": None, "format": "pgm", "f32": False})
    if cfg["model"] is None or not cfg["input"]:
        raise UsageError("--model and --input are required")
    try:
        weights = cae.load_weights(cfg["model"])
    except FileNotFoundError:
        raise UsageError(f"model file not found: {cfg['model']}") from None
    except cae.WeightFileError as exc:
        raise UsageError(f"{cfg['model']}: {exc}") from None
    items = _collect_frames(cfg["input"])
    size = weights.arch.input_size
    for name, frame in items:
        if frame.shape != (size, size):
            raise UsageError(f"frame {name} has shape {frame.shape}; model expects ({size}, {size})")
    out = _prepare_out(cfg["out"])
    _write_config(out, cfg)
    _infer_all(weights, items, out, cfg["format"], cfg["f32"])
    return EXIT_OK


def _tv_defaults() -> dict:
    return asdict(tv_recon.TvConfig())


def _tv_config(cfg) -> tv_recon.TvConfig:
    keys = {f.name for f in fields(tv_recon.TvConfig)}
    try:
        return tv_recon.TvConfig(**{k: v for k, v in cfg.items() if k in keys})
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _tv_one(task):
    y, tcfg = task
    t0 = time.perf_counter()
    x, trace = tv_recon.reconstruct_tv(np.round(y).astype(np.int64), tcfg)
    return x, trace, time.perf_counter() - t0


def _tv_all(items, tcfg, out: Path, fmt: str, save_f32: bool, jobs: int) -> list:
    results = _pmap(_tv_one, [(frame, tcfg) for _, frame in items], jobs)
    timings, recons = [], []
    for (name, _), (x, trace, sec) in zip(items, results):
        log.info("tv %s: %.1f ms, %d iterations (%s)", name, 1e3 * sec, len(trace), trace.stop_reason)
        _save_recon(out, name, x, fmt, save_f32)
        trace.write_csv(out / f"{name}.trace.csv")
        timings.append((name, sec))
        recons.append(x)
    _write_timings(out, timings)
    return recons


def cmd_tv(args) -> int:
    cfg = _resolve(args, {"input": None, "out": None, "format": "pgm", "f32": False, "jobs": 1,
                          "counts": False, **_tv_defaults()})
    if not cfg["input"]:
        raise UsageError("--input is required")
    tcfg = _tv_config(cfg)
    items = _collect_frames(cfg["input"])
    if cfg["counts"]:
        # count maps are stored as plain PGM; undo the [0,1] scaling of read_image
        items = [(n, imageio.read_pgm(p)[0].astype(float)) for (n, _), p in
                 zip(items, _input_paths(cfg["input"]))]
    out = _prepare_out(cfg["out"])
    _write_config(out, cfg)
    _tv_all(items, tcfg, out, cfg["format"], cfg["f32"], cfg["jobs"])
    return EXIT_OK


def _input_paths(inputs):
    paths = []
    for item in inputs:
        p = Path(item)
        if p.is_dir() and (p / "manifest.json").exists():
            paths.extend(p / e["frame"] for e in dataset_io.read_manifest(p)["pairs"])
        elif p.is_dir():
            paths.extend(f for f in sorted(p.iterdir()) if f.suffix.lower() in IMAGE_SUFFIXES)
        else:
            paths.append(p)
    return paths


def _evaluate(recon_dirs: dict, truth_dir, contrast_mode: str) -> metrics.EvalReport:
    truths = _truth_dir_images(truth_dir)
    names = sorted(truths)
    recons = {}
    for method, d in recon_dirs.items():
        imgs = _recon_dir_images(d)
        missing = [n for n in names if n not in imgs]
        extra = [n for n in imgs if n not in truths]
        if missing or extra:
            raise UsageError(f"method {method!r} ({d}) is misaligned with {truth_dir}: "
                             f"missing {missing[:20]}{'...' if len(missing) > 20 else ''}, "
                             f"unexpected {extra[:20]}{'...' if len(extra) > 20 else ''}")
        recons[method] = [imgs[n] for n in names]
    indices = [int(n) if n.isdigit() else k for k, n in enumerate(names)]
    return metrics.compare_methods(recons, [truths[n] for n in names], indices, contrast_mode)


def _parse_methods(specs) -> dict:
    methods = {}
    for s in specs:
        if "=" in s:
            name, d = s.split("=", 1)
        else:
            name, d = Path(s).name, s
        if name in methods:
            raise UsageError(f"duplicate method name {name!r}")
        methods[name] = d
    return methods


def cmd_eval(args) -> int:
    cfg = _resolve(args, {"recon": None, "truth": None, "out": None, "contrast_mode": "literal"})
    if not cfg["recon"] or cfg["truth"] is None:
        raise UsageError("--recon and --truth are required")
    report = _evaluate(_parse_methods(cfg["recon"]), cfg["truth"], cfg["contrast_mode"])
    out = _prepare_out(cfg["out"])
    _write_config(out, cfg)
    report.write(out / "report.json", out / "report.csv")
    for m in report.methods:
        ag = m.aggregates()
        log.info("%s: median contrast %.4f, median MSE %.6f", m.name, ag["median_contrast"], ag["median_mse"])
    return EXIT_OK


def cmd_profile(args) -> int:
    cfg = _resolve(args, {"input": None, "row": 14, "out": None})
    if not cfg["input"]:
        raise UsageError("--input is required")
    items = _collect_frames(cfg["input"])
    out = _prepare_out(cfg["out"])
    _write_config(out, cfg)
    for name, img in items:
        try:
            prof = metrics.line_profile(img, cfg["row"])
        except IndexError as exc:
            raise UsageError(f"{name}: {exc}") from None
        metrics.write_profile_csv(out / f"{name}.row{cfg['row']}.csv", prof)
    return EXIT_OK


# -- bench -------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Everything one desk-scale reproduction run needs."""

    images: str | None = None
    dataset: str = "mnist"
    train_count: int = 2000
    test_count: int = 200
    camera: object = "paper-like"
    seed: int | None = None
    depth: int = 7
    train: dict = field(default_factory=lambda: {**_train_defaults(), "epochs": 100})
    tv: dict = field(default_factory=_tv_defaults)
    contrast_mode: str = "literal"
    panel_count: int = 16
    jobs: int = 1
    out: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown experiment config keys: {sorted(unknown)}")
        base = cls()
        merged = {**asdict(base), **d}
        merged["train"] = {**base.train, **d.get("train", {})}
        merged["tv"] = {**base.tv, **d.get("tv", {})}
        return cls(**merged)


def _panel(rows: list[list[np.ndarray]], gap: int = 2) -> np.ndarray:
    h, w = rows[0][0].shape
    ncol = len(rows[0])
    canvas = np.ones((len(rows) * (h + gap) - gap, ncol * (w + gap) - gap))
    for r, row in enumerate(rows):
        for c, img in enumerate(row):
            img = np.asarray(img, dtype=np.float64)
            top = img.max()
            canvas[r * (h + gap):r * (h + gap) + h, c * (w + gap):c * (w + gap) + w] = img / top if top > 0 else img
    return canvas


def run_bench(exp: ExperimentConfig) -> dict:
    out = _prepare_out(exp.out)
    if exp.images is None:
        raise UsageError("experiment config needs 'images' (an IDX image file)")
    if exp.seed is None:
        raise UsageError("experiment seed unresolved")
    _write_config(out, asdict(exp))
    images = _idx_images(exp.images)

    t_start = time.perf_counter()
    try:
        _prepare_pairs(images, {"dataset": exp.dataset, "camera": exp.camera, "seed": exp.seed,
                                "train_count": exp.train_count, "test_count": exp.test_count}, out / "pairs")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    train_pairs = dataset_io.load_pairs(out / "pairs" / "train")
    test_pairs = dataset_io.load_pairs(out / "pairs" / "test")

    t0 = time.perf_counter()
    weights, history = _run_training(train_pairs, test_pairs, exp.depth, _train_config(exp.train), exp.seed, out)
    t_train = time.perf_counter() - t0

    names = [f"{i:06d}" for i in test_pairs.indices]
    items = list(zip(names, test_pairs.frames.astype(np.float64)))
    (out / "recon" / "cae").mkdir(parents=True, exist_ok=True)
    (out / "recon" / "tv").mkdir(parents=True, exist_ok=True)
    cae_recons = _infer_all(weights, items, out / "recon" / "cae", "pgm", True)
    tv_recons = _tv_all(items, _tv_config(exp.tv), out / "recon" / "tv", "pgm", True, exp.jobs)

    report = metrics.compare_methods({"cae": cae_recons, "tv": tv_recons}, list(test_pairs.truths),
                                     test_pairs.indices, exp.contrast_mode)
    report.write(out / "report.json", out / "report.csv")

    k = min(exp.panel_count, len(items))
    panel = _panel([[test_pairs.truths[i], test_pairs.frames[i], tv_recons[i], cae_recons[i]] for i in range(k)])
    imageio.write_png(out / "panel.png", imageio.to_uint8(panel))

    ag = {m.name: m.aggregates() for m in report.methods}
    summary = {
        "train_pairs": len(train_pairs),
        "eval_frames": len(test_pairs),
        "depth": exp.depth,
        "epochs": len(history.records),
        "final_train_mse": history.records[-1].train_mse,
        "final_test_mse": history.records[-1].test_mse,
        "cae": ag["cae"],
        "tv": ag["tv"],
        "cae_contrast_above_tv": ag["cae"]["median_contrast"] > ag["tv"]["median_contrast"],
        "cae_mse_below_tv": ag["cae"]["median_mse"] < ag["tv"]["median_mse"],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    # wall-clock numbers live apart from the deterministic artifacts
    cae_t = np.loadtxt(out / "recon" / "cae" / "timings.csv", delimiter=",", skiprows=1, usecols=1, ndmin=1)
    tv_t = np.loadtxt(out / "recon" / "tv" / "timings.csv", delimiter=",", skiprows=1, usecols=1, ndmin=1)
    timing = {"train_seconds": t_train, "total_seconds": time.perf_counter() - t_start,
              "cae_median_ms": 1e3 * float(np.median(cae_t)), "tv_median_ms": 1e3 * float(np.median(tv_t))}
    (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    log.info("bench: CAE median contrast %.3f / MSE %.5f; TV median contrast %.3f / MSE %.5f",
             ag["cae"]["median_contrast"], ag["cae"]["median_mse"], ag["tv"]["median_contrast"], ag["tv"]["median_mse"])
    return summary


def cmd_bench(args) -> int:
    d = _load_config(args.config)
    for key in ("images", "train_count", "test_count", "camera", "seed", "depth", "out", "jobs"):
        value = getattr(args, key, None)
        if value is not None:
            d[key] = value
    if args.epochs is not None:
        d.setdefault("train", {})["epochs"] = args.epochs
    if d.get("seed") is None:
        d["seed"] = _resolve(argparse.Namespace(config=None, seed=None), {"seed": None})["seed"]
    run_bench(ExperimentConfig.from_dict(d))
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="photonlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = p.add_subparsers(dest="verb", required=True)

    def verb(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON config file; flags override its values")
        sp.set_defaults(fn=fn)
        return sp

    sp = verb("dataset-prepare", cmd_dataset_prepare, "split an IDX image file and cache (frame, truth) pairs")
    sp.add_argument("--images", help="IDX image file (optionally .gz)")
    sp.add_argument("--dataset", help="dataset label recorded in manifests")
    sp.add_argument("--train-count", type=int)
    sp.add_argument("--test-count", type=int)
    sp.add_argument("--camera", help="camera preset name")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")

    sp = verb("simulate", cmd_simulate, "simulate single-photon frames of clean images")
    sp.add_argument("--input", nargs="+", help="image files or directories")
    sp.add_argument("--camera")
    sp.add_argument("--mu", type=float, help="override mean photons per pixel")
    sp.add_argument("--n-frames", type=int, help="accumulate this many frames into a count map")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--out")

    sp = verb("train", cmd_train, "train an auto-encoder on a pair cache")
    sp.add_argument("--pairs", help="training pair cache directory")
    sp.add_argument("--test-pairs", help="held-out pair cache directory")
    sp.add_argument("--depth", type=int, choices=(5, 7, 9))
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--learning-rate", type=float)
    sp.add_argument("--weight-decay", type=float)
    sp.add_argument("--eval-every", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")

    sp = verb("infer", cmd_infer, "reconstruct frames with a trained auto-encoder")
    sp.add_argument("--model")
    sp.add_argument("--input", nargs="+")
    sp.add_argument("--format", choices=("pgm", "png"))
    sp.add_argument("--f32", action="store_true", default=None, help="also save lossless float32 images")
    sp.add_argument("--out")

    sp = verb("tv", cmd_tv, "reconstruct frames with the TV-regularized Poisson solver")
    sp.add_argument("--input", nargs="+")
    sp.add_argument("--counts", action="store_true", default=None, help="inputs are plain-PGM count maps")
    sp.add_argument("--tv-weight", type=float)
    sp.add_argument("--background", type=float)
    sp.add_argument("--gain", type=float)
    sp.add_argument("--max-outer-iters", type=int)
    sp.add_argument("--inner-iters", type=int)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--format", choices=("pgm", "png"))
    sp.add_argument("--f32", action="store_true", default=None)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--out")

    sp = verb("eval", cmd_eval, "score reconstructions against ground truth")
    sp.add_argument("--recon", nargs="+", help="NAME=DIR per method")
    sp.add_argument("--truth", help="truth image directory or pair cache")
    sp.add_argument("--contrast-mode", choices=("literal", "robust"))
    sp.add_argument("--out")

    sp = verb("profile", cmd_profile, "export one image row as CSV")
    sp.add_argument("--input", nargs="+")
    sp.add_argument("--row", type=int)
    sp.add_argument("--out")

    sp = verb("bench", cmd_bench, "prepare, train, reconstruct both ways and evaluate")
    sp.add_argument("--images")
    sp.add_argument("--train-count", type=int)
    sp.add_argument("--test-count", type=int)
    sp.add_argument("--camera")
    sp.add_argument("--depth", type=int, choices=(5, 7, 9))
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--out")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"photonlab {args.verb}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (cae.TrainingDivergedError, FloatingPointError) as exc:
        print(f"photonlab {args.verb}: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except (OSError, nn.ShapeError, cae.WeightFileError, imageio.ImageFormatError, dataset_io.IdxError) as exc:
        print(f"photonlab {args.verb}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
