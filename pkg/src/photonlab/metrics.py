"""Image-quality figures for reconstructions: contrast, MSE, line profiles, reports."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np


def contrast(img: np.ndarray, mode: str = "literal") -> float:
    """(I_max - I_min) / (I_max + I_min).

    ``literal`` uses the global extrema; ``robust`` uses the 99th and 1st
    percentiles, which ignores a handful of outlier pixels.
    """
    img = np.asarray(img, dtype=np.float64)
    if np.any(img < 0):
        raise ValueError("contrast is defined for nonnegative images")
    if mode == "literal":
        hi, lo = img.max(), img.min()
    elif mode == "robust":
        hi, lo = np.percentile(img, 99), np.percentile(img, 1)
    else:
        raise ValueError(f"unknown contrast mode {mode!r}")
    if hi + lo == 0:
        raise ValueError("contrast undefined for an all-zero image")
    return float((hi - lo) / (hi + lo))


def mse(img: np.ndarray, truth: np.ndarray) -> float:
    img = np.asarray(img, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if img.shape != truth.shape:
        raise ValueError(f"shape mismatch: {img.shape} vs {truth.shape}")
    return float(np.mean((img - truth) ** 2))


def line_profile(img: np.ndarray, row_index: int) -> np.ndarray:
    img = np.asarray(img)
    if not 0 <= row_index < img.shape[0]:
        raise IndexError(f"row {row_index} out of range for image with {img.shape[0]} rows")
    return img[row_index].astype(np.float64).copy()


def write_profile_csv(path, profile) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["column", "value"])
        for j, v in enumerate(profile):
            w.writerow([j, repr(float(v))])


def _nan_to_none(v):
    return None if isinstance(v, float) and math.isnan(v) else v


@dataclass
class MethodResult:
    name: str
    per_image: list = field(default_factory=list)  # dicts: index, contrast, mse

    def aggregates(self) -> dict:
        c = np.array([r["contrast"] for r in self.per_image], dtype=np.float64)
        m = np.array([r["mse"] for r in self.per_image], dtype=np.float64)

        def stat(fn, a):
            a = a[~np.isnan(a)]
            return float(fn(a)) if a.size else float("nan")

        return {
            "mean_contrast": stat(np.mean, c),
            "median_contrast": stat(np.median, c),
            "std_contrast": stat(np.std, c),
            "mean_mse": stat(np.mean, m),
            "median_mse": stat(np.median, m),
            "std_mse": stat(np.std, m),
        }


@dataclass
class EvalReport:
    methods: list = field(default_factory=list)

    def method(self, name: str) -> MethodResult:
        for m in self.methods:
            if m.name == name:
                return m
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "methods": [
                {
                    "name": m.name,
                    "per_image": [{k: _nan_to_none(v) for k, v in r.items()} for r in m.per_image],
                    "aggregates": {k: _nan_to_none(v) for k, v in m.aggregates().items()},
                }
                for m in self.methods
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def write(self, json_path, csv_path=None) -> None:
        with open(json_path, "w") as fh:
            fh.write(self.to_json())
        if csv_path is not None:
            with open(csv_path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["method", "index", "contrast", "mse"])
                for m in self.methods:
                    for r in m.per_image:
                        w.writerow([m.name, r["index"], repr(r["contrast"]), repr(r["mse"])])

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        out = cls()
        for m in d["methods"]:
            rows = [{"index": r["index"],
                     "contrast": float("nan") if r["contrast"] is None else r["contrast"],
                     "mse": float("nan") if r["mse"] is None else r["mse"]} for r in m["per_image"]]
            out.methods.append(MethodResult(m["name"], rows))
        return out


def compare_methods(recons: dict, truths, indices=None, contrast_mode: str = "literal") -> EvalReport:
    """Score each method's reconstructions against the aligned ground truths.

    ``recons`` maps a method name to a sequence of images aligned with
    ``truths``. Contrast of an all-zero reconstruction is recorded as NaN
    (and serialized as null).
    """
    truths = list(truths)
    if indices is None:
        indices = list(range(len(truths)))
    if len(indices) != len(truths):
        raise ValueError(f"{len(indices)} indices for {len(truths)} truths")
    report = EvalReport()
    for name, images in recons.items():
        images = list(images)
        if len(images) != len(truths):
            raise ValueError(f"method {name!r} has {len(images)} reconstructions for {len(truths)} truths")
        result = MethodResult(name)
        for idx, img, truth in zip(indices, images, truths):
            try:
                c = contrast(img, contrast_mode)
            except ValueError:
                c = float("nan")
            result.per_image.append({"index": int(idx), "contrast": c, "mse": mse(img, truth)})
        report.methods.append(result)
    return report
