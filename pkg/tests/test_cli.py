import json

import numpy as np
import pytest

from photonlab import cae, dataset_io, imageio
from photonlab.cli import main


def _blob_idx(path, n, seed=0):
    rng = np.random.default_rng(seed)
    imgs = np.zeros((n, 28, 28), np.uint8)
    for k in range(n):
        r, c = rng.integers(4, 14, 2)
        imgs[k, r:r + 10, c:c + 4] = rng.integers(128, 256)
        imgs[k, r:r + 3, c:c + 10] = 255
    dataset_io.write_idx(path, imgs)
    return imgs


@pytest.fixture(scope="module")
def prepared(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    _blob_idx(root / "imgs.idx", 40)
    rc = main(["dataset-prepare", "--images", str(root / "imgs.idx"), "--train-count", "12",
               "--test-count", "4", "--seed", "3", "--out", str(root / "data")])
    assert rc == 0
    return root


def _tree_bytes(d):
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


# -- dataset-prepare ---------------------------------------------------------

def test_prepare_writes_split_and_manifest(prepared):
    m = json.loads((prepared / "data" / "manifest.json").read_text())
    assert (m["train_count"], m["test_count"], m["master_seed"]) == (12, 4, 3)
    assert dataset_io.read_manifest(prepared / "data" / "train")["count"] == 12
    assert len(dataset_io.load_pairs(prepared / "data" / "test")) == 4
    cfg = json.loads((prepared / "data" / "config.json").read_text())
    assert cfg["seed"] == 3 and cfg["train_count"] == 12


def test_prepare_rerun_byte_identical(prepared, tmp_path):
    argv = ["dataset-prepare", "--images", str(prepared / "imgs.idx"), "--train-count", "12",
            "--test-count", "4", "--seed", "3", "--out", str(tmp_path / "again")]
    main(argv)
    first = _tree_bytes(tmp_path / "again")
    main(argv)
    assert _tree_bytes(tmp_path / "again") == first
    first.pop("config.json")
    reference = _tree_bytes(prepared / "data")
    reference.pop("config.json")
    assert first == reference


def test_prepare_full_size_split(tmp_path):
    _blob_idx(tmp_path / "big.idx", 6690, seed=1)
    rc = main(["dataset-prepare", "--images", str(tmp_path / "big.idx"), "--train-count", "6021",
               "--test-count", "669", "--out", str(tmp_path / "d")])
    assert rc == 0
    m = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert (m["train_count"], m["test_count"]) == (6021, 669)


def test_prepare_missing_file(tmp_path, capsys):
    rc = main(["dataset-prepare", "--images", str(tmp_path / "nope.idx"), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "nope.idx" in capsys.readouterr().err


def test_prepare_too_many_requested(prepared, tmp_path, capsys):
    rc = main(["dataset-prepare", "--images", str(prepared / "imgs.idx"), "--train-count", "40",
               "--test-count", "1", "--out", str(tmp_path / "o")])
    assert rc == 2 and "only 40" in capsys.readouterr().err


def test_seed_env_fallback_and_config_override(prepared, tmp_path, monkeypatch):
    monkeypatch.setenv("PHOTONLAB_SEED", "11")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"train_count": 5, "test_count": 2, "images": str(prepared / "imgs.idx")}))
    assert main(["dataset-prepare", "--config", str(cfg), "--test-count", "3", "--out", str(tmp_path / "o")]) == 0
    resolved = json.loads((tmp_path / "o" / "config.json").read_text())
    assert (resolved["seed"], resolved["train_count"], resolved["test_count"]) == (11, 5, 3)
    # an explicit flag beats the environment
    main(["dataset-prepare", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / "p")])
    assert json.loads((tmp_path / "p" / "config.json").read_text())["seed"] == 2


def test_bad_config_file(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    assert main(["dataset-prepare", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == 2


# -- simulate ----------------------------------------------------------------

def test_simulate_frames_and_counts(prepared, tmp_path):
    truths = prepared / "data" / "test" / "truths"
    assert main(["simulate", "--input", str(truths), "--seed", "1", "--out", str(tmp_path / "f")]) == 0
    outs = sorted((tmp_path / "f").glob("*.pgm"))
    assert len(outs) == 4
    img, maxval = imageio.read_pgm(outs[0])
    assert maxval == 255 and set(np.unique(img)) <= {0, 255}
    assert main(["simulate", "--input", str(truths), "--n-frames", "5", "--jobs", "2",
                 "--out", str(tmp_path / "c")]) == 0
    counts, maxval = imageio.read_pgm(sorted((tmp_path / "c").glob("*.pgm"))[0])
    assert maxval == 5 and counts.max() <= 5
    assert (tmp_path / "c" / outs[0].name).read_bytes().startswith(b"P2")


def test_simulate_jobs_independent(prepared, tmp_path):
    truths = prepared / "data" / "test" / "truths"
    main(["simulate", "--input", str(truths), "--seed", "4", "--out", str(tmp_path / "a")])
    main(["simulate", "--input", str(truths), "--seed", "4", "--jobs", "3", "--out", str(tmp_path / "b")])
    a, b = _tree_bytes(tmp_path / "a"), _tree_bytes(tmp_path / "b")
    a.pop("config.json"), b.pop("config.json")
    assert a == b


# -- train / infer -----------------------------------------------------------

@pytest.fixture(scope="module")
def trained(prepared):
    out = prepared / "model"
    rc = main(["train", "--pairs", str(prepared / "data" / "train"), "--test-pairs", str(prepared / "data" / "test"),
               "--depth", "5", "--epochs", "1", "--batch-size", "4", "--seed", "0", "--out", str(out)])
    assert rc == 0
    return out


def test_train_writes_model_and_history(trained):
    assert cae.load_weights(trained / "model.caew").arch.depth_class == 5
    lines = (trained / "history.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_mse,test_mse,seconds" and len(lines) == 2


@pytest.mark.parametrize("depth", ["7", "9"])
def test_train_accepts_depths(prepared, tmp_path, depth):
    rc = main(["train", "--pairs", str(prepared / "data" / "test"), "--depth", depth, "--epochs", "1",
               "--out", str(tmp_path / "m")])
    assert rc == 0
    assert cae.load_weights(tmp_path / "m" / "model.caew").arch.depth_class == int(depth)


def test_train_repeatable(prepared, tmp_path):
    for name in ("a", "b"):
        main(["train", "--pairs", str(prepared / "data" / "test"), "--depth", "5", "--epochs", "2",
              "--seed", "5", "--out", str(tmp_path / name)])
    ha = cae.TrainingHistory.read_csv(tmp_path / "a" / "history.csv")
    hb = cae.TrainingHistory.read_csv(tmp_path / "b" / "history.csv")
    assert ha.same_trajectory(hb)
    strip = lambda p: [l.rsplit(",", 1)[0] for l in p.read_text().splitlines()]  # noqa: E731
    assert strip(tmp_path / "a" / "history.csv") == strip(tmp_path / "b" / "history.csv")
    assert (tmp_path / "a" / "model.caew").read_bytes() == (tmp_path / "b" / "model.caew").read_bytes()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_exit_code(prepared, tmp_path, capsys):
    rc = main(["train", "--pairs", str(prepared / "data" / "test"), "--depth", "5", "--epochs", "3",
               "--learning-rate", "1e30", "--out", str(tmp_path / "m")])
    assert rc == 1
    assert "epoch" in capsys.readouterr().err


def test_train_missing_pairs(tmp_path):
    assert main(["train", "--pairs", str(tmp_path / "none"), "--out", str(tmp_path / "m")]) == 2


def test_infer_outputs(prepared, trained, tmp_path):
    rc = main(["infer", "--model", str(trained / "model.caew"), "--input", str(prepared / "data" / "test"),
               "--f32", "--out", str(tmp_path / "r")])
    assert rc == 0
    names = [e["frame"] for e in dataset_io.read_manifest(prepared / "data" / "test")["pairs"]]
    stems = [n.split("/")[1].split(".")[0] for n in names]
    assert sorted(p.stem for p in (tmp_path / "r").glob("*.pgm")) == sorted(stems)
    for s in stems:
        raw = imageio.read_f32i(tmp_path / "r" / f"{s}.f32")
        assert raw.shape == (28, 28) and np.all((raw > 0) & (raw < 1))
        img, maxval = imageio.read_pgm(tmp_path / "r" / f"{s}.pgm")
        np.testing.assert_array_equal(img, imageio.to_uint8(raw))
    timing_rows = (tmp_path / "r" / "timings.csv").read_text().splitlines()[1:]
    assert [r.split(",")[0] for r in timing_rows] == stems


def test_infer_shape_mismatch(trained, tmp_path):
    imageio.write_pgm(tmp_path / "odd.pgm", np.zeros((20, 20), np.uint8))
    rc = main(["infer", "--model", str(trained / "model.caew"), "--input", str(tmp_path / "odd.pgm"),
               "--out", str(tmp_path / "r")])
    assert rc == 2


def test_infer_bad_model(tmp_path, prepared):
    (tmp_path / "m.caew").write_bytes(b"XXXX" + b"\0" * 20)
    rc = main(["infer", "--model", str(tmp_path / "m.caew"), "--input", str(prepared / "data" / "test"),
               "--out", str(tmp_path / "r")])
    assert rc == 2


# -- tv / eval / profile -----------------------------------------------------

def test_tv_writes_trace_per_recon(prepared, tmp_path):
    rc = main(["tv", "--input", str(prepared / "data" / "test"), "--tv-weight", "0.1",
               "--max-outer-iters", "20", "--out", str(tmp_path / "t")])
    assert rc == 0
    recons = sorted((tmp_path / "t").glob("*.pgm"))
    assert len(recons) == 4
    for r in recons:
        lines = (tmp_path / "t" / f"{r.stem}.trace.csv").read_text().splitlines()
        assert lines[0] == "iteration,objective,step,backtracks" and len(lines) > 1
    assert json.loads((tmp_path / "t" / "config.json").read_text())["tv_weight"] == 0.1


def test_tv_on_count_maps(prepared, tmp_path):
    main(["simulate", "--input", str(prepared / "data" / "test" / "truths"), "--n-frames", "20",
          "--out", str(tmp_path / "c")])
    assert main(["tv", "--counts", "--input", str(tmp_path / "c"), "--out", str(tmp_path / "t")]) == 0
    assert len(list((tmp_path / "t").glob("*.pgm"))) == 4


def test_eval_perfect_and_misaligned(prepared, tmp_path, capsys):
    truths = prepared / "data" / "test" / "truths"
    rc = main(["eval", "--recon", f"perfect={truths}", "--truth", str(prepared / "data" / "test"),
               "--out", str(tmp_path / "e")])
    assert rc == 0
    rep = json.loads((tmp_path / "e" / "report.json").read_text())
    assert rep["methods"][0]["aggregates"]["mean_mse"] == 0.0
    assert (tmp_path / "e" / "report.csv").exists()
    partial = tmp_path / "partial"
    partial.mkdir()
    first = sorted(truths.glob("*.pgm"))[0]
    (partial / first.name).write_bytes(first.read_bytes())
    rc = main(["eval", "--recon", f"p={partial}", "--truth", str(truths), "--out", str(tmp_path / "e2")])
    assert rc == 2
    err = capsys.readouterr().err
    missing = sorted(p.stem for p in truths.glob("*.pgm"))[1:]
    assert all(m in err for m in missing)


def test_profile_reproduces_truth_row(prepared, tmp_path):
    truths = prepared / "data" / "test" / "truths"
    assert main(["profile", "--input", str(truths), "--row", "14", "--out", str(tmp_path / "p")]) == 0
    for t in sorted(truths.glob("*.pgm")):
        rows = (tmp_path / "p" / f"{t.stem}.row14.csv").read_text().splitlines()[1:]
        vals = np.array([float(r.split(",")[1]) for r in rows])
        np.testing.assert_array_equal(vals, imageio.read_image(t)[14])
    assert main(["profile", "--input", str(truths), "--row", "40", "--out", str(tmp_path / "q")]) == 2


# -- bench -------------------------------------------------------------------

def _bench(root, out, seed="7"):
    cfg = root / "bench.json"
    cfg.write_text(json.dumps({"images": str(root / "imgs.idx"), "train_count": 10, "test_count": 3,
                               "depth": 5, "train": {"epochs": 2, "batch_size": 4},
                               "tv": {"max_outer_iters": 10}, "panel_count": 3}))
    return main(["bench", "--config", str(cfg), "--seed", seed, "--out", str(out)])


def test_bench_end_to_end_and_deterministic(prepared, tmp_path):
    assert _bench(prepared, tmp_path / "a") == 0
    assert _bench(prepared, tmp_path / "b") == 0
    a, b = _tree_bytes(tmp_path / "a"), _tree_bytes(tmp_path / "b")
    # wall-clock files and the archived config (which names the output directory) may differ
    timing_files = {k for k in a if k.endswith("timings.csv") or k in ("timing.json", "history.csv", "config.json")}
    assert {k for k in a if k.endswith(".caew")} == {"model.caew"}
    for k in a:
        if k not in timing_files:
            assert a[k] == b[k], k
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["eval_frames"] == 3 and summary["train_pairs"] == 10
    assert (tmp_path / "a" / "panel.png").exists()
    assert json.loads((tmp_path / "a" / "config.json").read_text())["seed"] == 7


def test_bench_needs_images(tmp_path):
    assert main(["bench", "--out", str(tmp_path / "x")]) == 2


def test_unknown_verb_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
