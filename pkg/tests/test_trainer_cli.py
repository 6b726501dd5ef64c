import csv

import numpy as np
import pytest

from vesselmtl import cli, trainer
from vesselmtl.combiner import AdaptiveState, compute_alpha, update
from vesselmtl.config import RunConfig, load_config
from vesselmtl.data import load_dataset, read_gray_png, write_gray_png
from vesselmtl.errors import ConfigError, ReportError
from vesselmtl.metrics import evaluate_masks
from vesselmtl.model import ModelConfig, build, save_checkpoint
from vesselmtl.synth import synth_generate

TINY = {"base_channels": "2", "depth": "2", "epochs": "2", "batch_size": "3"}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    synth_generate(8, 16, 4, str(root))
    return str(root)


def tiny(dataset, out, **kw):
    pairs = dict(TINY, data=dataset, out=str(out))
    pairs.update({k: str(v) for k, v in kw.items()})
    return RunConfig().with_overrides(pairs)


def test_config_rules(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig(mode="single", heads="seg_and_dt")
    with pytest.raises(ConfigError):
        RunConfig(mode="single", gamma=0.5)
    with pytest.raises(ConfigError):
        RunConfig().with_overrides({"learning_rate": "0.1"})
    with pytest.raises(ConfigError):
        RunConfig().with_overrides({"epochs": "ten"})
    cfg = RunConfig(mode="multitask-fixed", fixed_weight=0.25, seed=9)
    path = tmp_path / "c.txt"
    path.write_text(cfg.to_text() + "# trailing comment\n")
    assert load_config(str(path)) == cfg
    assert load_config(str(path), {"seed": "3"}).seed == 3


def test_proposed_log(dataset, tmp_path):
    res = trainer.train(tiny(dataset, tmp_path / "p"))
    rows = trainer.read_log(res.log_path)
    with open(res.log_path) as fh:
        assert next(csv.reader(fh)) == ["epoch", "batch", "l_bce", "l_mse", "alpha", "lr", "wall_ms"]
    assert float(rows[0]["alpha"]) == 1.0
    keys = [(int(r["epoch"]), int(r["batch"])) for r in rows]
    assert keys == sorted(keys) and len(set(keys)) == len(keys) == 2 * 2
    # replay the recurrence from the logged losses
    state = AdaptiveState()
    for r in rows:
        assert float(r["alpha"]) == compute_alpha(state) > 0
        update(state, float(r["l_bce"]), float(r["l_mse"]))
    for name in ("config.txt", "splits.txt", "best.ckpt", "last.ckpt"):
        assert (tmp_path / "p" / name).exists()


def test_single_log_columns(dataset, tmp_path):
    res = trainer.train(tiny(dataset, tmp_path / "s", mode="single"))
    with open(res.log_path) as fh:
        assert next(csv.reader(fh)) == ["epoch", "batch", "l_bce", "lr", "wall_ms"]


def _log_without_wall(path):
    return [{k: v for k, v in r.items() if k != "wall_ms"} for r in trainer.read_log(path)]


def test_deterministic_runs(dataset, tmp_path):
    a = trainer.train(tiny(dataset, tmp_path / "a", seed=3))
    b = trainer.train(tiny(dataset, tmp_path / "b", seed=3))
    for name in ("best.ckpt", "last.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert _log_without_wall(a.log_path) == _log_without_wall(b.log_path)


def test_fixed_equals_pinned_proposed(dataset, tmp_path):
    trainer.train(tiny(dataset, tmp_path / "f", mode="multitask-fixed", fixed_weight=0.7))
    trainer.train(tiny(dataset, tmp_path / "q", alpha_pinned="0.7"))
    assert (tmp_path / "f/last.ckpt").read_bytes() == (tmp_path / "q/last.ckpt").read_bytes()


def test_gt_as_prediction(dataset):
    samples = load_dataset(dataset)
    rep = evaluate_masks([(s.id, read_gray_png(f"{dataset}/gt/{s.id}.png") >= 128, s.mask) for s in samples])
    assert rep.mean_dice == 1.0 and rep.mean_iou == 1.0


def test_empty_split_writes_nothing(dataset, tmp_path):
    cfg = tiny(dataset, tmp_path / "e", val_frac=0.0, test_frac=0.25, train_frac=0.75)
    res = trainer.train(cfg)
    with pytest.raises(ReportError):
        trainer.run_eval(res.last_path, cfg, "val", out_dir=str(tmp_path / "ev"))
    assert not (tmp_path / "ev" / "metrics_val.csv").exists()
    rep = trainer.run_eval(res.last_path, cfg, "test", out_dir=str(tmp_path / "ev"))
    assert len(rep.per_image) == 2
    assert (tmp_path / "ev" / "metrics_test.csv").exists()


def test_predict_zero_weights_and_padding(tmp_path):
    params = build(ModelConfig(base_channels=2, depth=2))
    for t in params.tensors.values():
        t.data[...] = 0
    save_checkpoint(params, tmp_path / "z.ckpt")
    img = np.random.default_rng(1).integers(0, 256, (18, 10), dtype=np.uint8)
    write_gray_png(str(tmp_path / "odd.png"), img)
    out = tmp_path / "pred"
    assert trainer.run_predict(str(tmp_path / "z.ckpt"), str(tmp_path / "odd.png"), str(out)) == ["odd"]
    prob = read_gray_png(str(out / "odd_prob.png"))
    assert prob.shape == (18, 10)
    assert (prob == 128).all()
    assert (read_gray_png(str(out / "odd_mask.png")) == 255).all()
    assert read_gray_png(str(out / "odd_dt.png")).shape == (18, 10)
    assert (out / "odd_dt.dtc").exists()
    assert "18x10" in (out / "odd_pad.txt").read_text()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cli_exit_codes(dataset, tmp_path, capsys):
    base = ["--set", "base_channels=2", "--set", "depth=2", "--set", "epochs=1", "--data", dataset]
    assert cli.main(["train", *base, "--out", str(tmp_path / "ok")]) == 0
    ckpt = str(tmp_path / "ok" / "last.ckpt")
    assert cli.main(["eval", ckpt, *base, "--out", str(tmp_path / "ok"), "--split", "all"]) == 0
    assert "Dice" in capsys.readouterr().out
    assert cli.main(["predict", ckpt, f"{dataset}/img", "--out", str(tmp_path / "pr")]) == 0
    assert cli.main(["synth", "-n", "2", "--size", "16", "--out", str(tmp_path / "sy")]) == 0
    assert cli.main(["train", "--set", "nonsense=1"]) == 2
    assert cli.main(["train", "--set", "mode=single", "--set", "heads=seg_and_dt"]) == 2
    assert cli.main(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "x")]) == 3
    assert cli.main(["eval", str(tmp_path / "ok" / "config.txt"), *base]) == 3
    assert cli.main(["train", *base, "--set", "lr=1e30", "--set", "epochs=3", "--out", str(tmp_path / "div")]) == 4
    assert "diverged" in capsys.readouterr().err


def test_seg_only_checkpoint_into_dual_run(dataset, tmp_path):
    res = trainer.train(tiny(dataset, tmp_path / "s1", mode="single", epochs=1))
    from vesselmtl.errors import ParameterSetError
    from vesselmtl.model import load_checkpoint

    with pytest.raises(ParameterSetError, match="dt.out.weight"):
        load_checkpoint(res.last_path, expected=tiny(dataset, tmp_path).model_config())


def test_tiny_compare(dataset, tmp_path):
    cfg = trainer.compare_base().with_overrides(dict(TINY, epochs="1", data=dataset, out=str(tmp_path / "cmp")))
    summary = trainer.run_compare(cfg, [0, 1])
    assert list(summary) == ["proposed", "multitask-fixed", "single"]
    with open(tmp_path / "cmp" / "comparison.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["method", "Dice", "IoU"]
    assert [r[0] for r in rows[1:]] == ["proposed", "multitask-fixed", "single"]
    with open(tmp_path / "cmp" / "runs.csv") as fh:
        runs = list(csv.DictReader(fh))
    assert len(runs) == 6 and len({r["split_sha256"] for r in runs}) == 1
    splits = {p.read_text() for p in (tmp_path / "cmp").glob("*/seed*/splits.txt")}
    assert len(splits) == 1
    assert "split_sha256=" in (tmp_path / "cmp" / "manifest.txt").read_text()
