import hashlib
import subprocess
import sys
import time

import numpy as np
import pytest

from hierattn.cli import build_parser, main, read_config, resolve_seed, UsageError
from hierattn.data import ImageRecord, Manifest, load_manifest, write_image
from hierattn.data.synthetic import full_frame_image, scope_image, shape_image

SUBCOMMANDS = ["crop", "balance", "train", "eval", "bench", "params", "gradcheck", "plot-roc"]


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def shapes_manifest(root, per_class=8, size=32, classes=3, seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    for c in range(classes):
        for i in range(per_class):
            p = root / f"c{c}" / f"{i}.png"
            write_image(p, shape_image(c, size, rng))
            recs.append(ImageRecord(f"c{c}/{i}.png", f"c{c}"))
    Manifest(recs, root=root).save(root / "shapes.csv")
    return root / "shapes.csv"


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_documents_flags(cmd, capsys):
    with pytest.raises(SystemExit) as e:
        main([cmd, "--help"])
    assert e.value.code == 0
    text = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[cmd]
    for action in sub._actions:
        for opt in action.option_strings:
            assert opt in text


def test_unknown_flag_exits_one(capsys):
    with pytest.raises(SystemExit) as e:
        main(["params", "--variant", "s", "--bogus"])
    assert e.value.code == 1


def test_seed_fallback(monkeypatch):
    monkeypatch.delenv("HIERATTN_SEED", raising=False)
    assert resolve_seed(None) == 0
    monkeypatch.setenv("HIERATTN_SEED", "17")
    assert resolve_seed(None) == 17 and resolve_seed(4) == 4
    monkeypatch.setenv("HIERATTN_SEED", "x")
    with pytest.raises(UsageError):
        resolve_seed(None)


def test_params_s(capsys):
    code, out, _ = run(["params", "--variant", "s"], capsys)
    assert code == 0
    last = out.strip().splitlines()[-1]
    assert last.startswith("total")
    total = int(last.split()[1].replace(",", ""))
    assert abs(total - 2.14e6) / 2.14e6 <= 0.15


def test_gradcheck_ops(capsys):
    code, out, _ = run(["gradcheck", "--ops-only"], capsys)
    assert code == 0
    assert "max_rel_err=" in out


def test_bench(capsys):
    code, out, _ = run(["bench", "--variant", "tiny", "--iters", "2"], capsys)
    assert code == 0 and "mean_ms=" in out and "iterations=2" in out


def test_crop_dirs(tmp_path, capsys):
    rng = np.random.default_rng(0)
    disks, photos = tmp_path / "disks", tmp_path / "photos"
    for i in range(4):
        write_image(disks / f"{i}.png", scope_image(96, rng)[0])
        write_image(photos / f"{i}.jpg", full_frame_image(96, rng))
    code, out, _ = run(["crop", "--in", str(disks), "--out", str(tmp_path / "o1")], capsys)
    assert code == 0 and "cropped=4 passthrough=0" in out
    code, out, _ = run(["crop", "--in", str(photos), "--out", str(tmp_path / "o2")], capsys)
    assert code == 0 and "cropped=0 passthrough=4" in out
    assert len(list((tmp_path / "o2").iterdir())) == 4
    empty = tmp_path / "empty"
    empty.mkdir()
    code, out, _ = run(["crop", "--in", str(empty), "--out", str(tmp_path / "o3")], capsys)
    assert code == 0 and "total=0 cropped=0" in out


def test_crop_unreadable(tmp_path, capsys):
    src = tmp_path / "bad"
    src.mkdir()
    (src / "broken.png").write_bytes(b"not an image")
    code, out, _ = run(["crop", "--in", str(src), "--out", str(tmp_path / "o")], capsys)
    assert code == 2 and "failed=1" in out
    write_image(src / "ok.png", full_frame_image(64, np.random.default_rng(1)))
    code, out, _ = run(["crop", "--in", str(src), "--out", str(tmp_path / "o")], capsys)
    assert code == 0 and "failed=1" in out


def test_balance_names_and_determinism(tmp_path, capsys):
    man = shapes_manifest(tmp_path, per_class=6)
    # drop records so classes become 6, 4, 2
    m = load_manifest(man)
    keep = [r for r in m.records if not (r.label == "c1" and r.path.endswith(("4.png", "5.png")))
            and not (r.label == "c2" and int(r.path.split("/")[1][0]) >= 2)]
    Manifest(keep, root=tmp_path).save(man)
    outs = []
    for k in range(2):
        code, out, _ = run(["balance", "--manifest", str(man), "--strategy", "random", "--target", "4",
                            "--seed", "3", "--out", str(tmp_path / f"b{k}"), "--name", "TOY"], capsys)
        assert code == 0
        dest = tmp_path / f"b{k}" / "RandTOY12.csv"
        outs.append(dest)
        bal = load_manifest(dest)
        assert bal.counts == {"c0": 4, "c1": 4, "c2": 4}
    norm = [p.read_text().replace("b0", "bX").replace("b1", "bX") for p in outs]
    assert hashlib.sha256(norm[0].encode()).digest() == hashlib.sha256(norm[1].encode()).digest()
    code, _, _ = run(["balance", "--manifest", str(man), "--strategy", "ih", "--target", "4", "--seed", "3",
                      "--out", str(tmp_path / "ih"), "--name", "TOY"], capsys)
    assert code == 0 and (tmp_path / "ih" / "IHTOY12.csv").exists()


def test_balance_missing_manifest(tmp_path, capsys):
    code, _, err = run(["balance", "--manifest", str(tmp_path / "nope.csv"), "--strategy", "ih",
                        "--target", "3"], capsys)
    assert code == 2 and "data error" in err


def test_config_file(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('epochs = 4\nbatch_size = 8  # small\nvariant = "tiny"\nfreeze_warmup = false\n')
    assert read_config(cfg) == {"epochs": 4, "batch_size": 8, "variant": "tiny", "freeze_warmup": False}
    cfg.write_text("epochs = 4\nlearning_rate = 3\n")
    with pytest.raises(UsageError, match="learning_rate"):
        read_config(cfg)


def test_train_eval_plot(tmp_path, capsys):
    man = shapes_manifest(tmp_path, per_class=8)
    cfg = tmp_path / "run.toml"
    cfg.write_text("epochs = 9\nbatch_size = 8\nfolds = 4\nwarmup_epochs = 1\n")
    out = tmp_path / "run"
    t0 = time.perf_counter()
    code, text, err = run(["train", "--manifest", str(man), "--variant", "tiny", "--config", str(cfg),
                           "--epochs", "5", "--seed", "1", "--out", str(out)], capsys)
    assert code == 0, err
    assert time.perf_counter() - t0 < 300
    hist = (out / "history.csv").read_text().splitlines()
    assert hist[0] == "epoch,lr,train_loss,val_top1" and len(hist) == 6  # flag beat the file's epochs
    assert (out / "best.hack").exists() and (out / "final.hack").exists()

    code, text, err = run(["eval", "--checkpoint", str(out / "best.hack"), "--manifest", str(man),
                           "--out", str(tmp_path / "ev")], capsys)
    assert code == 0, err
    metrics = dict(line.split(",") for line in (tmp_path / "ev" / "metrics.csv").read_text().splitlines()[1:])
    assert 0 <= float(metrics["top1"]) <= 1 and int(metrics["samples"]) == 24
    assert (tmp_path / "ev" / "roc.svg").exists()
    cm = (tmp_path / "ev" / "confusion.csv").read_text().splitlines()
    assert sum(int(v) for line in cm[1:] for v in line.split(",")[1:]) == 24

    code, _, _ = run(["plot-roc", "--csv", str(tmp_path / "ev" / "roc.csv"), "--out", str(tmp_path / "r.svg")],
                     capsys)
    assert code == 0 and (tmp_path / "r.svg").exists()


def test_train_usage_errors(tmp_path, capsys):
    man = shapes_manifest(tmp_path, per_class=4)
    bad = tmp_path / "bad.toml"
    bad.write_text("epochz = 3\n")
    code, _, err = run(["train", "--manifest", str(man), "--config", str(bad), "--out", str(tmp_path / "o")],
                       capsys)
    assert code == 1 and "epochz" in err
    code, _, err = run(["train", "--manifest", str(man), "--epochs", "2", "--warmup-epochs", "5",
                        "--out", str(tmp_path / "o")], capsys)
    assert code == 1


def test_train_numeric_failure(tmp_path, capsys, monkeypatch):
    from hierattn.training import TrainingError
    man = shapes_manifest(tmp_path, per_class=4)

    def boom(*a, **k):
        raise TrainingError("non-finite loss", 0, 0)
    monkeypatch.setattr("hierattn.training.fit", boom)
    code, _, err = run(["train", "--manifest", str(man), "--epochs", "2", "--out", str(tmp_path / "o")], capsys)
    assert code == 3 and "numeric failure" in err


def test_eval_bad_checkpoint(tmp_path, capsys):
    man = shapes_manifest(tmp_path, per_class=2)
    (tmp_path / "x.hack").write_bytes(b"HACK\x01")
    code, _, err = run(["eval", "--checkpoint", str(tmp_path / "x.hack"), "--manifest", str(man),
                        "--out", str(tmp_path / "e")], capsys)
    assert code == 2


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "hierattn.cli", "params", "--variant", "tiny"],
                       capture_output=True, text=True, timeout=120)
    assert r.returncode == 0 and "total" in r.stdout
