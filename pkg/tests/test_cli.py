import json

import numpy as np
import pytest

from ectc import data_io, lattice, model, synth
from ectc.cli import main

TOY = ["--n-actions", "3", "--dim", "6", "--sigma", "0", "--drift", "0", "--segments", "2", "3",
       "--seg-len", "5", "8", "--n-videos", "6", "--n-test", "3"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


@pytest.fixture
def toy_dir(tmp_path, capsys):
    assert run(capsys, "synth", "--out", tmp_path / "d", *TOY)[0] == 0
    return tmp_path / "d"


def kv(line):
    return dict(part.split("=", 1) for part in line.split())


def test_synth_writes_splits_and_stats(toy_dir, capsys, tmp_path):
    assert len(data_io.read_corpus(toy_dir / "train.jsonl")) == 6
    assert len(data_io.read_corpus(toy_dir / "test.jsonl")) == 3
    code, out = run(capsys, "synth", "--out", tmp_path / "e", *TOY)
    lines = [kv(l) for l in out.out.splitlines()]
    assert [l["split"] for l in lines] == ["train", "test"]
    assert lines[0]["videos"] == "6" and float(lines[0]["within_cosine"]) == 1.0
    for name in ("train.jsonl", "test.jsonl", "vocab.txt"):
        assert (toy_dir / name).read_bytes() == (tmp_path / "e" / name).read_bytes()


def test_synth_spec_file(tmp_path, capsys):
    (tmp_path / "spec.json").write_text(json.dumps({"n_actions": 4, "n_videos": 2, "segments": [2, 2]}))
    code, _ = run(capsys, "synth", "--spec", tmp_path / "spec.json", "--out", tmp_path / "d", "--n-test", 1)
    assert code == 0
    assert all(len(r.ordering) == 2 for r in data_io.read_corpus(tmp_path / "d" / "train.jsonl"))


def test_synth_bad_flags(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--out", str(tmp_path), "--sigma", "lots"])
    assert exc.value.code == 2
    assert run(capsys, "synth", "--out", tmp_path, "--segments", "3", "1")[0] == 2
    assert run(capsys, "synth", "--out", tmp_path, "--anchors", "2.0")[0] == 2


def train(capsys, data, out, *extra):
    return run(capsys, "train", "--data", data, "--out", out, "--hidden", 8, "--epochs", 2,
               "--cluster-size", 3, *extra)


def test_train_logs_and_is_deterministic(toy_dir, tmp_path, capsys):
    code, out = train(capsys, toy_dir / "train.jsonl", tmp_path / "a.npz")
    assert code == 0
    epochs = [kv(l) for l in out.out.splitlines() if l.startswith("epoch=")]
    assert [e["epoch"] for e in epochs] == ["1", "2"]
    assert {"loss", "frame_acc"} <= set(epochs[0])
    code, again = train(capsys, toy_dir / "train.jsonl", tmp_path / "b.npz")
    assert again.out.replace("b.npz", "a.npz") == out.out
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()


@pytest.mark.parametrize("mode", ["weak", "uniform", "full"])
def test_train_modes(toy_dir, tmp_path, capsys, mode):
    assert train(capsys, toy_dir / "train.jsonl", tmp_path / "m.npz", "--mode", mode)[0] == 0
    _, _, config = data_io.load_checkpoint(tmp_path / "m.npz")
    assert config["mode"] == mode


def test_train_semi_needs_anchors(toy_dir, tmp_path, capsys):
    code, out = train(capsys, toy_dir / "train.jsonl", tmp_path / "m.npz", "--mode", "semi")
    assert code == 3 and "train-00000" in out.err
    code, _ = train(capsys, toy_dir / "train.jsonl", tmp_path / "m.npz", "--mode", "semi",
                    "--annot-fraction", "per-segment-1")
    assert code == 0


def test_train_infeasible_exit_code(toy_dir, tmp_path, capsys):
    code, out = run(capsys, "train", "--data", toy_dir / "train.jsonl", "--out", tmp_path / "m.npz",
                    "--hidden", 4, "--epochs", 1, "--similarity", "kmeans", "--cluster-size", 40)
    assert code == 3 and "record" in out.err


def test_train_numeric_exit_code(toy_dir, tmp_path, capsys, monkeypatch):
    def explode(*args, **kwargs):
        raise FloatingPointError("overflow in test")

    monkeypatch.setattr(model, "net_backward", explode)
    assert train(capsys, toy_dir / "train.jsonl", tmp_path / "m.npz")[0] == 4


def zero_checkpoint(path, vocab, d):
    data_io.save_checkpoint(path, model.zero_params(d, 4, vocab.A), vocab, model.TrainConfig(hidden=4).to_dict())


def test_eval_zero_model_is_chance(tmp_path, capsys):
    spec = synth.SyntheticSpec(n_actions=4, dim=5, n_videos=100)
    corpus = synth.generate_corpus(spec)
    data_io.write_corpus(corpus, tmp_path / "c.jsonl")
    zero_checkpoint(tmp_path / "z.npz", synth.vocab_for(spec), 5)
    code, out = run(capsys, "eval", "--data", tmp_path / "c.jsonl", "--checkpoint", tmp_path / "z.npz",
                    "--report", tmp_path / "r.jsonl")
    assert code == 0
    rows = [json.loads(l) for l in (tmp_path / "r.jsonl").read_text().splitlines()]
    assert len(rows) == 101 and rows[-1]["id"] == "__mean__"
    assert abs(rows[-1]["frame_acc"] - 0.25) < 0.05
    assert kv(out.out.splitlines()[-1])["videos"] == "100"


def test_eval_memorized_model_scores_one(toy_dir, tmp_path, capsys):
    code, _ = run(capsys, "train", "--data", toy_dir / "train.jsonl", "--out", tmp_path / "m.npz",
                  "--mode", "full", "--hidden", 16, "--epochs", 40, "--lr", 0.02)
    assert code == 0
    run(capsys, "eval", "--data", toy_dir / "train.jsonl", "--checkpoint", tmp_path / "m.npz",
        "--report", tmp_path / "r.jsonl")
    mean = json.loads((tmp_path / "r.jsonl").read_text().splitlines()[-1])
    assert mean["frame_acc"] == 1.0 and mean["unit_acc"] == 1.0 and mean["jaccard"] == 1.0


def test_eval_vocab_mismatch(toy_dir, tmp_path, capsys):
    zero_checkpoint(tmp_path / "z.npz", lattice.LabelVocab(("action_01", "action_00", "action_02")), 6)
    code, out = run(capsys, "eval", "--data", toy_dir / "test.jsonl", "--checkpoint", tmp_path / "z.npz")
    assert code == 5 and "vocabulary" in out.err
    # without a vocabulary file, unknown names are still caught
    (tmp_path / "solo").mkdir()
    (tmp_path / "solo" / "c.jsonl").write_bytes((toy_dir / "test.jsonl").read_bytes())
    zero_checkpoint(tmp_path / "y.npz", lattice.LabelVocab(("x", "y", "z")), 6)
    assert run(capsys, "eval", "--data", tmp_path / "solo" / "c.jsonl", "--checkpoint", tmp_path / "y.npz")[0] == 5


def test_align_full_supervision_is_ground_truth(toy_dir, tmp_path, capsys):
    zero_checkpoint(tmp_path / "z.npz", data_io.read_vocab(toy_dir / "vocab.txt"), 6)
    code, _ = run(capsys, "align", "--data", toy_dir / "train.jsonl", "--checkpoint", tmp_path / "z.npz",
                  "--out", tmp_path / "a.jsonl", "--mode", "full")
    assert code == 0
    corpus = data_io.read_corpus(toy_dir / "train.jsonl")
    rows = [json.loads(l) for l in (tmp_path / "a.jsonl").read_text().splitlines()]
    for rec, row in zip(corpus, rows):
        assert row["alignment"] == rec.frame_labels and row["frame_acc"] == 1.0


def test_align_keeps_anchors(tmp_path, capsys):
    spec = synth.SyntheticSpec(n_actions=3, dim=6, n_videos=5, anchors=0.3, seg_len=(6, 9))
    corpus = synth.generate_corpus(spec)
    data_io.write_corpus(corpus, tmp_path / "c.jsonl")
    vocab = synth.vocab_for(spec)
    data_io.save_checkpoint(tmp_path / "m.npz", model.init_params(6, 4, 3, seed=1), vocab,
                            model.TrainConfig(hidden=4, mode="semi", cluster_size=3).to_dict())
    assert run(capsys, "align", "--data", tmp_path / "c.jsonl", "--checkpoint", tmp_path / "m.npz",
               "--out", tmp_path / "a.jsonl")[0] == 0
    rows = [json.loads(l) for l in (tmp_path / "a.jsonl").read_text().splitlines()]
    for rec, row in zip(corpus, rows):
        for f, a in rec.annotations:
            assert row["alignment"][f] == a
        assert lattice.collapse(row["alignment"]) == rec.ordering


def test_check_default_passes(capsys):
    code, out = run(capsys, "check", "--trials", 3)
    assert code == 0 and "FAIL" not in out.out and "result=pass" in out.out


def test_check_zero_trials_is_noop(capsys):
    code, out = run(capsys, "check", "--trials", 0)
    assert code == 0


def test_check_catches_wrong_sign(capsys):
    code, out = run(capsys, "check", "--trials", 2, "--inject", "wrong-sign")
    assert code == 1 and "FAIL" in out.out


def test_check_is_deterministic(capsys):
    first = run(capsys, "check", "--trials", 2, "--seed", 5)[1].out
    assert run(capsys, "check", "--trials", 2, "--seed", 5)[1].out == first


def test_check_bad_sizes():
    with pytest.raises(SystemExit) as exc:
        main(["check", "--sizes", "3by6"])
    assert exc.value.code == 2


@pytest.mark.slow
def test_weak_alignment_beats_uniform_target(tmp_path, capsys):
    assert run(capsys, "synth", "--out", tmp_path / "d", "--n-videos", 40, "--n-test", 1)[0] == 0
    weak, uniform = [], []
    for seed in (0, 1):
        ckpt = tmp_path / f"m{seed}.npz"
        assert run(capsys, "train", "--data", tmp_path / "d" / "train.jsonl", "--out", ckpt, "--hidden", 32,
                   "--epochs", 6, "--cluster-size", 10, "--seed", seed)[0] == 0
        for mode, sink in (("weak", weak), ("uniform", uniform)):
            out = run(capsys, "align", "--data", tmp_path / "d" / "train.jsonl", "--checkpoint", ckpt,
                      "--out", tmp_path / "a.jsonl", "--mode", mode)[1].out
            sink.append(float(kv(out.splitlines()[-1])["frame_acc"]))
    assert np.mean(weak) >= np.mean(uniform)
