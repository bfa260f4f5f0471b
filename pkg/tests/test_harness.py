"""Harness: preset table, config files, checkpoints, training determinism,
resume, evaluation reports, alignment export, and the CLI surface."""

import os
import subprocess
import sys

import numpy as np
import pytest

from lipseq.corpus import vocab
from lipseq.corpus.synth import SynthConfig, write_dataset
from lipseq.corpus.data import load_manifest
from lipseq.errors import ConfigError, DataError
from lipseq.gradcore import (Tensor, OptimizerState, save_checkpoint,
                             load_checkpoint, restore_optimizer)
from lipseq.harness import (ExperimentConfig, PRESETS, apply_preset,
                            parse_config_text, format_config, build_model,
                            run_training, run_eval, run_align, RecordLoader,
                            load_model_from_checkpoint, evaluate_greedy)
from lipseq.harness.align import alignment_for_record, save_alignment_pgm
from lipseq.frontend import load_pnm


def synth_pair(tmp_path, n_train=12, n_test=4, lengths=(4, 6), durations=(3, 5),
               noise=0.0, seed=100):
    train = write_dataset(SynthConfig(n_sentences=n_train, seed=seed,
                                      noise_sigma=noise, duration_range=durations,
                                      length_range=lengths), tmp_path / "train")
    test = write_dataset(SynthConfig(n_sentences=n_test, seed=seed + 1,
                                     noise_sigma=noise, duration_range=durations,
                                     length_range=lengths), tmp_path / "test")
    return train, test


def quick_config(preset="E", epochs=2, seed=7, **kw):
    cfg = apply_preset(ExperimentConfig(), preset)
    cfg.max_epochs = epochs
    cfg.seed = seed
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg.validate()


class TestPresets:
    def test_table_is_exhaustive_d_to_o(self):
        assert sorted(PRESETS) == list("DEFGHIJKLMNO")

    def test_presets_are_exclusive(self):
        combos = set()
        for letter in PRESETS:
            cfg = apply_preset(ExperimentConfig(), letter)
            combos.add((cfg.frontend, cfg.encoder, cfg.attention, cfg.loss))
        assert len(combos) == len(PRESETS)

    def test_single_field_derivations_of_e(self):
        from dataclasses import fields

        def diff_fields(a, b):
            return {f.name for f in fields(a)
                    if f.name != "preset" and getattr(a, f.name) != getattr(b, f.name)}

        e = apply_preset(ExperimentConfig(), "E")
        g = apply_preset(ExperimentConfig(), "G")
        h = apply_preset(ExperimentConfig(), "H")
        i = apply_preset(ExperimentConfig(), "I")
        assert diff_fields(g, e) == {"attention"} and g.attention == "none"
        assert diff_fields(h, e) == {"attention"} and h.attention == "monotonic"
        assert diff_fields(i, e) == {"loss"} and i.loss == "joint"

    def test_key_rows(self):
        k = apply_preset(ExperimentConfig(), "K")
        assert (k.frontend, k.encoder) == ("cnn2d", "bi1")
        d = apply_preset(ExperimentConfig(), "D")
        assert d.frontend == "zeros"
        n = apply_preset(ExperimentConfig(), "N")
        assert n.frontend == "cnn3d"
        l = apply_preset(ExperimentConfig(), "L")
        assert (l.frontend, l.loss) == ("cnn2d_rgb", "joint")
        m = apply_preset(ExperimentConfig(), "M")
        assert (m.frontend, m.loss) == ("cnn2d_64", "joint")

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            apply_preset(ExperimentConfig(), "Z")


class TestConfigFiles:
    def test_round_trip(self):
        cfg = quick_config("H", epochs=33, lr=0.002)
        back = parse_config_text(format_config(cfg))
        assert back == cfg

    def test_preset_expansion_with_override(self):
        cfg = parse_config_text("preset = E\nattention = bahdanau\nseed = 3\n")
        assert cfg.frontend == "dct"
        assert cfg.attention == "bahdanau"
        assert cfg.seed == 3

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            parse_config_text("no_such_key = 1\n")

    def test_bad_value(self):
        with pytest.raises(ConfigError):
            parse_config_text("lr = fast\n")

    def test_validation(self):
        with pytest.raises(ConfigError):
            parse_config_text("lambda_ctc = 1.5\n")
        with pytest.raises(ConfigError):
            parse_config_text("attention = flash\n")


class TestCheckpoint:
    def test_round_trip_with_optimizer(self, tmp_path, rng):
        params = {
            "w": Tensor(rng.normal(0, 1, (4, 3)).astype(np.float32),
                        requires_grad=True),
            "b": Tensor(rng.normal(0, 1, (3,)).astype(np.float32),
                        requires_grad=True),
            "scalar": Tensor(np.asarray(-4.0, dtype=np.float32),
                             requires_grad=True),
        }
        opt = OptimizerState(params, lr=0.002, clip_norm=10.0)
        opt.step = 17
        opt.m["w"] += 0.5
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, opt)
        back, opt_dict = load_checkpoint(path)
        assert list(back) == ["w", "b", "scalar"]
        np.testing.assert_array_equal(back["w"], params["w"].data)
        assert back["scalar"].shape == ()
        assert opt_dict["step"] == 17
        restored = restore_optimizer(opt_dict, params)
        np.testing.assert_array_equal(restored.m["w"], opt.m["w"])

    def test_without_optimizer(self, tmp_path, rng):
        params = {"w": Tensor(rng.normal(0, 1, (2, 2)).astype(np.float32))}
        save_checkpoint(tmp_path / "m.ckpt", params)
        back, opt = load_checkpoint(tmp_path / "m.ckpt")
        assert opt is None
        np.testing.assert_array_equal(back["w"], params["w"].data)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "junk.ckpt").write_bytes(b"NOTACKPT" + b"\0" * 16)
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "junk.ckpt")


class TestBuildModel:
    @pytest.mark.parametrize("letter", sorted(PRESETS))
    def test_all_presets_build(self, letter):
        model = build_model(quick_config(letter))
        assert len(model.params) == len(set(model.params))
        assert model.decoder.vocab == vocab.VOCAB_SIZE
        if model.config.loss == "joint":
            assert model.ctc_w is not None
        if model.config.frontend.startswith("cnn"):
            assert model.cnn is not None
            assert any(g == "conv" for g in model.groups.values())
        assert any(g == "recurrent" for g in model.groups.values())

    def test_same_seed_same_init(self):
        a = build_model(quick_config("E", seed=3))
        b = build_model(quick_config("E", seed=3))
        for name in a.params:
            np.testing.assert_array_equal(a.params[name].data,
                                          b.params[name].data)


class TestTraining:
    def test_deterministic_logs_and_checkpoints(self, tmp_path):
        train, test = synth_pair(tmp_path)
        outs = []
        for run in ("r1", "r2"):
            res = run_training(quick_config(epochs=2), train, tmp_path / run,
                               eval_manifest=test)
            outs.append(res)
        log1 = (tmp_path / "r1" / "train.log").read_bytes()
        log2 = (tmp_path / "r2" / "train.log").read_bytes()
        assert log1 == log2
        ck1 = (tmp_path / "r1" / "best.ckpt").read_bytes()
        ck2 = (tmp_path / "r2" / "best.ckpt").read_bytes()
        assert ck1 == ck2

    def test_resume_reproduces_uninterrupted_run(self, tmp_path):
        train, test = synth_pair(tmp_path, seed=200)
        full = run_training(quick_config(epochs=4), train, tmp_path / "full",
                            eval_manifest=test)
        run_training(quick_config(epochs=2), train, tmp_path / "split",
                     eval_manifest=test)
        resumed = run_training(quick_config(epochs=4), train, tmp_path / "split",
                               eval_manifest=test, resume=True)
        assert resumed.epochs_run == 4
        a = (tmp_path / "full" / "last.ckpt").read_bytes()
        b = (tmp_path / "split" / "last.ckpt").read_bytes()
        assert a == b
        # the resumed log contains exactly the tail of the full log
        full_lines = (tmp_path / "full" / "train.log").read_text().splitlines()
        split_lines = (tmp_path / "split" / "train.log").read_text().splitlines()
        assert split_lines[-3:] == full_lines[-3:]

    def test_held_out_split_when_no_eval_manifest(self, tmp_path):
        train, _ = synth_pair(tmp_path, seed=300)
        res = run_training(quick_config(epochs=1), train, tmp_path / "run")
        assert res.epochs_run == 1

    def test_joint_loss_logs_both_components(self, tmp_path):
        train, test = synth_pair(tmp_path, seed=400)
        res = run_training(quick_config("I", epochs=1), train, tmp_path / "runI",
                           eval_manifest=test)
        assert "ctc=" in res.log_lines[0]
        assert res.history[0]["ctc"] is not None

    def test_cached_dct_features_train_identically(self, tmp_path):
        cfg = SynthConfig(n_sentences=8, seed=5, length_range=(4, 6),
                          duration_range=(3, 5))
        man = write_dataset(cfg, tmp_path / "d", cache_dct=True)
        man_dct = tmp_path / "d" / "manifest_dct.tsv"
        assert man_dct.exists()
        run_training(quick_config(epochs=2, seed=1), man, tmp_path / "r1")
        run_training(quick_config(epochs=2, seed=1), str(man_dct), tmp_path / "r2")
        assert (tmp_path / "r1" / "best.ckpt").read_bytes() == \
            (tmp_path / "r2" / "best.ckpt").read_bytes()


@pytest.fixture(scope="module")
def overfit_run(tmp_path_factory):
    """A deliberately tiny, noiseless corpus trained to full memorisation."""
    tmp = tmp_path_factory.mktemp("overfit")
    train, _ = synth_pair(tmp, n_train=10, n_test=2, lengths=(3, 5),
                          durations=(3, 5), noise=0.0, seed=500)
    cfg = quick_config("E", epochs=300, seed=21, batch_size=4,
                       keep_input=1.0, keep_state=1.0, keep_output=1.0,
                       sampling_prob=0.0, patience=300, train_eval_beam=1)
    out = tmp / "run"
    res = run_training(cfg, train, out, eval_manifest=train)
    return train, out, res


class TestEvaluation:
    def test_overfit_model_scores_100_with_diagonal_confusion(self, overfit_run):
        train, out, res = overfit_run
        assert res.best_acc == 100.0
        result = run_eval(out / "best.ckpt", train, out_dir=out / "eval")
        assert result.accuracy == 100.0
        conf = result.confusion.counts
        assert np.all(conf == np.diag(np.diag(conf)))
        assert (out / "eval" / "eval_report.txt").exists()
        assert (out / "eval" / "confusion.txt").exists()

    def test_beam1_equals_greedy_report(self, overfit_run):
        train, out, _ = overfit_run
        r1 = run_eval(out / "best.ckpt", train, beam_width=1)
        model = load_model_from_checkpoint(out / "best.ckpt")
        loader = RecordLoader(model.config)
        counts = evaluate_greedy(model, load_manifest(train), loader,
                                 beam_width=1)
        assert r1.counts.accuracy == counts.accuracy

    def test_per_class_accuracy_recount(self, overfit_run):
        train, out, _ = overfit_run
        result = run_eval(out / "best.ckpt", train, beam_width=4)
        conf = result.confusion
        acc = conf.per_class_accuracy()
        for k in range(12):
            row = conf.counts[k].sum()
            if row:
                assert acc[k] == conf.counts[k, k] / row * 100.0

    def test_vocabulary_mismatch_rejected(self, overfit_run, tmp_path):
        train, out, _ = overfit_run
        params, _ = load_checkpoint(out / "best.ckpt")
        params["dec.embedding"] = params["dec.embedding"][:10]
        bad = {k: Tensor(v) for k, v in params.items()}
        save_checkpoint(tmp_path / "bad.ckpt", bad)
        import shutil
        shutil.copy(out / "config.txt", tmp_path / "config.txt")
        with pytest.raises(ConfigError, match="vocabulary|shape"):
            run_eval(tmp_path / "bad.ckpt", train)


class TestAlignmentExport:
    def test_content_alignment_rows_sum_to_one(self, overfit_run, tmp_path):
        train, out, _ = overfit_run
        rec = load_manifest(train)[0]
        matrix = run_align(out / "best.ckpt", train, rec.clip_id,
                           str(tmp_path / "align"))
        assert matrix.shape[1] == rec.n_frames
        np.testing.assert_allclose(matrix.sum(axis=1), 1.0, atol=1e-6)
        # text file round trip
        rows = [[float(v) for v in line.split("\t")]
                for line in (tmp_path / "align.txt").read_text().splitlines()]
        assert len(rows) == matrix.shape[0]
        img = load_pnm(str(tmp_path / "align.pgm"))
        assert img.shape[:2] == matrix.shape

    def test_dims_are_decoded_length_plus_one(self, overfit_run, tmp_path):
        train, out, _ = overfit_run
        model = load_model_from_checkpoint(out / "best.ckpt")
        loader = RecordLoader(model.config)
        rec = load_manifest(train)[1]
        matrix, tokens = alignment_for_record(model, rec, loader)
        assert matrix.shape == (len(tokens) + 1, rec.n_frames)

    def test_monotonic_hard_rows_one_hot_nondecreasing(self, tmp_path):
        train, test = synth_pair(tmp_path, n_train=8, seed=600)
        cfg = quick_config("H", epochs=1, monotonic_bias_init=0.0)
        res = run_training(cfg, train, tmp_path / "runH", eval_manifest=test)
        model = load_model_from_checkpoint(tmp_path / "runH" / "best.ckpt")
        # bias up so the untrained scan actually selects
        model.decoder.attention.r.data = np.asarray(2.0, dtype=np.float32)
        loader = RecordLoader(model.config)
        rec = load_manifest(train)[0]
        matrix, _ = alignment_for_record(model, rec, loader)
        positions = []
        for row in matrix:
            nz = np.nonzero(row)[0]
            assert len(nz) <= 1
            if len(nz):
                positions.append(nz[0])
        assert positions == sorted(positions)

    def test_attention_none_refused(self, tmp_path):
        train, test = synth_pair(tmp_path, n_train=6, seed=700)
        cfg = quick_config("G", epochs=1)
        run_training(cfg, train, tmp_path / "runG", eval_manifest=test)
        rec = load_manifest(train)[0]
        with pytest.raises(ConfigError, match="no alignment"):
            run_align(tmp_path / "runG" / "best.ckpt", train, rec.clip_id,
                      str(tmp_path / "x"))

    def test_pgm_scaling(self, tmp_path):
        m = np.array([[0.0, 0.5], [1.0, 0.25]])
        save_alignment_pgm(tmp_path / "t.pgm", m)
        img = load_pnm(str(tmp_path / "t.pgm"))
        np.testing.assert_allclose(img[:, :, 0] * 255,
                                   np.round(m / m.max() * 255), atol=0.5)


class TestCLI:
    def run_cli(self, *args):
        return subprocess.run([sys.executable, "-m", "lipseq", *args],
                              capture_output=True, text=True)

    def test_full_pipeline(self, tmp_path):
        data = tmp_path / "data"
        r = self.run_cli("synth", "--out", str(data), "--n", "8", "--seed", "3",
                         "--noise", "0.0", "--lengths", "4:6", "--durations", "3:5")
        assert r.returncode == 0, r.stderr
        manifest = str(data / "manifest.tsv")
        r = self.run_cli("train", "--manifest", manifest, "--out",
                         str(tmp_path / "run"), "--preset", "E", "--epochs", "2",
                         "--seed", "5")
        assert r.returncode == 0, r.stderr
        assert "epoch=0" in r.stdout
        r = self.run_cli("eval", "--checkpoint", str(tmp_path / "run" / "best.ckpt"),
                         "--manifest", manifest)
        assert r.returncode == 0, r.stderr
        assert "accuracy=" in r.stdout
        clip = load_manifest(manifest)[0].clip_id
        r = self.run_cli("align", "--checkpoint",
                         str(tmp_path / "run" / "best.ckpt"),
                         "--manifest", manifest, "--clip", clip,
                         "--out", str(tmp_path / "al"))
        assert r.returncode == 0, r.stderr
        assert (tmp_path / "al.pgm").exists()

    def test_synth_refuses_nonempty_without_force(self, tmp_path):
        data = tmp_path / "d"
        assert self.run_cli("synth", "--out", str(data), "--n", "2",
                            "--lengths", "4:5").returncode == 0
        r = self.run_cli("synth", "--out", str(data), "--n", "2",
                         "--lengths", "4:5")
        assert r.returncode == 3
        r = self.run_cli("synth", "--out", str(data), "--n", "2",
                         "--lengths", "4:5", "--force")
        assert r.returncode == 0

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("attention = flash\n")
        r = self.run_cli("train", "--manifest", "x.tsv", "--out",
                         str(tmp_path / "o"), "--config", str(bad))
        assert r.returncode == 2

    def test_synth_byte_reproducible(self, tmp_path):
        for d in ("a", "b"):
            assert self.run_cli("synth", "--out", str(tmp_path / d), "--n", "5",
                                "--seed", "7", "--lengths", "4:6").returncode == 0
        files_a = sorted((tmp_path / "a" / "clips").iterdir())
        files_b = sorted((tmp_path / "b" / "clips").iterdir())
        assert [f.name for f in files_a] == [f.name for f in files_b]
        for fa, fb in zip(files_a, files_b):
            assert fa.read_bytes() == fb.read_bytes()
        assert (tmp_path / "a" / "manifest.tsv").read_bytes() == \
            (tmp_path / "b" / "manifest.tsv").read_bytes()
