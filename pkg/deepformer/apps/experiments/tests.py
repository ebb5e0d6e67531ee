# apps/experiments/tests.py
import csv
import io
import json
import tempfile
from pathlib import Path

import numpy as np
import pytest
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

from apps.architecture.config import BlockMode
from apps.architecture.model import INIT_SCHEME, Transformer
from apps.corpus.tasks import ParallelCorpus, TaskSpec, gen_task
from apps.evalmetrics.bleu import sentence_stats
from apps.evalmetrics.bootstrap import paired_bootstrap
from apps.exceptions import ConfigurationError, DataError, FoldingError
from apps.experiments.checkpoints import METADATA_FILE, PARAMS_FILE, Checkpoint, load_checkpoint, save_checkpoint
from apps.experiments.runconfig import InitMode, RunConfig, SweepCell, load_run_config, parse_ini
from apps.experiments.runner import (
    CHECKPOINT_DIR,
    DATA_DIR,
    HYPOTHESES_FILE,
    MATRIX_FILE,
    RESULT_FILE,
    RESULTS_FILE,
    build_corpus,
    build_model,
    decode_sentences,
    evaluate_checkpoint,
    fold_checkpoint,
    run_sweep,
    run_training,
    sample_batches,
    significance_matrix,
)
from apps.training.optim import OptimizerState
from apps.training.schedule import lr_at_step

CONFIGS_DIR = Path(settings.BASE_DIR) / "configs"


class BaseExperimentTestCase(SimpleTestCase):
    """실험 테스트의 공통 기능"""

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def config_dict(self, model=None, task=None, **run):
        """1L-1L, 폭 16 의 작은 실험 설정"""
        data = {
            "model": {"n_enc_layers": 1, "n_dec_layers": 1, "d_model": 16, "d_ff": 32, "n_heads": 2, "max_len": 16},
            "schedule": {"warmup_steps": 10, "peak_lr": 0.003},
            "task": {
                "kind": "reverse_substitute",
                "vocab_size": 12,
                "min_len": 2,
                "max_len": 5,
                "train_size": 60,
                "dev_size": 10,
                "test_size": 10,
            },
            "run": {"init": "admin", "seed": 0, "epochs": 1, "token_budget": 128, "profiling_tokens": 128},
        }
        data["model"].update(model or {})
        data["task"].update(task or {})
        data["run"].update(run)
        return data

    def make_config(self, **kwargs):
        return RunConfig.from_dict(self.config_dict(**kwargs))

    def write_ini(self, text, name="run.ini"):
        path = self.tmp / name
        path.write_text(text, encoding="utf-8")
        return path

    def write_json(self, data, name="run.json"):
        path = self.tmp / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    def read_rows(self, path):
        with open(path, newline="", encoding="utf-8") as stream:
            return list(csv.reader(stream))


class RunConfigTestCase(BaseExperimentTestCase):
    """INI / JSON 실험 설정"""

    def test_ini_defaults(self):
        """비어 있는 섹션은 settings 의 기본값을 쓴다"""
        config = load_run_config(self.write_ini("[model]\n[run]\n"))
        defaults = settings.DEEPFORMER
        self.assertEqual(config.model.d_model, defaults["MODEL_PRESETS"]["desk"]["d_model"])
        self.assertEqual((config.model.n_enc_layers, config.model.n_dec_layers), (6, 6))
        self.assertEqual(config.schedule.warmup_steps, defaults["SCHEDULE_PRESETS"]["fr"]["warmup_steps"])
        self.assertEqual(config.task.vocab_size, defaults["TASK"]["vocab_size"])
        self.assertEqual(config.model.src_vocab_size, config.task.vocab_size)
        self.assertEqual(config.budget, defaults["TOKEN_BUDGET"])
        self.assertIs(config.init_mode, InitMode.DEFAULT)
        self.assertIs(config.model.block_mode, BlockMode.POSTLN)

    def test_ini_values(self):
        """INI 문자열 값을 형 변환하고 빈 값은 지정하지 않은 것으로 본다"""
        config = load_run_config(
            self.write_ini(
                "[model]\nn_enc_layers = 3\nn_dec_layers = 2  # 얕은 디코더\n"
                "[schedule]\npreset = de\n"
                "[task]\nvocab_size = 20\nmax_len = 9\nseed = 4\n"
                "[run]\ninit = admin\nseed = 7\nclip_norm =\nper_feature = true\n"
            )
        )
        self.assertEqual((config.model.n_enc_layers, config.model.n_dec_layers), (3, 2))
        self.assertEqual(config.schedule.peak_lr, 0.001)
        self.assertEqual(config.task.vocab_size, 20)
        self.assertEqual(config.data_seed, 4)
        self.assertEqual(config.seed, 7)
        self.assertIsNone(config.clip_norm)
        self.assertTrue(config.per_feature)
        self.assertIs(config.model.block_mode, BlockMode.ADMIN)

    def test_flat_json(self):
        """평평한 JSON 은 키 이름으로 섹션을 찾는다"""
        config = load_run_config(
            self.write_json({"n_enc_layers": 2, "seed": 3, "warmup_steps": 10, "peak_lr": 0.01, "vocab_size": 16})
        )
        self.assertEqual(config.model.n_enc_layers, 2)
        self.assertEqual(config.seed, 3)
        self.assertEqual(config.schedule.warmup_steps, 10)
        self.assertEqual(config.model.tgt_vocab_size, 16)

    def test_to_dict_round_trip(self):
        """저장한 config.json 을 다시 읽으면 같은 설정이다"""
        config = self.make_config()
        path = self.tmp / "config.json"
        config.save(path)
        self.assertEqual(load_run_config(path).to_dict(), config.to_dict())

    def test_overrides(self):
        config = self.make_config().with_overrides(seed=5, out=self.tmp, epochs=0, dtype="float64")
        self.assertEqual(config.seed, 5)
        self.assertEqual(config.out, str(self.tmp))
        self.assertEqual(config.epochs, 0)
        self.assertEqual(config.model.dtype, "float64")

    def test_invalid_configs(self):
        """잘못된 설정은 ValidationError / ConfigurationError"""
        invalid = [
            self.config_dict(model={"block_mode": "preln"}),
            self.config_dict(model={"max_len": 5}),
            self.config_dict(model={"d_model": 15}),
            self.config_dict(model={"preset": "huge"}),
            self.config_dict(task={"min_len": 6}),
            self.config_dict(init="lucky"),
            self.config_dict(explosion_factor=0.5),
            self.config_dict(clip_norm=-1.0),
        ]
        for data in invalid:
            with self.subTest(data=data):
                with self.assertRaises(ValidationError):
                    RunConfig.from_dict(data)
        with self.assertRaises(ConfigurationError):
            parse_ini("[model]\n[gpu]\ncount = 8\n")
        with self.assertRaises(ConfigurationError):
            RunConfig.from_dict({"learning_rate": 0.1})
        with self.assertRaises(ConfigurationError):
            load_run_config(self.tmp / "missing.ini")

    def test_sweep_cells(self):
        """셀은 N L-M L:init 으로 정규화되고 셀마다 설정이 만들어진다"""
        data = self.config_dict()
        data["sweep"] = {"cells": "8L-2L:admin, 2L-8L", "seeds": "0, 1, 2"}
        config = RunConfig.from_dict(data)
        self.assertEqual([cell.label for cell in config.cells], ["8L-2L:admin", "2L-8L:default"])
        self.assertEqual(config.seeds, (0, 1, 2))

        cell_config = config.for_cell(config.cells[1], seed=2)
        self.assertEqual((cell_config.model.n_enc_layers, cell_config.model.n_dec_layers), (2, 8))
        self.assertIs(cell_config.model.block_mode, BlockMode.POSTLN)
        self.assertIs(cell_config.init_mode, InitMode.DEFAULT)
        self.assertEqual(cell_config.seed, 2)
        self.assertEqual(SweepCell.parse("8L-2L").label, "8L-2L:default")

        data["sweep"] = {"cells": "8L-2L, 8L-2L:default"}
        with self.assertRaises(ValidationError):
            RunConfig.from_dict(data)
        data["sweep"] = {"cells": "8-2"}
        with self.assertRaises(ValidationError):
            RunConfig.from_dict(data)

    def test_shipped_configs_load(self):
        """저장소에 들어 있는 설정 파일은 모두 읽힌다"""
        for name in ("desk.ini", "acceptance.ini", "depth_sweep.ini", "admin_ladder.ini"):
            with self.subTest(name=name):
                load_run_config(CONFIGS_DIR / name)
        acceptance = load_run_config(CONFIGS_DIR / "acceptance.ini")
        self.assertEqual(acceptance.model.label, "24L-6L")
        self.assertIsNone(acceptance.clip_norm)
        self.assertEqual(acceptance.seeds, (0, 1, 2, 3, 4))
        self.assertEqual((acceptance.explosion_factor, acceptance.patience), (2.5, 20))

    def test_acceptance_effective_learning_rate(self):
        """acceptance 스케줄 × RAdam 보정 계수: 초반엔 작고 warmup 뒤에는 3e-3 을 넘는다"""
        schedule = load_run_config(CONFIGS_DIR / "acceptance.ini").schedule
        state = OptimizerState(**settings.DEEPFORMER["RADAM"])

        def effective(t):
            return lr_at_step(t, schedule) * state.rectification(t)

        self.assertIsNone(state.rectification(1))
        self.assertLess(effective(100), 1e-3)
        self.assertGreater(effective(600), 3e-3)
        self.assertGreater(effective(600), 5 * effective(100))


class CheckpointTestCase(BaseExperimentTestCase):
    """checkpoint.json + params.bin"""

    def make_checkpoint(self, **run):
        config = self.make_config(**run)
        corpus = gen_task(config.task, 0)
        model, _ = build_model(config, corpus.encode().train)
        return Checkpoint(model, corpus.vocab, step=3, run_config=config.to_dict())

    def test_save_load_save_identical_bytes(self):
        """읽고 다시 저장하면 두 파일이 바이트 단위로 같다"""
        for dtype in ("float32", "float64"):
            with self.subTest(dtype=dtype):
                first, second = self.tmp / f"{dtype}-a", self.tmp / f"{dtype}-b"
                save_checkpoint(self.make_checkpoint(dtype=dtype), first)
                save_checkpoint(load_checkpoint(first), second)
                for name in (METADATA_FILE, PARAMS_FILE):
                    self.assertEqual((first / name).read_bytes(), (second / name).read_bytes())

    def test_loaded_model_identical_logits(self):
        """읽은 모델의 logits 는 원래 모델과 비트 단위로 같다"""
        checkpoint = self.make_checkpoint()
        save_checkpoint(checkpoint, self.tmp / "ckpt")
        loaded = load_checkpoint(self.tmp / "ckpt")
        self.assertEqual(loaded.step, 3)
        self.assertEqual(loaded.init_mode, "admin")
        self.assertEqual(loaded.vocab, checkpoint.vocab)
        self.assertIsNotNone(loaded.model.omega_profile)
        for batch in sample_batches(checkpoint.vocab, checkpoint.model.config, seed=0, n_batches=2):
            np.testing.assert_array_equal(
                loaded.model.forward(batch).data, checkpoint.model.forward(batch).data
            )

    def test_metadata_layout(self):
        checkpoint = self.make_checkpoint(init="default", dtype="float64")
        save_checkpoint(checkpoint, self.tmp / "ckpt")
        metadata = json.loads((self.tmp / "ckpt" / METADATA_FILE).read_text())
        self.assertEqual(metadata["format_version"], 1)
        self.assertEqual(metadata["endianness"], "little")
        self.assertEqual(metadata["float_width"], 64)
        self.assertEqual(metadata["init_mode"], "default")
        self.assertEqual(metadata["init_scheme"], INIT_SCHEME)
        self.assertIsNone(metadata["omegas"])
        self.assertEqual(metadata["parameters"][0]["offset"], 0)
        total = sum(entry["count"] for entry in metadata["parameters"])
        self.assertEqual((self.tmp / "ckpt" / PARAMS_FILE).stat().st_size, 8 * total)

    def test_rejects_damaged_checkpoints(self):
        """없는 디렉터리, 잘린 params.bin, 깨진 색인은 DataError"""
        with self.assertRaises(DataError):
            load_checkpoint(self.tmp / "missing")

        save_checkpoint(self.make_checkpoint(), self.tmp / "ckpt")
        params = self.tmp / "ckpt" / PARAMS_FILE
        params.write_bytes(params.read_bytes()[:-4])
        with self.assertRaises(DataError):
            load_checkpoint(self.tmp / "ckpt")

        save_checkpoint(self.make_checkpoint(), self.tmp / "ckpt2")
        path = self.tmp / "ckpt2" / METADATA_FILE
        metadata = json.loads(path.read_text())
        metadata["parameters"][1]["offset"] += 1
        path.write_text(json.dumps(metadata))
        with self.assertRaises(DataError):
            load_checkpoint(self.tmp / "ckpt2")


class RunnerTestCase(BaseExperimentTestCase):
    """학습 실행, 평가, 폴딩, sweep"""

    def test_run_directory(self):
        """run 디렉터리에 설정, 프로파일, 곡선, 체크포인트, RESULT 가 남는다"""
        out = self.tmp / "run"
        result = run_training(self.make_config(), out)
        for name in ("config.json", "profile.json", "steps.csv", "epochs.csv", RESULT_FILE, HYPOTHESES_FILE):
            self.assertTrue((out / name).exists(), name)
        self.assertTrue(ParallelCorpus.exists(out / DATA_DIR))
        self.assertEqual(self.read_rows(out / "steps.csv")[0], ["step", "lr", "loss", "grad_norm", "nan_flag"])
        self.assertEqual(len(self.read_rows(out / "epochs.csv")), 2)

        line = (out / RESULT_FILE).read_text().strip()
        self.assertEqual(line, result.result_line())
        self.assertFalse(result.diverged)
        self.assertTrue(line.startswith("RESULT=ok dev_ppl="))
        self.assertEqual(load_checkpoint(out / CHECKPOINT_DIR).step, result.step)
        self.assertEqual(result.stats.shape, (10, 10))

    def test_zero_epochs_saves_initial_model(self):
        """epochs=0 이면 초기화된 모델만 저장한다"""
        config = self.make_config(init="default", epochs=0)
        result = run_training(config, self.tmp / "run")
        checkpoint = load_checkpoint(self.tmp / "run" / CHECKPOINT_DIR)
        initial = Transformer.initialize(config.model, config.seed)
        self.assertEqual(checkpoint.step, 0)
        for name, param in initial.params.items():
            np.testing.assert_array_equal(checkpoint.model.params[name].data, param.data)
        self.assertEqual(len(self.read_rows(self.tmp / "run" / "steps.csv")), 1)
        self.assertIsNotNone(result.final_dev_ppl)

    def test_rerun_from_stored_config(self):
        """저장된 config.json 으로 다시 돌리면 곡선이 바이트 단위로 같다"""
        run_training(self.make_config(epochs=2), self.tmp / "a")
        stored = load_run_config(self.tmp / "a" / "config.json")
        run_training(stored, self.tmp / "b")
        for name in ("steps.csv", "epochs.csv", RESULT_FILE):
            self.assertEqual((self.tmp / "a" / name).read_bytes(), (self.tmp / "b" / name).read_bytes())

    def test_build_corpus_from_directory(self):
        config = self.make_config()
        gen_task(config.task, 0).save(self.tmp / "data")
        corpus = build_corpus(config, self.tmp / "data")
        self.assertEqual(len(corpus.train), 60)
        with self.assertRaises(DataError):
            build_corpus(config, self.tmp / "missing")
        gen_task(TaskSpec(vocab_size=20, min_len=2, max_len=5, train_size=10, dev_size=2, test_size=2), 0).save(
            self.tmp / "other"
        )
        with self.assertRaises(DataError):
            build_corpus(config, self.tmp / "other")

    def test_evaluate_identical_checkpoints(self):
        """같은 체크포인트끼리 bootstrap 하면 p = 1"""
        run_training(self.make_config(), self.tmp / "run")
        checkpoint = self.tmp / "run" / CHECKPOINT_DIR
        report, hypotheses = evaluate_checkpoint(
            checkpoint, self.tmp / "run" / DATA_DIR, baseline_dir=checkpoint, n_samples=50
        )
        self.assertEqual(len(hypotheses), 10)
        self.assertEqual(report.bootstrap["p_value"], 1.0)
        self.assertEqual(report.bootstrap["win_rate"], 0.0)
        expected = [line.split() for line in (self.tmp / "run" / HYPOTHESES_FILE).read_text().splitlines()]
        self.assertEqual([list(h) for h in hypotheses], expected)

    def test_evaluate_vocab_mismatch(self):
        """체크포인트와 코퍼스의 어휘가 다르면 DataError"""
        run_training(self.make_config(epochs=0), self.tmp / "run")
        gen_task(TaskSpec(vocab_size=20, min_len=2, max_len=5, train_size=10, dev_size=2, test_size=2), 0).save(
            self.tmp / "other"
        )
        with self.assertRaises(DataError):
            evaluate_checkpoint(self.tmp / "run" / CHECKPOINT_DIR, self.tmp / "other")

    def test_fold_checkpoint(self):
        """접은 체크포인트는 같은 logits 와 같은 디코딩 결과를 낸다"""
        run_training(self.make_config(epochs=2, dtype="float64"), self.tmp / "run")
        folded, deviation = fold_checkpoint(self.tmp / "run" / CHECKPOINT_DIR, self.tmp / "folded", n_batches=3)
        self.assertLess(deviation, 1e-10)
        self.assertIs(folded.model.block_mode, BlockMode.POSTLN)
        self.assertEqual(folded.init_mode, "admin")

        original = load_checkpoint(self.tmp / "run" / CHECKPOINT_DIR)
        reloaded = load_checkpoint(self.tmp / "folded")
        self.assertEqual(reloaded.init_mode, "admin")
        self.assertIs(reloaded.model.block_mode, BlockMode.POSTLN)
        sources = [pair.src for pair in ParallelCorpus.load(self.tmp / "run" / DATA_DIR).test]
        self.assertEqual(
            decode_sentences(original.model, original.vocab, sources),
            decode_sentences(reloaded.model, reloaded.vocab, sources),
        )
        with self.assertRaises(FoldingError):
            fold_checkpoint(self.tmp / "folded", self.tmp / "twice")

    def test_fold_rejects_default_checkpoint(self):
        run_training(self.make_config(init="default", epochs=0), self.tmp / "run")
        with self.assertRaises(FoldingError):
            fold_checkpoint(self.tmp / "run" / CHECKPOINT_DIR, self.tmp / "folded")

    def test_significance_matrix(self):
        """행렬은 대각선이 = 이고 반대칭이다"""
        references = [f"a{i} b{i} c{i} d{i} e{i}".split() for i in range(30)]
        stats = {
            "good": sentence_stats(references, references),
            "same": sentence_stats(references, references),
            "bad": sentence_stats([["z"] * 5 for _ in references], references),
        }
        matrix = significance_matrix(["good", "same", "bad"], stats, n_samples=100)
        self.assertEqual([matrix[x, x] for x in stats], ["=", "=", "="])
        self.assertEqual(matrix["good", "bad"], "+")
        self.assertEqual(matrix["bad", "good"], "-")
        self.assertEqual(matrix["good", "same"], "=")
        self.assertEqual(matrix["same", "good"], "=")

    def test_sweep_single_cell(self):
        """셀 하나짜리 sweep 은 1x1 행렬 = 이다"""
        data = self.config_dict()
        data["sweep"] = {"cells": "1L-1L:admin", "seeds": "0"}
        results, matrix = run_sweep(RunConfig.from_dict(data), self.tmp / "sweep", n_samples=20)
        self.assertEqual(len(results), 1)
        self.assertEqual(matrix, {("1L-1L:admin", "1L-1L:admin"): "="})
        rows = self.read_rows(self.tmp / "sweep" / RESULTS_FILE)
        self.assertEqual(rows[0][:3], ["cell", "seed", "status"])
        self.assertEqual(rows[1][:3], ["1L-1L:admin", "0", "ok"])
        self.assertEqual(self.read_rows(self.tmp / "sweep" / MATRIX_FILE), [["", "1L-1L:admin"], ["1L-1L:admin", "="]])
        self.assertTrue((self.tmp / "sweep" / "cells" / "1L-1L-admin" / "seed0" / RESULT_FILE).exists())

    def test_sweep_requires_cells(self):
        with self.assertRaises(DataError):
            run_sweep(self.make_config(), self.tmp / "sweep")


class CommandTestCase(BaseExperimentTestCase):
    """management command 와 종료 코드"""

    def call(self, name, **options):
        stdout = io.StringIO()
        call_command(name, stdout=stdout, **options)
        return stdout.getvalue()

    def assert_exit_code(self, code, name, **options):
        with self.assertRaises(CommandError) as context:
            self.call(name, **options)
        self.assertEqual(context.exception.returncode, code)

    def test_profile(self):
        """1L-1L 프로파일은 가지 5 개이고 다시 돌리면 같은 바이트다"""
        path = self.write_json(self.config_dict())
        output = self.call("profile", config=str(path), out=str(self.tmp / "p1"))
        self.call("profile", config=str(path), out=str(self.tmp / "p2"))
        profile = json.loads((self.tmp / "p1" / "profile.json").read_text())
        self.assertEqual(len(profile["branch_variances"]), 5)
        self.assertEqual(profile["chain_layout"], {"encoder": 2, "decoder": 3})
        self.assertEqual(profile["omegas"][0], 1.0)
        self.assertEqual((self.tmp / "p1" / "profile.json").read_bytes(), (self.tmp / "p2" / "profile.json").read_bytes())
        self.assertIn("enc.0.attn", output)

    def test_train_prints_result(self):
        path = self.write_json(self.config_dict(init="default"))
        output = self.call("train", config=str(path), out=str(self.tmp / "run"), epochs=0, seed=3)
        self.assertIn("RESULT=ok", output)
        self.assertEqual(load_run_config(self.tmp / "run" / "config.json").seed, 3)
        self.assertTrue((self.tmp / "run" / CHECKPOINT_DIR / PARAMS_FILE).exists())

    def test_f64_flag(self):
        path = self.write_json(self.config_dict(init="default"))
        self.call("train", config=str(path), out=str(self.tmp / "run"), epochs=0, f64=True)
        self.assertEqual(load_checkpoint(self.tmp / "run" / CHECKPOINT_DIR).model.config.dtype, "float64")

    def test_eval_and_fold(self):
        """train -> fold -> eval 의 BLEU 가 접기 전과 같다"""
        path = self.write_json(self.config_dict(dtype="float64"))
        self.call("train", config=str(path), out=str(self.tmp / "run"))
        data = str(self.tmp / "run" / DATA_DIR)
        output = self.call("fold", checkpoint=str(self.tmp / "run" / CHECKPOINT_DIR), out=str(self.tmp / "folded"))
        self.assertIn("max_logit_deviation=", output)

        self.call("eval", checkpoint=str(self.tmp / "run" / CHECKPOINT_DIR), data=data, out=str(self.tmp / "e1"))
        self.call("eval", checkpoint=str(self.tmp / "folded"), data=data, out=str(self.tmp / "e2"))
        before = json.loads((self.tmp / "e1" / "report.json").read_text())
        after = json.loads((self.tmp / "e2" / "report.json").read_text())
        self.assertEqual(before["bleu"], after["bleu"])
        self.assertEqual(before["counts"], after["counts"])

    def test_gen_data(self):
        path = self.write_json(self.config_dict())
        self.call("gen_data", config=str(path), out=str(self.tmp / "data"))
        corpus = ParallelCorpus.load(self.tmp / "data")
        self.assertEqual((len(corpus.train), len(corpus.dev), len(corpus.test)), (60, 10, 10))

    def test_usage_errors_exit_2(self):
        """설정, 데이터, 폴딩 오류는 종료 코드 2"""
        bad = self.write_ini("[model]\nblock_mode = preln\n[run]\ninit = admin\n")
        self.assert_exit_code(2, "train", config=str(bad), out=str(self.tmp / "bad"))
        self.assert_exit_code(2, "profile", config=str(self.tmp / "missing.ini"))
        self.assert_exit_code(2, "eval", checkpoint=str(self.tmp / "none"), data=str(self.tmp / "none"))

        path = self.write_json(self.config_dict(init="default"))
        self.call("train", config=str(path), out=str(self.tmp / "run"), epochs=0)
        self.assert_exit_code(2, "fold", checkpoint=str(self.tmp / "run" / CHECKPOINT_DIR))


class AcceptanceTestCase(BaseExperimentTestCase):
    """설정 파일 그대로 돌리는 desk 규모 실험 (수 분 ~ 수십 분)"""

    @pytest.mark.slow
    def test_deep_stability_default_vs_admin(self):
        """24L-6L: 기본 초기화는 대부분 발산하고 admin 은 발산 없이 학습된다"""
        config = load_run_config(CONFIGS_DIR / "acceptance.ini")
        corpus = build_corpus(config)
        runs = {InitMode.DEFAULT: [], InitMode.ADMIN: []}
        for seed in config.seeds:
            for mode, results in runs.items():
                cell = SweepCell(24, 6, mode)
                results.append(run_training(config.for_cell(cell, seed), self.tmp / f"{mode.value}-{seed}", corpus))

        self.assertGreaterEqual(sum(r.diverged for r in runs[InitMode.DEFAULT]), 3)
        self.assertEqual(sum(r.diverged for r in runs[InitMode.ADMIN]), 0)
        for default, admin in zip(runs[InitMode.DEFAULT], runs[InitMode.ADMIN]):
            self.assertGreaterEqual(admin.test_seq_acc, 0.95)
            if default.best_dev_ppl is not None:
                self.assertLessEqual(admin.final_dev_ppl, default.best_dev_ppl)

    @pytest.mark.slow
    def test_admin_run_deterministic(self):
        """admin seed 0 을 두 번 돌리면 곡선 CSV 가 같다"""
        config = load_run_config(CONFIGS_DIR / "acceptance.ini")
        config = config.for_cell(SweepCell(24, 6, InitMode.ADMIN), 0)
        corpus = build_corpus(config)
        run_training(config, self.tmp / "a", corpus)
        run_training(config, self.tmp / "b", corpus)
        for name in ("steps.csv", "epochs.csv"):
            self.assertEqual((self.tmp / "a" / name).read_bytes(), (self.tmp / "b" / name).read_bytes())

    @pytest.mark.slow
    def test_depth_sweep_matrix(self):
        """8L-2L 대 2L-8L sweep 의 행렬이 독립적으로 다시 계산한 bootstrap 과 맞다"""
        config = load_run_config(CONFIGS_DIR / "depth_sweep.ini")
        results, matrix = run_sweep(config, self.tmp / "sweep", n_samples=200)
        self.assertEqual(len(results), 6)

        references = [pair.tgt for pair in ParallelCorpus.load(self.tmp / "sweep" / DATA_DIR).test]
        stats = {}
        for result in results:
            hypotheses = [line.split() for line in (Path(result.out_dir) / HYPOTHESES_FILE).read_text().splitlines()]
            stats.setdefault(result.label, []).append(sentence_stats(hypotheses, references))
        a, b = "8L-2L:admin", "2L-8L:admin"
        forward = paired_bootstrap(np.concatenate(stats[a]), np.concatenate(stats[b]), n_samples=200, seed=config.seed)
        backward = paired_bootstrap(np.concatenate(stats[b]), np.concatenate(stats[a]), n_samples=200, seed=config.seed)
        expected = "+" if forward.significant else "-" if backward.significant else "="
        self.assertEqual(matrix[a, b], expected)
        self.assertEqual(matrix[a, a], "=")
