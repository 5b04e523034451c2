"""CLI wiring: subcommands, exit codes, artifact agreement."""

import csv
import json

import pytest

from moskit import cli
from tests.conftest import tiny_arch


def run_cli(*argv, capsys=None):
    code = cli.main(list(argv))
    return code


@pytest.fixture(scope="module")
def cli_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_corpus")
    code = cli.main(
        [
            "synth-data",
            "--set", f"out_dir={root}",
            "--set", "n_systems=4",
            "--set", "utts_per_system=3",
            "--set", "rates=[16000]",
            "--set", "feature_dim=12",
            "--seed", "55",
        ]
    )
    assert code == 0
    return root


@pytest.fixture(scope="module")
def trained_checkpoint(cli_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_train")
    config = {
        "seed": 9,
        "arch": tiny_arch("ssl_only").to_dict(),
        "dtype": "float32",
        "train": {"epochs": 2, "lr": 1e-3, "batch_size": 4},
        "data": {
            "manifest": str(cli_corpus / "manifest.csv"),
            "split": {"train_fraction": 0.75, "level": "system"},
        },
        "out_dir": str(out),
    }
    cfg_path = out / "train.json"
    cfg_path.write_text(json.dumps(config))
    assert cli.main(["train", "--config", str(cfg_path)]) == 0
    return out / "checkpoint.ckpt"


class TestSynthAndFeaturize:
    def test_corpus_exists(self, cli_corpus):
        assert (cli_corpus / "manifest.csv").exists()
        assert len(list((cli_corpus / "wav").glob("*.wav"))) == 12

    def test_featurize_writes_cache(self, cli_corpus, tmp_path):
        cache = tmp_path / "spec"
        code = cli.main(
            [
                "featurize",
                "--set", f"manifest={cli_corpus / 'manifest.csv'}",
                "--set", f"spec_cache_dir={cache}",
            ]
        )
        assert code == 0
        assert len(list(cache.glob("*.npy"))) == 12


class TestTrainEvaluatePredict:
    def test_trained_checkpoint_exists(self, trained_checkpoint):
        assert trained_checkpoint.exists()
        assert (trained_checkpoint.parent / "run_record.json").exists()

    def test_evaluate_emits_report(self, cli_corpus, trained_checkpoint, tmp_path):
        out_json = tmp_path / "report.json"
        code = cli.main(
            [
                "evaluate",
                "--set", f"checkpoint={trained_checkpoint}",
                "--set", f"data.manifest={cli_corpus / 'manifest.csv'}",
                "--set", f"out_json={out_json}",
            ]
        )
        assert code == 0
        report = json.loads(out_json.read_text())
        assert report["n_utterances"] == 12
        assert report["UTT_MSE"] >= 0

    def test_predict_agrees_with_evaluate_inputs(self, cli_corpus, trained_checkpoint, tmp_path):
        out_csv = tmp_path / "pred.csv"
        code = cli.main(
            [
                "predict",
                "--set", f"checkpoint={trained_checkpoint}",
                "--set", f"data.manifest={cli_corpus / 'manifest.csv'}",
                "--set", f"out_csv={out_csv}",
            ]
        )
        assert code == 0
        with open(out_csv) as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 12
        # same inference path as the library: bit-exact agreement
        from moskit import checkpoint as ckpt
        from moskit import datasets, evaluation

        params = ckpt.load_checkpoint_file(trained_checkpoint)
        entries = datasets.load_manifest(cli_corpus / "manifest.csv")
        ds = datasets.UtteranceDataset(entries, cli_corpus)
        expected = {u: (m, s) for u, m, s in evaluation.predict(params, ds)}
        for row in rows:
            mu, s2 = expected[row["utterance_id"]]
            assert float(row["mu"]) == mu
            assert float(row["sigma2"]) == s2

    def test_finetune_from_checkpoint(self, cli_corpus, trained_checkpoint, tmp_path):
        code = cli.main(
            [
                "finetune",
                "--set", f"init_checkpoint={trained_checkpoint}",
                "--set", f"data.manifest={cli_corpus / 'manifest.csv'}",
                "--set", "data.split.train_fraction=0.75",
                "--set", "train.epochs=1",
                "--set", "train.batch_size=4",
                "--set", f"out_dir={tmp_path}",
                "--seed", "10",
            ]
        )
        assert code == 0
        assert (tmp_path / "checkpoint.ckpt").exists()

    def test_export_report_aggregates(self, tmp_path):
        for i, srcc in enumerate((0.8, 0.9)):
            (tmp_path / f"r{i}.json").write_text(
                json.dumps({"UTT_MSE": 0.5, "UTT_LCC": None, "UTT_SRCC": srcc})
            )
        out = tmp_path / "agg.json"
        code = cli.main(
            [
                "export-report",
                "--set", f"inputs=[\"{tmp_path}/r0.json\", \"{tmp_path}/r1.json\"]",
                "--set", f"out_json={out}",
            ]
        )
        assert code == 0
        agg = json.loads(out.read_text())
        assert agg["UTT_SRCC"]["mean"] == pytest.approx(0.85)
        assert agg["UTT_SRCC"]["std"] == pytest.approx(0.07071, rel=1e-3)
        assert "UTT_LCC" not in agg


class TestErrorPaths:
    def test_unknown_config_key_is_usage_error(self, cli_corpus):
        code = cli.main(
            [
                "train",
                "--set", f"data.manifest={cli_corpus / 'manifest.csv'}",
                "--set", "train.leraning_rate=0.1",
            ]
        )
        assert code == 1

    def test_missing_feature_file_is_data_error(
        self, cli_corpus, trained_checkpoint, tmp_path, capsys
    ):
        manifest = tmp_path / "bad.csv"
        text = (cli_corpus / "manifest.csv").read_text().splitlines()
        doctored = [text[0]] + [text[1].replace("sslf/", "nope/")] + text[2:]
        manifest.write_text("\n".join(doctored) + "\n")
        (tmp_path / "wav").symlink_to(cli_corpus / "wav")
        (tmp_path / "sslf").symlink_to(cli_corpus / "sslf")
        code = cli.main(
            [
                "evaluate",
                "--set", f"checkpoint={trained_checkpoint}",
                "--set", f"data.manifest={manifest}",
            ]
        )
        assert code == 2
        missing_utt = doctored[1].split(",")[0]
        assert missing_utt in capsys.readouterr().err

    def test_missing_checkpoint_is_data_error(self, cli_corpus):
        code = cli.main(
            [
                "evaluate",
                "--set", "checkpoint=/nonexistent.ckpt",
                "--set", f"data.manifest={cli_corpus / 'manifest.csv'}",
            ]
        )
        assert code == 2

    def test_unknown_subcommand_is_usage_error(self):
        assert cli.main(["transmogrify"]) == 1

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric_failure_exit_code(self, cli_corpus, tmp_path):
        config = {
            "seed": 9,
            "arch": tiny_arch("ssl_only").to_dict(),
            "train": {"epochs": 1, "lr": 1e30, "batch_size": 4},
            "data": {
                "manifest": str(cli_corpus / "manifest.csv"),
                "split": {"train_fraction": 0.75, "level": "system"},
            },
            "out_dir": str(tmp_path),
        }
        path = tmp_path / "explode.json"
        path.write_text(json.dumps(config))
        code = cli.main(["train", "--config", str(path)])
        assert code == 3

    def test_help_documents_every_subcommand(self, capsys):
        for name in cli.SUBCOMMANDS:
            with pytest.raises(SystemExit) as exc:
                cli.main([name, "--help"])
            assert exc.value.code == 0
            out = capsys.readouterr().out
            assert "--config" in out and "--set" in out and "--seed" in out
