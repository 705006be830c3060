"""
Command-line tests: each case calls ``main`` in-process and inspects
stdout, the exit code and the written snapshot.
"""

import csv
import io
import json
import sys
from pathlib import Path

import pytest
import yaml
from fastapi.testclient import TestClient
from loguru import logger

from ioc_decay.api.main import create_app
from ioc_decay.cli.main import EXIT_ERROR, EXIT_OK, EXIT_USAGE, build_parser, main, model_from_args
from ioc_decay.decay import DecayModel, TimeUnit, score_polynomial
from ioc_decay.store import AttributeStore

ROOT = Path(__file__).resolve().parent.parent.parent
WORKED_EXAMPLES = ROOT / "tests" / "fixtures" / "worked_examples"

CURVE_IP = [
    "curve", "--model", "polynomial", "--tau", "168", "--delta", "0.55",
    "--unit", "h", "--base", "80", "--horizon", "168", "--step", "1",
]


@pytest.fixture(autouse=True)
def _restore_logger():
    yield
    logger.remove()
    logger.add(sys.stderr, level="WARNING")


@pytest.fixture
def config_file(tmp_path):
    """YAML config over the fixture files with a per-test snapshot."""
    path = tmp_path / "ioc-decay.yaml"
    path.write_text(
        yaml.safe_dump({
            "taxonomy_dir": str(ROOT / "data" / "taxonomies"),
            "events_file": str(WORKED_EXAMPLES / "events.json"),
            "sources_file": str(WORKED_EXAMPLES / "sources.json"),
            "sightings_file": str(WORKED_EXAMPLES / "sightings.ndjson"),
            "store_path": "var/store.json",
            "log_level": "WARNING",
        }),
        encoding="utf-8",
    )
    return path


def _run_json(capsys, argv):
    assert main(argv) == EXIT_OK
    return json.loads(capsys.readouterr().out)


def _feed(tmp_path, hours, attribute_id="attr-ip", kinds=None):
    path = tmp_path / "feed.ndjson"
    kinds = kinds or ["positive"] * len(hours)
    lines = []
    for h, kind in zip(hours, kinds):
        day, hour = divmod(h, 24)
        lines.append(json.dumps({
            "attribute_id": attribute_id,
            "timestamp": f"2024-01-{2 + day:02d}T{hour:02d}:00:00Z",
            "kind": kind,
            "source_id": "org-circl",
        }))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestCurve:
    """curve subcommand"""

    def test_ip_example(self, capsys):
        assert main(CURVE_IP) == EXIT_OK
        captured = capsys.readouterr()
        rows = list(csv.reader(io.StringIO(captured.out)))
        assert rows[0] == ["t", "h", "score"]
        assert len(rows) == 1 + 169
        assert rows[1] == ["0", "h", "80.000000"]
        assert captured.out.splitlines()[-1] == "168,h,0.000000"
        assert "half_life=114.7" in captured.err

    def test_linear_example(self, capsys):
        argv = ["curve", "--model", "linear", "--delta", "2", "--base", "80", "--horizon", "40", "--step", "10"]
        assert main(argv) == EXIT_OK
        assert capsys.readouterr().out.splitlines()[1:] == [
            "0,h,80.000000",
            "10,h,60.000000",
            "20,h,40.000000",
            "30,h,20.000000",
            "40,h,0.000000",
        ]

    def test_out_file(self, capsys, tmp_path):
        out = tmp_path / "curves" / "ip.csv"
        assert main(CURVE_IP + ["--out", str(out)]) == EXIT_OK
        assert len(out.read_text(encoding="utf-8").splitlines()) == 170
        assert capsys.readouterr().out.startswith("half_life=")

    @pytest.mark.parametrize(
        "change",
        [
            ["--step", "0"],
            ["--step", "-1"],
            ["--horizon", "0.5"],
            ["--base", "120"],
            ["--unit", "fortnight"],
        ],
    )
    def test_usage_errors(self, change):
        argv = list(CURVE_IP)
        flag = argv.index(change[0])
        argv[flag + 1] = change[1]
        with pytest.raises(SystemExit) as excinfo:
            main(argv)
        assert excinfo.value.code == EXIT_USAGE

    def test_polynomial_without_tau(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["curve", "--model", "polynomial", "--delta", "0.5", "--base", "80", "--horizon", "10", "--step", "1"])
        assert excinfo.value.code == EXIT_USAGE


class TestImportAndScore:
    """import, score and expired over a snapshot file"""

    def test_import_report(self, capsys, config_file, tmp_path):
        report = _run_json(capsys, ["--config", str(config_file), "import"])
        assert report == {
            "events": 2,
            "attributes": 2,
            "tags_resolved": 4,
            "tags_unresolved": 0,
            "sightings": 2,
        }
        assert (tmp_path / "var" / "store.json").is_file()

    def test_score_hash_example(self, capsys, config_file):
        _run_json(capsys, ["--config", str(config_file), "import"])
        doc = _run_json(capsys, ["--config", str(config_file), "score", "attr-hash", "--at", "2024-02-27T00:00:00Z"])
        assert doc["current_score"] == pytest.approx(41.97, abs=0.05)
        assert doc["base_score"] == pytest.approx(80.0)

    def test_now_flag_after_subcommand(self, capsys, config_file):
        doc = _run_json(capsys, ["score", "attr-ip", "--config", str(config_file), "--now", "2024-01-02T00:00:00Z"])
        assert doc["current_score"] == pytest.approx(80.0)
        assert doc["evaluated_at"] == "2024-01-02T00:00:00Z"

    def test_unknown_attribute(self, capsys, config_file):
        assert main(["--config", str(config_file), "score", "ghost", "--at", "2024-01-02T00:00:00Z"]) == EXIT_ERROR
        error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert error["type"] == "UnknownAttribute"

    def test_missing_config(self, tmp_path):
        assert main(["--config", str(tmp_path / "absent.yaml"), "expired"]) == EXIT_ERROR

    def test_expired(self, capsys, config_file):
        doc = _run_json(capsys, ["--config", str(config_file), "expired", "--at", "2024-01-09T00:00:00Z"])
        assert doc == {"evaluated_at": "2024-01-09T00:00:00Z", "attribute_ids": ["attr-ip"]}

    def test_matches_service_document(self, capsys, config_file, settings, imported):
        _run_json(capsys, ["--config", str(config_file), "import"])
        at = "2024-01-20T06:30:00Z"
        cli_doc = _run_json(capsys, ["--config", str(config_file), "score", "attr-hash", "--at", at])
        client = TestClient(create_app(settings, store=AttributeStore(imported.snapshot)))
        assert client.get("/v1/attributes/attr-hash/score", params={"at": at}).json() == cli_doc

    def test_deterministic(self, capsys, config_file, tmp_path):
        argv_score = ["--config", str(config_file), "score", "attr-ip", "--at", "2024-01-03T00:00:00Z"]
        outputs, snapshots = [], []
        for _ in range(2):
            _run_json(capsys, ["--config", str(config_file), "import"])
            snapshots.append((tmp_path / "var" / "store.json").read_bytes())
            assert main(argv_score) == EXIT_OK
            outputs.append(capsys.readouterr().out)
        assert outputs[0] == outputs[1]
        assert snapshots[0] == snapshots[1]


class TestFit:
    """fit subcommand"""

    def test_constant_gaps(self, capsys, config_file, tmp_path):
        feed = _feed(tmp_path, [0, 24, 48, 72, 96])
        doc = _run_json(capsys, ["--config", str(config_file), "fit", "attr-ip", "--sightings", str(feed)])
        assert doc["tau"] == pytest.approx(48.0)
        assert doc["unit"] == "h"
        assert doc["gaps"]["count"] == 4

    def test_outlier_gap_dominates(self, capsys, config_file, tmp_path):
        feed = _feed(tmp_path, [0, 10, 30, 60, 100, 200])
        doc = _run_json(capsys, ["--config", str(config_file), "fit", "attr-ip", "--sightings", str(feed)])
        assert doc["tau"] == pytest.approx(200.0)
        assert doc["gaps"]["median"] == pytest.approx(30.0)

    def test_multiplier_and_unit(self, capsys, config_file, tmp_path):
        feed = _feed(tmp_path, [0, 24, 48, 72])
        argv = ["--config", str(config_file), "fit", "attr-ip", "--sightings", str(feed), "--c", "3", "--unit", "d"]
        assert _run_json(capsys, argv)["tau"] == pytest.approx(3.0)

    def test_too_few_sightings(self, capsys, config_file, tmp_path):
        feed = _feed(tmp_path, [0, 24])
        assert main(["--config", str(config_file), "fit", "attr-ip", "--sightings", str(feed)]) == EXIT_ERROR
        assert "InsufficientHistory" in capsys.readouterr().err


class TestReplay:
    """replay subcommand"""

    def test_trace(self, capsys, config_file):
        argv = ["--config", str(config_file), "replay", "attr-ip", "--until", "2024-01-09T00:00:00Z"]
        assert main(argv) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        before = score_polynomial(80, 168, 0.55, 24)
        assert lines == [
            f"2024-01-02T00:00:00Z\tpositive\t{before:.6f}\t80.000000",
            "2024-01-09T00:00:00Z\tuntil\t0.000000",
        ]

    def test_model_override(self, capsys, config_file):
        argv = [
            "--config", str(config_file), "replay", "attr-ip", "--until", "2024-01-03T00:00:00Z",
            "--model", "linear", "--delta", "1",
        ]
        assert main(argv) == EXIT_OK
        assert capsys.readouterr().out.splitlines()[-1] == "2024-01-03T00:00:00Z\tuntil\t56.000000"

    def test_false_positive_record_zeroes(self, capsys, config_file, tmp_path):
        feed = _feed(tmp_path, [0, 24], kinds=["positive", "false_positive"])
        argv = [
            "--config", str(config_file), "replay", "attr-ip",
            "--sightings", str(feed), "--until", "2024-01-04T00:00:00Z",
        ]
        assert main(argv) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        decayed = score_polynomial(80, 168, 0.55, 24)
        assert lines[1] == f"2024-01-03T00:00:00Z\tfalse_positive\t{decayed:.6f}\t0.000000"
        assert lines[2] == "2024-01-04T00:00:00Z\tuntil\t0.000000"

    def test_expiration_overrides_tau(self, capsys, config_file, tmp_path):
        feed = _feed(tmp_path, [0, 24, 48], kinds=["positive", "expiration", "positive"])
        argv = [
            "--config", str(config_file), "replay", "attr-ip",
            "--sightings", str(feed), "--until", "2024-01-04T12:00:00Z",
        ]
        assert main(argv) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[1] == f"2024-01-03T00:00:00Z\texpiration\t{score_polynomial(80, 168, 0.55, 24):.6f}\t0.000000"
        assert lines[2] == "2024-01-04T00:00:00Z\tpositive\t0.000000\t80.000000"
        # the 24h override now stands in for tau = 168h
        assert lines[3] == f"2024-01-04T12:00:00Z\tuntil\t{score_polynomial(80, 24, 0.55, 12):.6f}"

    def test_unit_alone_keeps_the_curve(self, capsys, config_file):
        argv = ["--config", str(config_file), "replay", "attr-ip", "--until", "2024-01-05T00:00:00Z"]
        assert main(argv) == EXIT_OK
        in_hours = capsys.readouterr().out
        assert main(argv + ["--unit", "d"]) == EXIT_OK
        assert capsys.readouterr().out == in_hours


class TestModelFromArgs:
    """Flag parsing against a fallback model."""

    @staticmethod
    def _model(argv, fallback):
        parser = build_parser()
        return model_from_args(parser, parser.parse_args(["replay", "attr-ip", *argv]), fallback=fallback)

    def test_no_flags_returns_fallback(self):
        assert self._model([], DecayModel.linear(2)) == DecayModel.linear(2)

    def test_unit_converts_rate(self):
        assert self._model(["--unit", "d"], DecayModel.linear(2)) == DecayModel.linear(48, unit=TimeUnit.DAYS)

    def test_unit_converts_tau_not_exponent(self):
        model = self._model(["--unit", "d"], DecayModel.polynomial(168, 0.55))
        assert model == DecayModel.polynomial(7, 0.55, unit=TimeUnit.DAYS)

    def test_explicit_delta_taken_as_given(self):
        model = self._model(["--unit", "d", "--delta", "3"], DecayModel.linear(2))
        assert model == DecayModel.linear(3, unit=TimeUnit.DAYS)

    def test_convention_only(self):
        model = self._model(["--convention", "direct"], DecayModel.polynomial(168, 0.55))
        assert model.convention.value == "direct"
        assert (model.tau, model.delta) == (168, 0.55)

    @pytest.mark.parametrize(
        "argv,fallback",
        [
            (["--model", "exponential"], DecayModel.linear(2)),
            (["--model", "polynomial", "--delta", "0.5"], DecayModel.linear(2)),
            (["--unit", "d"], None),
        ],
    )
    def test_usage_errors(self, argv, fallback):
        with pytest.raises(SystemExit) as excinfo:
            self._model(argv, fallback)
        assert excinfo.value.code == EXIT_USAGE


class TestClearFalsePositive:
    """clear-fp subcommand"""

    def _import_flagged(self, capsys, config_file, tmp_path):
        feed = _feed(tmp_path, [0, 24], kinds=["positive", "false_positive"])
        config = yaml.safe_load(config_file.read_text(encoding="utf-8"))
        config["sightings_file"] = str(feed)
        config_file.write_text(yaml.safe_dump(config), encoding="utf-8")
        _run_json(capsys, ["--config", str(config_file), "import"])

    def test_clear_restores_score(self, capsys, config_file, tmp_path):
        self._import_flagged(capsys, config_file, tmp_path)
        score_argv = ["--config", str(config_file), "score", "attr-ip", "--at", "2024-01-03T12:00:00Z"]
        assert _run_json(capsys, score_argv)["current_score"] == 0.0

        ack = _run_json(capsys, ["--config", str(config_file), "clear-fp", "attr-ip", "--at", "2024-01-03T06:00:00Z"])
        assert ack == {
            "attribute_id": "attr-ip",
            "cleared_at": "2024-01-03T06:00:00Z",
            "false_positive": False,
            "last_reference": "2024-01-02T00:00:00Z",
        }
        doc = _run_json(capsys, score_argv)
        assert doc["false_positive"] is False
        assert doc["current_score"] == pytest.approx(score_polynomial(80, 168, 0.55, 36))

    def test_clear_uses_now_flag(self, capsys, config_file, tmp_path):
        self._import_flagged(capsys, config_file, tmp_path)
        argv = ["--config", str(config_file), "--now", "2024-01-04T00:00:00Z", "clear-fp", "attr-ip"]
        assert _run_json(capsys, argv)["cleared_at"] == "2024-01-04T00:00:00Z"
        snapshot = json.loads((tmp_path / "var" / "store.json").read_text(encoding="utf-8"))
        assert snapshot["states"]["attr-ip"]["false_positive_cleared_at"] == "2024-01-04T00:00:00Z"

    def test_unknown_attribute(self, capsys, config_file):
        assert main(["--config", str(config_file), "clear-fp", "ghost", "--at", "2024-01-04T00:00:00Z"]) == EXIT_ERROR
        assert "UnknownAttribute" in capsys.readouterr().err
