import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)) + '/../')

import json
import logging

import numpy as np
import pytest
from click.testing import CliRunner
from pydantic import ValidationError

from enums import AuditGrouping, AuditTest, SimMode
from exceptions import PipelineError
from extract_bits import build_run_config, cli
from models import Frame
from schemas import AuditReport, RunConfig, SimConfig
from services.elias_service import expected_efficiency
from services.extraction_service import emit_report, load_report, run_extraction
from services.frame_service import save_frame
from utils import canonical_json, pack_bits


WORKED_EXAMPLE = {(1, 0): 255, (3, 1): 255, (2, 2): 255, (3, 3): 255}


def write_frame(path, width: int, height: int, pixels: dict, frame_index: int = 0) -> str:
    samples = np.zeros((height, width), dtype=np.uint16)
    for (x, y), value in pixels.items():
        samples[y, x] = value
    save_frame(Frame(width=width, height=height, bit_depth=8, samples=samples, frame_index=frame_index), str(path))
    return str(path)


def worked_example_config(tmp_path, **overrides) -> RunConfig:
    write_frame(tmp_path / "frame_00000.pgm", 5, 4, WORKED_EXAMPLE)
    values = dict(
        frames=str(tmp_path / "frame_*.pgm"),
        erode=0,
        levels=1,
        noise_floor=1,
        min_area=1,
        connectivity=4,
        tests="none",
        out=str(tmp_path / "bits.bin"),
        report=str(tmp_path / "report.json"),
    )
    values.update(overrides)
    return RunConfig(**values)


def oracle_config(tmp_path, **overrides) -> RunConfig:
    simulate = SimConfig(mode=SimMode.ORACLE, urn_count=4000, spot_count_mean=200, frame_count=40, seed=21)
    values = dict(
        simulate=simulate,
        out=str(tmp_path / "bits.bin"),
        report=str(tmp_path / "report.json"),
        audit_block_bits=10_000,
    )
    values.update(overrides)
    return RunConfig(**values)


def test_worked_example_bit_file(tmp_path):
    result = run_extraction(worked_example_config(tmp_path))

    with open(tmp_path / "bits.bin", "rb") as f:
        assert f.read() == b"\xca"
    assert result.data == bytes([0b11001010])
    assert str(result.withheld) == "1111"

    report = result.report
    assert report.frames[0].n_f == 4
    assert report.frames[0].urn_count == 20
    assert report.frames[0].bits_emitted == 12
    assert report.aggregate.total_bits == 12
    assert report.aggregate.bytes_written == 1
    assert report.aggregate.withheld_bits == 4
    assert report.aggregate.withheld == "1111"
    assert report.tests == []


def test_zero_spot_video(tmp_path):
    for i in range(3):
        write_frame(tmp_path / f"frame_{i:05d}.pgm", 8, 8, {}, i)
    config = RunConfig(frames=str(tmp_path / "frame_*.pgm"), out=str(tmp_path / "bits.bin"), report=str(tmp_path / "r.json"))
    result = run_extraction(config)

    assert os.path.getsize(tmp_path / "bits.bin") == 0
    assert result.report.aggregate.total_bits == 0
    assert result.report.aggregate.frame_count == 3
    assert "no bits were extracted" in result.report.warnings
    assert result.report.min_entropy.empirical is None
    assert set(result.report.skipped_tests) == {t.value for t in AuditTest}


def test_empty_mask_is_reported(tmp_path):
    config = worked_example_config(tmp_path, erode=10)
    report = run_extraction(config).report
    assert report.frames[0].urn_count == 0
    assert any("mask is empty" in w for w in report.warnings)


def test_conservation_and_totals(tmp_path):
    result = run_extraction(oracle_config(tmp_path))
    report = result.report
    emitted = sum(f.bits_emitted for f in report.frames)

    assert report.aggregate.total_bits == emitted
    assert len(result.data) * 8 + report.aggregate.withheld_bits == emitted
    assert report.aggregate.mean_bits_per_frame == pytest.approx(emitted / len(report.frames))
    mean_q = np.mean([f.n_f / f.urn_count for f in report.frames])
    assert report.aggregate.mean_occupancy == pytest.approx(mean_q)
    assert [f.frame_index for f in report.frames] == list(range(40))


def test_failure_counts_per_frame(tmp_path):
    config = oracle_config(tmp_path, tests="frequency,serial2,bytes", audit_grouping="frames")
    report = run_extraction(config).report

    complete = 40 if report.aggregate.withheld_bits == 0 else 39
    rows = {row.test: row for row in report.failure_counts}
    # ein Frame (~1150 Bits) ist zu kurz für den Byte-Test
    assert set(rows) == {"frequency", "serial2"}
    assert rows["frequency"].statistics == complete
    assert rows["serial2"].statistics == complete
    assert report.config.audit_grouping == AuditGrouping.FRAMES


def test_spot_settings_logged(tmp_path, caplog):
    with caplog.at_level(logging.INFO, logger="services.extraction_service"):
        run_extraction(worked_example_config(tmp_path))
    assert "4-neighbor" in caplog.text


def test_parallel_schedule_does_not_change_stream(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    sequential = run_extraction(oracle_config(tmp_path / "a", workers=1, tests="none"))
    parallel = run_extraction(oracle_config(tmp_path / "b", workers=8, tests="none"))
    assert sequential.data == parallel.data
    assert sequential.withheld == parallel.withheld


def test_runs_are_deterministic(tmp_path, monkeypatch):
    outputs = []
    for name in ("first", "second"):
        (tmp_path / name).mkdir()
        monkeypatch.chdir(tmp_path / name)
        config = RunConfig(
            simulate=SimConfig(width=96, height=80, spot_count_mean=30, frame_count=6, background_noise_sigma=2.0),
            noise_floor=16,
            seed=77,
        )
        run_extraction(config)
        with open("bits.bin", "rb") as f, open("report.json", "rb") as r:
            outputs.append((f.read(), r.read()))
    assert outputs[0] == outputs[1]


def test_seed_reaches_simulator():
    config = RunConfig(simulate=SimConfig(seed=1), seed=99)
    assert config.simulate.seed == 99


def test_report_round_trip_is_byte_identical(tmp_path):
    result = run_extraction(oracle_config(tmp_path))
    with open(tmp_path / "report.json", encoding="utf-8") as f:
        original = f.read()

    loaded = load_report(str(tmp_path / "report.json"))
    assert loaded == result.report
    emit_report(loaded, str(tmp_path / "again.json"))
    with open(tmp_path / "again.json", encoding="utf-8") as f:
        assert f.read() == original


def test_report_validator_rejects_missing_key(tmp_path):
    run_extraction(worked_example_config(tmp_path))
    with open(tmp_path / "report.json", encoding="utf-8") as f:
        data = json.load(f)
    del data["aggregate"]["total_bits"]
    with open(tmp_path / "edited.json", "w", encoding="utf-8") as f:
        f.write(canonical_json(data))

    with pytest.raises(ValidationError):
        load_report(str(tmp_path / "edited.json"))


def test_report_validator_rejects_unknown_key(tmp_path):
    run_extraction(worked_example_config(tmp_path))
    with open(tmp_path / "report.json", encoding="utf-8") as f:
        data = json.load(f)
    data["comment"] = "edited by hand"
    with pytest.raises(ValidationError):
        AuditReport.model_validate(data)


def test_dimension_mismatch_names_frame(tmp_path):
    write_frame(tmp_path / "frame_00000.pgm", 5, 4, {})
    write_frame(tmp_path / "frame_00001.pgm", 6, 4, {}, 1)
    config = RunConfig(frames=str(tmp_path / "frame_*.pgm"), out=str(tmp_path / "bits.bin"))
    with pytest.raises(PipelineError, match="frame 1") as excinfo:
        run_extraction(config)
    assert excinfo.value.frame_index == 1


def test_unreadable_frame_names_frame(tmp_path):
    write_frame(tmp_path / "frame_00000.pgm", 5, 4, {})
    with open(tmp_path / "frame_00001.pgm", "wb") as f:
        f.write(b"P5\n5 4\n255\n" + bytes(3))
    config = RunConfig(frames=str(tmp_path / "frame_*.pgm"), out=str(tmp_path / "bits.bin"))
    with pytest.raises(PipelineError, match="frame 1.*truncated payload"):
        run_extraction(config)


def test_unwritable_output(tmp_path):
    config = worked_example_config(tmp_path, out=str(tmp_path / "missing" / "bits.bin"))
    with pytest.raises(PipelineError, match="unwritable output"):
        run_extraction(config)


def test_no_matching_frames(tmp_path):
    config = RunConfig(frames=str(tmp_path / "nothing_*.pgm"))
    with pytest.raises(PipelineError, match="no frames match"):
        run_extraction(config)


@pytest.mark.parametrize("values", [
    {},
    {"frames": "a/*.pgm", "simulate": {}},
    {"frames": "a/*.pgm", "connectivity": 6},
    {"frames": "a/*.pgm", "erode": -1},
    {"frames": "a/*.pgm", "tests": "frequency,poker"},
    {"frames": "a/*.pgm", "unknown": 1},
])
def test_run_config_validation(values):
    with pytest.raises(ValidationError):
        RunConfig(**values)


def test_tests_list_parsing():
    assert RunConfig(frames="x", tests="all").tests == list(AuditTest)
    assert RunConfig(frames="x", tests="none").tests == []
    assert RunConfig(frames="x", tests="frequency, serial3").tests == [AuditTest.FREQUENCY, AuditTest.SERIAL_3]


def test_spot_dump_and_saved_frames(tmp_path):
    config = RunConfig(
        simulate=SimConfig(width=64, height=48, spot_count_mean=10, frame_count=2, seed=3),
        out=str(tmp_path / "bits.bin"),
        report=str(tmp_path / "report.json"),
        spot_dump=str(tmp_path / "spots.csv"),
        save_frames=str(tmp_path / "frames"),
        tests="none",
    )
    run_extraction(config)
    assert sorted(os.listdir(tmp_path / "frames")) == ["frame_00000.pgm", "frame_00001.pgm"]
    with open(tmp_path / "spots.csv") as f:
        assert f.readline().strip() == "frame,level,cx,cy,area,urn"

    replay = RunConfig(
        frames=str(tmp_path / "frames" / "frame_*.pgm"),
        out=str(tmp_path / "replay.bin"),
        report=str(tmp_path / "replay.json"),
        tests="none",
    )
    run_extraction(replay)
    with open(tmp_path / "bits.bin", "rb") as a, open(tmp_path / "replay.bin", "rb") as b:
        assert a.read() == b.read()


def test_pack_bits_withholds_partial_byte():
    data, withheld = pack_bits(np.array([1, 1, 0, 0, 1, 0, 1, 0, 1, 1, 1, 1], dtype=np.uint8))
    assert data == b"\xca"
    assert withheld.tolist() == [1, 1, 1, 1]


@pytest.mark.slow
def test_rate_at_frame_scale(tmp_path):
    config = RunConfig(
        simulate=SimConfig(mode=SimMode.ORACLE, urn_count=891000, spot_count_mean=1600, frame_count=100, seed=17),
        out=str(tmp_path / "bits.bin"),
        report=str(tmp_path / "report.json"),
        tests="frequency",
    )
    report = run_extraction(config).report
    assert report.aggregate.mean_bits_per_frame == pytest.approx(16900, rel=0.05)
    assert report.aggregate.mean_bits_per_frame == pytest.approx(
        float(expected_efficiency(891000, 1600).expected_length), rel=0.02
    )


@pytest.mark.slow
def test_oracle_stream_statistical_health(tmp_path):
    config = RunConfig(
        simulate=SimConfig(mode=SimMode.ORACLE, urn_count=20000, spot_count_mean=1000, frame_count=1800, seed=23),
        out=str(tmp_path / "bits.bin"),
        report=str(tmp_path / "report.json"),
        audit_block_bits=20_000,
    )
    report = run_extraction(config).report
    assert report.aggregate.total_bits >= 10**7
    assert report.skipped_tests == []
    assert len(report.failure_counts) == len(AuditTest)
    for row in report.failure_counts:
        assert row.within_band_99 and row.within_band_999, row.test
    assert report.min_entropy.compatible


class TestCommandLine:
    def test_run_worked_example(self, tmp_path):
        write_frame(tmp_path / "frame_00000.pgm", 5, 4, WORKED_EXAMPLE)
        result = CliRunner().invoke(cli, [
            "run",
            "--frames", str(tmp_path / "frame_*.pgm"),
            "--erode", "0", "--levels", "1", "--min-area", "1", "--connectivity", "4",
            "--tests", "none",
            "--out", str(tmp_path / "bits.bin"),
            "--report", str(tmp_path / "report.json"),
        ])
        assert result.exit_code == 0, result.output
        assert "12 bits" in result.output
        with open(tmp_path / "bits.bin", "rb") as f:
            assert f.read() == b"\xca"
        assert load_report(str(tmp_path / "report.json")).aggregate.withheld == "1111"

    def test_config_file_overridden_by_flags(self, tmp_path):
        config_path = tmp_path / "run.cfg"
        config_path.write_text(
            "# Beispielkonfiguration\n"
            f"frames = {tmp_path / 'frame_*.pgm'}\n"
            "erode = 0\n"
            "levels = 3\n"
            "min_area = 1\n"
            "connectivity = 4\n"
            "tests = none\n"
        )
        config = build_run_config(str(config_path), {"levels": 1, "out": "x.bin", "seed": None})
        assert config.levels == 1
        assert config.erode == 0
        assert config.connectivity == 4
        assert config.tests == []
        assert config.out == "x.bin"

    def test_config_file_rejects_unknown_keys(self, tmp_path):
        config_path = tmp_path / "run.cfg"
        config_path.write_text("frames = *.pgm\nexposure = 3\n")
        result = CliRunner().invoke(cli, ["run", "--config", str(config_path)])
        assert result.exit_code != 0
        assert "exposure" in result.output

    def test_simulate_file_and_frame_count(self, tmp_path):
        sim_path = tmp_path / "sim.cfg"
        sim_path.write_text("mode = oracle\nurn_count = 2000\nspot_count_mean = 100\nseed = 5\nframe_count = 50\n")
        result = CliRunner().invoke(cli, [
            "run", "--simulate", str(sim_path), "--frame-count", "4", "--tests", "frequency",
            "--out", str(tmp_path / "bits.bin"), "--report", str(tmp_path / "report.json"),
        ])
        assert result.exit_code == 0, result.output
        report = load_report(str(tmp_path / "report.json"))
        assert report.aggregate.frame_count == 4
        assert report.config.simulate.urn_count == 2000
        assert report.config.simulate.mode == SimMode.ORACLE

    def test_invalid_flag_combination(self, tmp_path):
        result = CliRunner().invoke(cli, ["run", "--out", str(tmp_path / "bits.bin")])
        assert result.exit_code != 0
        assert "exactly one input source" in result.output

    def test_pipeline_error_exit(self, tmp_path):
        result = CliRunner().invoke(cli, ["run", "--frames", str(tmp_path / "none_*.pgm")])
        assert result.exit_code != 0
        assert "no frames match" in result.output

    def test_schema(self):
        result = CliRunner().invoke(cli, ["schema"])
        assert result.exit_code == 0
        schema = json.loads(result.output)
        assert set(schema["required"]) == set(AuditReport.model_fields)

    def test_simulate_command(self, tmp_path):
        sim_path = tmp_path / "sim.cfg"
        sim_path.write_text("width = 32\nheight = 24\nspot_count_mean = 4\nframe_count = 2\n")
        result = CliRunner().invoke(cli, ["simulate", "--simulate", str(sim_path), "--out-dir", str(tmp_path / "out")])
        assert result.exit_code == 0, result.output
        assert sorted(os.listdir(tmp_path / "out")) == ["frame_00000.pgm", "frame_00001.pgm", "ground_truth.csv"]
