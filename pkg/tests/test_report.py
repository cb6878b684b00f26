from tsvad.report import MetricRow, Report


def sample_report():
    rows = [
        MetricRow(
            run_id="w6s2-intensity", family="3dcae", modality="intensity",
            loss_mode="full", input_len=6, shift=2, auc_roc=0.8125, auc_pr=0.4031,
            no_skill_pr=0.05, n_scored=1000, n_anomalous=50,
            skipped_clips=("short-1",),
        ),
        MetricRow(
            run_id="w8s0-intensity", family="3dcae", modality="intensity",
            loss_mode="full", input_len=8, shift=0, error="ConfigError: boom",
        ),
    ]
    meta = {"config_hash": "abc123", "dataset_hash": "d" * 64, "config": {"window": {"input_len": 6}}}
    return Report(meta=meta, rows=rows)


def test_json_round_trip_lossless():
    report = sample_report()
    restored = Report.from_json(report.to_json())
    assert restored.meta == report.meta
    assert restored.rows == report.rows
    # And a second trip is bit-identical text.
    assert restored.to_json() == report.to_json()


def test_csv_and_text_contain_rows():
    report = sample_report()
    csv_text = report.to_csv()
    assert "w6s2-intensity" in csv_text
    assert "0.8125" in csv_text
    table = report.to_text()
    assert "auc_roc" in table
    assert "0.8125" in table
    assert "ConfigError: boom" in table


def test_save_writes_requested_formats(tmp_path):
    report = sample_report()
    report.save(tmp_path, formats=("json", "csv", "txt"))
    assert (tmp_path / "metrics.json").is_file()
    assert (tmp_path / "report.csv").is_file()
    assert (tmp_path / "report.txt").is_file()
    restored = Report.from_json((tmp_path / "metrics.json").read_text())
    assert restored.rows == report.rows
