import csv
import io
import json
import subprocess
import sys

import pytest

from megdt.cli import CSV_HEADER, comparison_table, fmt, main
from megdt.config import (
    ConfigDocument,
    apply_overrides,
    build_scenario,
    bundled_path,
    dump_document,
    load_document,
    parse_document,
)
from megdt.errors import InvalidConfigError

SWEEP = ["--set", 'schemes=["MEG","E2E_MEG"]', "--from", "-2", "--to", "2", "--step", "2"]


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def bundled():
    return json.loads(bundled_path("case_study").read_text())


def test_run_case_study(tmp_path):
    out = tmp_path / "run.csv"
    assert main(["run", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    rows = read_csv(out)
    assert [r["scheme"] for r in rows] == ["Centralized", "MEG", "E2E_MEG"]
    assert [round(float(r["t_tx_s"]), 2) for r in rows] == [50.33, 1.05, 0.58]
    assert [round(float(r["t_e2e_s"]), 2) for r in rows] == [57.91, 8.63, 8.16]


def test_float_format():
    assert fmt(50.331648) == "50.3316"
    assert fmt(1e-7) == "1e-07"
    assert fmt(-0.0) == "0"
    assert fmt(200.0) == "200"


def test_set_overrides_show_up(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["run", "--out", str(out), "--set", "snr_db=0", "--set", 'schemes=["MEG"]', "--seed", "9"]) == 0
    rows = read_csv(out)
    assert len(rows) == 1 and rows[0]["snr_db"] == "0" and rows[0]["seed"] == "9"


def test_env_var_sets_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv("MEGDT_OUT_DIR", str(tmp_path))
    assert main(["run", "--set", 'schemes=["E2E_MEG"]']) == 0
    assert (tmp_path / "case_study_run.csv").exists()


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["run", "--config", str(missing)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and str(missing) in err["path"]


def test_empty_scheme_list_is_config_error(tmp_path, capsys):
    assert main(["compare", "--out", str(tmp_path / "c.csv"), "--set", "schemes=[]"]) == 2
    assert json.loads(capsys.readouterr().err)["path"] == "scenario.schemes"


def test_runtime_errors_exit_3(tmp_path, capsys):
    # a directory cannot be written as a file
    assert main(["run", "--set", 'schemes=["MEG"]', "--out", str(tmp_path)]) == 3
    assert json.loads(capsys.readouterr().err)["error"] in ("io", "runtime")


def test_sweep_cardinality_and_summary(tmp_path):
    out, summary = tmp_path / "s.csv", tmp_path / "s.json"
    args = ["sweep", "--out", str(out), "--summary", str(summary), "--from", "-10", "--to", "10", "--step", "1"]
    assert main(args) == 0
    rows = read_csv(out)
    assert len(rows) == 21 * 3
    doc = json.loads(summary.read_text())
    assert "crossover_snr_db" in doc
    assert doc["crossover_snr_db"] is None or isinstance(doc["crossover_snr_db"], float)


def test_sweep_is_byte_identical_across_runs_and_parallelism(tmp_path):
    paths = []
    for i, par in enumerate(("1", "1", "3")):
        p = tmp_path / f"s{i}.csv"
        assert main(["sweep", "--out", str(p), "--parallel", par, "--set", "repetitions=3", *SWEEP]) == 0
        paths.append(p.read_bytes())
    assert paths[0] == paths[1] == paths[2]


def test_compare_table_matches_run_csv(tmp_path, capsys):
    run_out, cmp_out = tmp_path / "r.csv", tmp_path / "c.csv"
    assert main(["run", "--out", str(run_out)]) == 0
    assert main(["compare", "--out", str(cmp_out)]) == 0
    table = capsys.readouterr().out
    runs = {r["scheme"]: r for r in read_csv(run_out)}
    for row in read_csv(cmp_out):
        assert row["t_tx_s"] == runs[row["scheme"]]["t_tx_s"]
        assert row["t_e2e_s"] == runs[row["scheme"]]["t_e2e_s"]
    body = table.splitlines()[2:]
    assert [line.split()[0] for line in body] == ["Centralized", "MEG", "E2E_MEG"]
    assert len({len(line) for line in table.splitlines()[:2]}) == 1


def test_comparison_table_alignment():
    from megdt.simkit import ComparisonRow
    t = comparison_table([ComparisonRow("MEG", 10.0, 1, 1.048576, 7.58, 8.628576, 1e-4, 40.0, 0.0)])
    header, rule, row = t.splitlines()
    assert len(header) == len(rule) == len(row)


def test_config_roundtrip_and_strictness():
    doc, _ = load_document("case_study")
    again = parse_document(json.loads(json.dumps(dump_document(doc))))
    assert again == doc
    data = bundled()
    data["scenario"]["bogus"] = 1
    with pytest.raises(InvalidConfigError, match="scenario.bogus"):
        parse_document(data)
    data = bundled()
    del data["codecs"]["jscc_latent"]["merged_dim"]
    with pytest.raises(InvalidConfigError, match="codecs.jscc_latent.merged_dim"):
        parse_document(data)
    data = bundled()
    data["version"] = 2
    with pytest.raises(InvalidConfigError, match="version"):
        parse_document(data)
    data = bundled()
    data["bindings"]["MEG"]["dl"] = "missing"
    with pytest.raises(InvalidConfigError):
        parse_document(data)


def test_bundled_config_encodes_case_study_defaults():
    doc = ConfigDocument.model_validate(bundled())
    assert doc.links.rate_bps == 1e6
    assert doc.pipeline.boundary_shape == [4, 128, 128] and doc.pipeline.image_shape == [1024, 1024, 3]
    assert [(s.compute_seconds, s.repeat) for s in doc.pipeline.stages] == [(0.38, 1), (0.55, 12), (0.6, 1)]
    assert doc.codecs["jscc_latent"].merged_dim == 36_250
    assert doc.mechanism.prompt_bits == 0


def test_override_paths():
    doc, _ = load_document("case_study")
    d = apply_overrides(doc, ["snr_db=[1,2]", "links.rate_bps=2e6", "pipeline.stages.0.compute_seconds=1.5"])
    assert d.scenario.snr_db == [1.0, 2.0] and d.links.rate_bps == 2e6
    assert d.pipeline.stages[0].compute_seconds == 1.5
    for bad in ("novalue", "=3", "pipeline.stages.9.name=x", "links.rate_bps.x=1"):
        with pytest.raises(InvalidConfigError):
            apply_overrides(doc, [bad])


def test_relative_artifact_and_refit(tmp_path):
    data = bundled()
    data["codecs"]["jscc_latent"]["artifact"] = "missing.json"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(data))
    with pytest.raises(InvalidConfigError, match="artifact"):
        build_scenario(*load_document(str(cfg)))
    data["codecs"]["jscc_latent"].update(artifact=None, merged_dim=30000)
    data["pipeline"]["boundary_shape"] = [2, 128, 128]
    cfg.write_text(json.dumps(data))
    s = build_scenario(*load_document(str(cfg)))
    assert s.configs["E2E_MEG"].dl_codec.payload_bits((2, 128, 128)) == 30000 * 16


def test_multi_user_section(tmp_path):
    data = bundled()
    data["scenario"]["schemes"] = ["MEG"]
    data["multi_user"] = {"mode": "CoordinatedFused", "num_ues": 3}
    cfg = tmp_path / "mu.json"
    cfg.write_text(json.dumps(data))
    out = tmp_path / "mu.csv"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert int(read_csv(out)[0]["payload_bits_ul"]) == 3 * 1_048_576


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.csv"
    r = subprocess.run([sys.executable, "-m", "megdt.cli", "run", "--set", 'schemes=["MEG"]', "--out", str(out)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert out.read_text().startswith("scenario,scheme")
