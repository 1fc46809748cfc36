import json

import numpy as np
import pytest

from lookat import bench
from lookat.cli import main as cli_main
from lookat.pq import PQConfig
from lookat.tensorio import SynthSpec, generate_synthetic, save_dump

SMALL_SYNTH = {"H": 2, "L": 48, "d_k": 16, "num_clusters": 8, "seeds": [0, 1]}
SMALL_PQ = {"num_centroids": 16, "kmeans_iters": 8}


def small_config(tmp_path, methods, **extra):
    doc = {
        "synth": [dict(SMALL_SYNTH)],
        "methods": list(methods),
        "pq": dict(SMALL_PQ),
        "output_path": str(tmp_path / "report.json"),
        "seed": 0,
    }
    doc.update(extra)
    return bench.ExperimentConfig.from_json(doc)


def test_reference_vs_itself_is_perfect(tmp_path):
    config = small_config(tmp_path, ["fp16-reference"])
    doc = bench.run_experiment(config)
    met = doc["summary"][0]["metrics"]
    assert met["cosine_sim"] == pytest.approx(1.0)
    assert met["kl_div"] == pytest.approx(0.0, abs=1e-9)
    assert met["spearman_rho"] == pytest.approx(1.0)
    assert met["top5_acc"] == pytest.approx(1.0)


def test_int8_dominates_int4(tmp_path):
    config = small_config(tmp_path, ["int8", "int4"])
    doc = bench.run_experiment(config)
    by_method = {s["method"]: s["metrics"] for s in doc["summary"]}
    assert by_method["int8"]["cosine_sim"] >= by_method["int4"]["cosine_sim"]
    assert by_method["int8"]["kl_div"] <= by_method["int4"]["kl_div"]
    assert by_method["int8"]["spearman_rho"] >= by_method["int4"]["spearman_rho"]
    assert by_method["int8"]["top5_acc"] >= by_method["int4"]["top5_acc"]


def test_lookat_bytes_per_token(tmp_path):
    for m, expected in ((2, 2.0), (4, 4.0)):
        comp = bench.method_compression(f"lookat-{m}", 64, 256)
        assert comp["bytes_per_token_compressed"] == expected


def test_failed_cell_recorded_not_fatal(tmp_path):
    # m=3 does not divide d_k=16 -> that cell errors, the run continues
    config = small_config(tmp_path, ["fp16-reference", "lookat-3"])
    doc = bench.run_experiment(config)
    errors = [c for c in doc["cells"] if c["error"]]
    assert len(errors) == 2  # one per input
    assert "subspace mismatch" in errors[0]["error"]
    assert doc["failed_cells"] == 2
    assert any(s["method"] == "fp16-reference" for s in doc["summary"])


def test_report_determinism(tmp_path):
    config = small_config(tmp_path, ["int8", "lookat-4"])
    a = bench.run_experiment(config)
    b = bench.run_experiment(config)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_length_sweep_rows_ordered(tmp_path):
    config = small_config(tmp_path, ["lookat-4"], seq_lengths=[16, 48])
    doc = bench.run_length_sweep(config)
    lengths = [r["seq_len"] for r in doc["rows"]]
    assert lengths == sorted(lengths)
    with pytest.raises(ValueError, match="exceeds"):
        bench.run_length_sweep(small_config(tmp_path, ["lookat-4"], seq_lengths=[64]))


def test_length_sweep_full_length_matches_experiment(tmp_path):
    config = small_config(tmp_path, ["lookat-4"], seq_lengths=[48])
    sweep = bench.run_length_sweep(config)
    exp = bench.run_experiment(small_config(tmp_path, ["lookat-4"]))
    met_sweep = sweep["rows"][0]["metrics"]
    met_exp = exp["summary"][0]["metrics"]
    for key in ("cosine_sim", "kl_div", "spearman_rho", "top5_acc"):
        assert met_sweep[key] == pytest.approx(met_exp[key], rel=1e-9)


def test_proposition_sweep_perfect_data():
    # every key becomes its own centroid -> zero quantization error
    base = SynthSpec(H=1, L=48, d_k=8, distribution="isotropic-gaussian", seed=0)
    doc = bench.run_proposition_sweep(base, [2], [48], kmeans_iters=25)
    assert doc["rows"][0]["mean_rho"] == pytest.approx(1.0, abs=1e-6)


def test_cost_model_published_numbers():
    result = bench.cost_model(512, 64, 4, 256)
    assert result["standard"].flops_per_query == 32768
    assert result["lookat"].flops_per_query == 3072
    assert result["standard"].bytes_loaded_per_query == 512 * 128
    assert result["lookat"].bytes_loaded_per_query == 512 * 4
    assert result["bandwidth_ratio"] == 32.0
    assert result["lookat_full_mac"].flops_per_query == 256 * 64 + 512 * 4


def test_cli_end_to_end(tmp_path, capsys):
    spec = {"H": 2, "L": 32, "d_k": 16, "seed": 3}
    dump_path = tmp_path / "d.lkat"
    assert cli_main(["synth", "--spec", json.dumps(spec), "--out", str(dump_path)]) == 0
    cb_path = tmp_path / "cb.lkcb"
    assert cli_main(["train", "--input", str(dump_path), "--m", "4", "--K", "16",
                     "--iters", "8", "--out", str(cb_path)]) == 0
    codes_path = tmp_path / "codes.lkcd"
    assert cli_main(["encode", "--input", str(dump_path), "--codebook", str(cb_path),
                     "--out", str(codes_path)]) == 0
    assert codes_path.stat().st_size == 4 + 12 + 2 * 32 * 4

    config = {
        "inputs": [str(dump_path)],
        "methods": ["fp16-reference", "int8", "lookat-4"],
        "pq": {"num_centroids": 16, "kmeans_iters": 8},
        "output_path": str(tmp_path / "report.json"),
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))
    assert cli_main(["eval", "--config", str(cfg_path)]) == 0
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "report.csv").exists()
    assert (tmp_path / "report.png").exists()
    header = (tmp_path / "report.csv").read_text().splitlines()[0]
    assert header.split(",") == list(bench.CSV_COLUMNS)

    assert cli_main(["cost", "--L", "512", "--dk", "64", "--m", "4"]) == 0
    out = capsys.readouterr().out
    assert "32768" in out and "3072" in out


def test_cli_eval_byte_identical_reports(tmp_path):
    config = {
        "synth": [{"H": 2, "L": 32, "d_k": 16, "seeds": [0]}],
        "methods": ["int8", "lookat-4"],
        "pq": {"num_centroids": 16, "kmeans_iters": 8},
        "output_path": str(tmp_path / "r1.json"),
        "seed": 5,
    }
    p1 = tmp_path / "c1.json"
    p1.write_text(json.dumps(config))
    assert cli_main(["eval", "--config", str(p1), "--no-figures"]) == 0
    config["output_path"] = str(tmp_path / "r2.json")
    p2 = tmp_path / "c2.json"
    p2.write_text(json.dumps(config))
    assert cli_main(["eval", "--config", str(p2), "--no-figures"]) == 0
    r1 = (tmp_path / "r1.json").read_bytes()
    r2 = (tmp_path / "r2.json").read_bytes()
    assert r1 == r2


def test_cli_eval_exit_2_on_failed_cell(tmp_path):
    config = {
        "synth": [{"H": 1, "L": 24, "d_k": 16, "seeds": [0]}],
        "methods": ["lookat-3"],
        "pq": {"num_centroids": 8, "kmeans_iters": 5},
        "output_path": str(tmp_path / "r.json"),
    }
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(config))
    assert cli_main(["eval", "--config", str(cfg), "--no-figures"]) == 2


def test_cross_sample_std_present(tmp_path):
    config = small_config(tmp_path, ["int4"])
    doc = bench.run_experiment(config)
    met = doc["summary"][0]["metrics"]
    assert doc["summary"][0]["samples"] == 2
    assert met["cosine_sim_std"] >= 0.0


def test_calibration_dump_cross_domain(tmp_path):
    calib_dump = generate_synthetic(SynthSpec(H=2, L=48, d_k=16, seed=9))
    calib_path = tmp_path / "calib.lkat"
    save_dump(calib_dump, calib_path)
    config = small_config(tmp_path, ["lookat-4"],
                          calibration_input=str(calib_path))
    doc = bench.run_experiment(config)
    assert doc["failed_cells"] == 0
