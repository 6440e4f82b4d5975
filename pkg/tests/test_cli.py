import json

import numpy as np
import pytest

from facebias.audit import LogEntry, PredictionLog, axis, group_slice
from facebias.cli import main
from facebias.core import DatasetSchema, load_dataset, save_dataset
from facebias.debias import DebiasModel, Hyperparams
from facebias.synth import SynthConfig, generate
from oracles import output_files, random_log, run_cli_pipeline


@pytest.fixture
def synth_dir(tmp_path):
    assert main(["synth", "--out-dir", str(tmp_path), "-n", "200", "--seed", "4"]) == 0
    return tmp_path


def test_synth_outputs_and_manifest(synth_dir):
    names = {p.name for p in synth_dir.iterdir()}
    assert {"dataset.csv", "schema.json", "ground_truth.json", "manifest-synth.json"} <= names
    man = json.loads((synth_dir / "manifest-synth.json").read_text())
    assert man["subcommand"] == "synth" and man["seed"] == 4 and man["config"]["n"] == 200
    assert {"inputs", "outputs", "tool_version", "started", "duration_s"} <= set(man)
    ds = load_dataset(synth_dir / "dataset.csv", DatasetSchema.load(synth_dir / "schema.json"))
    assert ds == generate(SynthConfig(n=200, seed=4))[0]


def test_pipeline_is_byte_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli_pipeline(a) == [0, 0, 0]
    assert run_cli_pipeline(b) == [0, 0, 0]
    fa, fb = output_files(a), output_files(b)
    assert set(fa) == {"dataset.csv", "schema.json", "ground_truth.json", "model.json", "history.csv", "diversity.csv", "diversity.json"}
    assert fa == fb


def test_diversity_log_base(synth_dir):
    out = str(synth_dir)
    args = ["diversity", f"{out}/dataset.csv", f"{out}/schema.json", "--out-dir", out, "--attributes", "gender"]
    assert main(args + ["--log-base", "2"]) == 0
    h2 = json.loads((synth_dir / "diversity.json").read_text())[0]["ShH"]
    assert main(args) == 0
    he = json.loads((synth_dir / "diversity.json").read_text())[0]["ShH"]
    assert h2 == pytest.approx(he / np.log(2))


def test_audit_matches_library(synth_dir):
    schema = DatasetSchema.load(synth_dir / "schema.json")
    ds = load_dataset(synth_dir / "dataset.csv", schema)
    log = random_log(ds, 3, "age_regression")
    (synth_dir / "pred.jsonl").write_text(log.to_jsonl())
    out = str(synth_dir)
    code = main(["audit", f"{out}/dataset.csv", f"{out}/schema.json", f"{out}/pred.jsonl", "--metric", "mae", "--out-dir", out])
    assert code == 0
    expected = group_slice(log, ds, [axis("gender"), axis("age")], "mae").to_json()
    assert (synth_dir / "audit.json").read_text() == expected
    assert (synth_dir / "audit.csv").exists()


def test_kinship_audit(synth_dir):
    log = PredictionLog([LogEntry(f"k{j}", "verification", j % 3 > 0, True, "M-D", float(j)) for j in range(40)])
    (synth_dir / "kin.jsonl").write_text(log.to_jsonl())
    out = str(synth_dir)
    assert main(["audit", f"{out}/dataset.csv", f"{out}/schema.json", f"{out}/kin.jsonl", "--kinship", "--out-dir", out]) == 0
    doc = json.loads((synth_dir / "audit.json").read_text())
    assert doc["overflow"] == 9 and doc["relationship_mean"]["M-D"] == pytest.approx(26 / 40)


def test_apply_identity_model_returns_input(synth_dir):
    schema = DatasetSchema.load(synth_dir / "schema.json")
    I = np.eye(schema.d1)
    model = DebiasModel(
        I, I, np.zeros((schema.K_p, schema.d1)), np.zeros(schema.K_p),
        [np.zeros((schema.d1, 1))] * 2, [np.zeros((1, schema.d1))] * 2,
        [np.zeros((5, 1)), np.zeros((2, 1))], [np.zeros(5), np.zeros(2)],
    )
    model.save(synth_dir / "model.json", Hyperparams())
    out = str(synth_dir)
    assert main(["debias", "apply", f"{out}/dataset.csv", f"{out}/schema.json", f"{out}/model.json", "--out-dir", out]) == 0
    assert (synth_dir / "debiased.csv").read_text() == (synth_dir / "dataset.csv").read_text()
    assert (synth_dir / "manifest-debias-apply.json").exists()


def test_boxtrack_command(tmp_path):
    doc = {"frames": 3, "detections": [[[0, 0, 10, 10]], [], [[1, 0, 11, 10]]], "anchors": {"0": [0, 0, 10, 10]}}
    (tmp_path / "in.json").write_text(json.dumps(doc))
    assert main(["boxtrack", str(tmp_path / "in.json"), "--out-dir", str(tmp_path)]) == 0
    out = json.loads((tmp_path / "track.json").read_text())
    assert out["flags"] == ["anchored", "carried", "matched"]


def test_input_errors_exit_2(synth_dir, tmp_path, capsys):
    out = str(synth_dir)
    assert main(["diversity", f"{out}/missing.csv", f"{out}/schema.json", "--out-dir", out]) == 2
    assert "missing.csv" in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    lines = (synth_dir / "dataset.csv").read_text().splitlines()
    bad.write_text("\n".join(lines[:3] + ["r_bad,oops"]) + "\n")
    assert main(["diversity", str(bad), f"{out}/schema.json", "--out-dir", out]) == 2
    assert ":4:" in capsys.readouterr().err
    empty = tmp_path / "empty.csv"
    empty.write_text(lines[0] + "\n")
    assert main(["diversity", str(empty), f"{out}/schema.json", "--out-dir", out]) == 2
    (tmp_path / "p.jsonl").write_text('{"id": "nobody", "task": "classification", "predicted": 0, "target": 0}\n')
    assert main(["audit", f"{out}/dataset.csv", f"{out}/schema.json", str(tmp_path / "p.jsonl"), "--out-dir", out]) == 2
    assert main(["diversity", f"{out}/dataset.csv", f"{out}/schema.json", "--attributes", "height", "--out-dir", out]) == 2


def test_numerical_failure_exit_3(tmp_path):
    ds, _ = generate(SynthConfig(n=64))
    save_dataset(ds.with_embeddings(ds.Z * 1e200), tmp_path / "d.csv")
    ds.schema.save(tmp_path / "s.json")
    code = main(["debias", "train", str(tmp_path / "d.csv"), str(tmp_path / "s.json"), "--epochs", "2", "--clip-norm", "0", "--out-dir", str(tmp_path)])
    assert code == 3
    assert not (tmp_path / "manifest-debias-train.json").exists()
