import json
from pathlib import Path

import pytest

from mf2summ.cli import main


def run_cli(capsys, *argv):
    """Invoke the CLI entry point; returns (exit_code, stdout, stderr)."""
    with pytest.raises(SystemExit) as exc:
        main(list(argv))
    out, err = capsys.readouterr()
    return exc.value.code, out, err


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("clifix")
    from mf2summ.features import gen_synthetic_fixture

    manifest = gen_synthetic_fixture(2, 48, 12, 6, 11, d / "fixtures")
    return manifest


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory, fixture_dir):
    out = tmp_path_factory.mktemp("clirun")
    with pytest.raises(SystemExit) as exc:
        main([
            "train", "--manifest", str(fixture_dir),
            "--epochs", "3", "--lr", "1e-3", "--seed", "1",
            "--out", str(out),
        ])
    assert exc.value.code == 0
    return out


# --- gen-fixtures --------------------------------------------------------------

def test_gen_fixtures_deterministic(capsys, tmp_path):
    args = ["gen-fixtures", "--videos", "2", "--frames", "32", "--dv", "8",
            "--da", "4", "--seed", "3"]
    code_a, out_a, _ = run_cli(capsys, *args, "--out", str(tmp_path / "a"))
    code_b, out_b, _ = run_cli(capsys, *args, "--out", str(tmp_path / "b"))
    assert code_a == code_b == 0
    man_a, man_b = Path(out_a.strip()), Path(out_b.strip())
    assert man_a.read_text() == man_b.read_text()
    for f in sorted(p.name for p in man_a.parent.glob("*.mf2f")):
        assert (man_a.parent / f).read_bytes() == (man_b.parent / f).read_bytes()


def test_gen_fixtures_rejects_zero_frames(capsys, tmp_path):
    out = tmp_path / "bad"
    code, _, err = run_cli(capsys, "gen-fixtures", "--frames", "0", "--out", str(out))
    assert code == 1
    assert "config error" in err
    assert not out.exists()  # validation happens before any writes


def test_unknown_option_is_usage_error(capsys):
    code, _, err = run_cli(capsys, "gen-fixtures", "--bogus", "1")
    assert code == 1


# --- train ---------------------------------------------------------------------

def test_train_writes_checkpoint_and_log(capsys, trained_run):
    assert (trained_run / "model.ckpt").exists()
    log_lines = (trained_run / "train.log").read_text().strip().split("\n")
    effective = json.loads(log_lines[0])
    assert effective["train"]["epochs"] == 3
    assert effective["train"]["seed"] == 1
    assert effective["ablations"] == {
        "no_audio": False, "no_align_mask": False, "no_centerness": False,
    }
    assert len(log_lines) == 1 + 3  # config echo + one line per epoch


def test_train_missing_manifest_is_data_error(capsys, tmp_path):
    code, _, err = run_cli(
        capsys, "train", "--manifest", str(tmp_path / "nope.json"),
        "--epochs", "1", "--out", str(tmp_path / "o"),
    )
    assert code == 2
    assert "data error" in err


def test_train_unknown_config_key_rejected(capsys, tmp_path, fixture_dir):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("train:\n  epochz: 5\n")
    code, _, err = run_cli(
        capsys, "train", "--manifest", str(fixture_dir),
        "--config", str(cfg), "--out", str(tmp_path / "o"),
    )
    assert code == 1
    assert "epochz" in err


def test_train_config_file_with_flag_override(capsys, tmp_path, fixture_dir):
    cfg = tmp_path / "ok.yaml"
    cfg.write_text("train:\n  epochs: 5\n  lr: 1.0e-3\nmodel:\n  d_model: 8\n  n_heads: 2\n  head_hidden: 8\n")
    out = tmp_path / "run"
    code, _, _ = run_cli(
        capsys, "train", "--manifest", str(fixture_dir),
        "--config", str(cfg), "--epochs", "2", "--out", str(out),
    )
    assert code == 0
    effective = json.loads((out / "train.log").read_text().split("\n")[0])
    assert effective["train"]["epochs"] == 2  # flag wins over file
    assert effective["model"]["d_model"] == 8


def test_train_ablation_flags_recorded(capsys, tmp_path, fixture_dir):
    out = tmp_path / "abl"
    code, _, _ = run_cli(
        capsys, "train", "--manifest", str(fixture_dir),
        "--epochs", "1", "--no-audio", "--no-centerness",
        "--out", str(out),
    )
    assert code == 0
    effective = json.loads((out / "train.log").read_text().split("\n")[0])
    assert effective["ablations"]["no_audio"] is True
    assert effective["ablations"]["no_centerness"] is True
    assert effective["model"]["use_audio"] is False
    assert effective["train"]["mu"] == 0.0


def test_train_resume_matches_continuous(capsys, tmp_path, fixture_dir):
    base = ["train", "--manifest", str(fixture_dir), "--lr", "1e-3", "--seed", "2"]
    full, half = tmp_path / "full", tmp_path / "half"
    code, _, _ = run_cli(capsys, *base, "--epochs", "4", "--out", str(full))
    assert code == 0
    code, _, _ = run_cli(capsys, *base, "--epochs", "2", "--out", str(half))
    assert code == 0
    code, _, _ = run_cli(
        capsys, *base, "--epochs", "4",
        "--resume", str(half / "model.ckpt"), "--out", str(half),
    )
    assert code == 0
    from mf2summ.model import load_checkpoint

    p_full, _, _, _ = load_checkpoint(full / "model.ckpt")
    p_res, _, _, _ = load_checkpoint(half / "model.ckpt")
    assert all(p_full[n].data.tobytes() == p_res[n].data.tobytes() for n in p_full)


# --- summarize -----------------------------------------------------------------

def test_summarize_outputs(capsys, tmp_path, fixture_dir, trained_run):
    out = tmp_path / "sums"
    code, stdout, _ = run_cli(
        capsys, "summarize", "--manifest", str(fixture_dir),
        "--checkpoint", str(trained_run / "model.ckpt"), "--out", str(out),
    )
    assert code == 0
    lines = (out / "summaries.jsonl").read_text().strip().split("\n")
    assert len(lines) == 1 + 2  # config echo + one record per video
    for line in lines[1:]:
        rec = json.loads(line)
        assert rec["n_selected_frames"] <= rec["budget"]
        assert (out / f"{rec['video_id']}.scores.jsonl").exists()
    assert "<= 15%" in stdout


def test_summarize_dim_mismatch_is_data_error(capsys, tmp_path, trained_run):
    from mf2summ.features import gen_synthetic_fixture

    other = gen_synthetic_fixture(1, 32, 20, 6, 0, tmp_path / "wrongdims")
    code, _, err = run_cli(
        capsys, "summarize", "--manifest", str(other),
        "--checkpoint", str(trained_run / "model.ckpt"), "--out", str(tmp_path / "o"),
    )
    assert code == 2
    assert "data error" in err


# --- eval ----------------------------------------------------------------------

def test_eval_report(capsys, tmp_path, fixture_dir, trained_run):
    out = tmp_path / "ev"
    code, stdout, _ = run_cli(
        capsys, "eval", "--manifest", str(fixture_dir),
        "--checkpoint", str(trained_run / "model.ckpt"),
        "--protocol", "max", "--out", str(out),
    )
    assert code == 0
    assert "dataset F (max over users)" in stdout
    lines = (out / "eval.jsonl").read_text().strip().split("\n")
    footer = json.loads(lines[-1])
    assert footer["n_videos"] == 2
    assert 0.0 <= footer["dataset_f"] <= 1.0


def test_eval_bad_protocol_is_usage_error(capsys, tmp_path, fixture_dir, trained_run):
    code, _, _ = run_cli(
        capsys, "eval", "--manifest", str(fixture_dir),
        "--checkpoint", str(trained_run / "model.ckpt"),
        "--protocol", "median", "--out", str(tmp_path / "o"),
    )
    assert code == 1


# --- inspect -------------------------------------------------------------------

def test_inspect_feature_file(capsys, fixture_dir):
    feat = sorted(fixture_dir.parent.glob("*.visual.mf2f"))[0]
    code, out, _ = run_cli(capsys, "inspect", str(feat))
    assert code == 0
    assert "modality: visual" in out
    assert "T: 48" in out
    assert "d: 12" in out


def test_inspect_checkpoint(capsys, trained_run):
    code, out, _ = run_cli(capsys, "inspect", str(trained_run / "model.ckpt"))
    assert code == 0
    assert "checkpoint:" in out
    assert "adam state: present" in out


def test_inspect_missing_file(capsys, tmp_path):
    code, _, err = run_cli(capsys, "inspect", str(tmp_path / "nothing.bin"))
    assert code == 2


def test_inspect_corrupt_file(capsys, tmp_path):
    bad = tmp_path / "junk.feat"
    bad.write_bytes(b"XXXXXXXXXXXXXXXXXXXX")
    code, _, err = run_cli(capsys, "inspect", str(bad))
    assert code == 2
