import os

import pytest

from varadapt.cli import main

SMALL = """[pretrain]
iters = 60
[stage1]
iters = 60
[stage2]
iters = 8
eval_every = 4
fisher_samples = 4
heldout = 32
[eval]
k = 3
samples = 32
truncation = 0.5, 1.0
"""


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return str(p)


def _files(d):
    return {n: open(os.path.join(d, n), "rb").read() for n in sorted(os.listdir(d))}


def test_usage_errors(tmp_path, capsys):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["world", "--config", str(tmp_path / "nope.ini")]) == 1
    assert main(["world", "--seed", "-4", "--out", str(tmp_path / "o")]) == 1


def test_bad_config_is_1(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[stage2]\nlambda_ewc = banana\n")
    assert main(["world", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "stage2.lambda_ewc" in capsys.readouterr().err


def test_numeric_abort_is_2(tmp_path, capsys):
    p = tmp_path / "same.ini"
    p.write_text("[world]\nP = 2\ndomains = a, b\n[domain.a]\nmean = 1, 1\nscale = 1\n"
                 "[domain.b]\nmean = 1, 1\nscale = 1\n[stage2]\nsource = a\ntarget = b\n"
                 "[stage1]\nK = 2\niters = 2\n[pretrain]\niters = 2\n")
    out = str(tmp_path / "o")
    assert main(["world", "--config", str(p), "--out", out]) == 0
    assert main(["variations", "--config", str(p), "--out", out]) == 0
    assert main(["pretrain", "--config", str(p), "--out", out]) == 0
    assert main(["adapt", "--config", str(p), "--out", out, "--loss-mode", "dir"]) == 2


def test_missing_prerequisite_is_1(tmp_path, small):
    assert main(["pretrain", "--config", small, "--out", str(tmp_path / "o")]) == 1


def test_stages_and_write_once(tmp_path, small, capsys):
    out = str(tmp_path / "run")
    base = ["--config", small, "--out", out]
    for cmd in ("world", "pretrain", "variations"):
        assert main([cmd, *base]) == 0, cmd
    assert main(["adapt", *base, "--loss-mode", "dm"]) == 0
    assert main(["adapt", *base, "--loss-mode", "dir"]) == 0
    assert main(["eval", *base, "--loss-mode", "dm"]) == 0
    assert main(["eval", *base, "--generator", "src"]) == 0
    assert main(["report", *base]) == 0
    names = set(os.listdir(out))
    for n in ("config.ini", "world.json", "generator_src.json", "variations.json", "stage1.csv",
              "generator_dm.json", "losses_dm.csv", "metrics_dm.csv", "generator_dir.json",
              "eval_dm.csv", "eval_src.csv", "sse.svg", "losses_dm.svg"):
        assert n in names, n
    assert "fisher.json" not in names
    # outputs are write-once
    assert main(["adapt", *base, "--loss-mode", "dm"]) == 1
    assert main(["adapt", *base, "--loss-mode", "dm", "--force"]) == 0
    # a different config may not reuse the directory
    assert main(["world", *base, "--seed", "9"]) == 1


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--cases", "1"]) == 0
    out = capsys.readouterr().out
    assert out.count(" ok") == 8


@pytest.mark.slow
def test_full_run_reproducible(tmp_path, small):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["full-run", "--config", small, "--out", a]) == 0
    assert main(["full-run", "--config", small, "--out", b, "--jobs", "2"]) == 0
    fa, fb = _files(a), _files(b)
    assert fa.keys() == fb.keys()
    assert "ablation.csv" in fa and "eval_full.csv" in fa
    for n in fa:
        if n != "config.ini":
            assert fa[n] == fb[n], n
