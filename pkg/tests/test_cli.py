import math

import numpy as np
import pytest

from spwood import cli
from spwood.dataset import load_dota_dir, round_half_up
from spwood.geometry import OrientedBox, box_corners
from spwood.layout import write_pgm


@pytest.fixture(autouse=True)
def clean_seed_env(monkeypatch):
    monkeypatch.delenv("SPWOOD_SEED", raising=False)


@pytest.fixture
def corpus_dir(tmp_path):
    rng = np.random.default_rng(0)
    src = tmp_path / "anns"
    src.mkdir()
    for i in range(12):
        lines = []
        for cat, count in (("PL", int(rng.integers(1, 6))), ("BD", int(rng.random() < 0.5))):
            for _ in range(count):
                x, y = rng.uniform(0, 500, 2)
                lines.append(
                    f"{x:.1f} {y:.1f} {x + 8:.1f} {y:.1f} {x + 8:.1f} {y + 4:.1f} "
                    f"{x:.1f} {y + 4:.1f} {cat} 0"
                )
        (src / f"img{i:03d}.txt").write_text("\n".join(lines) + "\n")
    return src


def read_tree(root):
    return {
        p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()
    }


SCENARIO = """rounds = 2
seed = 5
P3.n_pos = 60
P3.n_neg = 180
P3.mu_p = 0.74
P3.mu_n = 0.40
P3.sigma = 0.04
P4.n_pos = 60
P4.n_neg = 180
P4.mu_p = 0.50
P4.mu_n = 0.16
P4.sigma = 0.04
"""


# --- sparsify -------------------------------------------------------------------


def test_sparsify_golden_double_run(tmp_path, corpus_dir, capsys):
    out = tmp_path / "out"
    args = [
        "sparsify", "--input", str(corpus_dir), "--out", str(out),
        "--method", "single", "--sparse", "0.3", "--partial", "0.5", "--seed", "7",
    ]
    assert cli.main(args) == 0
    first = read_tree(out)
    assert cli.main(args) == 0
    assert read_tree(out) == first
    assert any(p.name == "stats.csv" for p in first)
    assert any(p.name == "labeled_ids.txt" for p in first)


def test_sparsify_overall_exact_retention(tmp_path, corpus_dir):
    out = tmp_path / "out"
    assert cli.main([
        "sparsify", "--input", str(corpus_dir), "--out", str(out),
        "--method", "overall", "--sparse", "0.4", "--seed", "1",
    ]) == 0
    before = load_dota_dir(corpus_dir).category_counts()
    after = load_dota_dir(out / "annotations").category_counts()
    for cat, n in before.items():
        assert after.get(cat, 0) == round_half_up(0.4 * n)


def test_sparsify_single_keeps_singleton_categories(tmp_path, corpus_dir):
    out = tmp_path / "out"
    assert cli.main([
        "sparsify", "--input", str(corpus_dir), "--out", str(out),
        "--method", "single", "--sparse", "0.1", "--seed", "1",
    ]) == 0
    before = load_dota_dir(corpus_dir)
    after = load_dota_dir(out / "annotations")
    for image_id, records in before.images.items():
        assert {r.category for r in records} == {
            r.category for r in after.images[image_id]
        }


def test_sparsify_weaken_point_output(tmp_path, corpus_dir):
    out = tmp_path / "out"
    assert cli.main([
        "sparsify", "--input", str(corpus_dir), "--out", str(out),
        "--method", "overall", "--sparse", "1.0", "--weaken", "point",
    ]) == 0
    line = next(
        iter((out / "annotations").glob("*.txt"))
    ).read_text().splitlines()[0]
    fields = line.split()
    assert len(fields) == 3
    float(fields[0]), float(fields[1])


def test_seed_env_var_and_flag_precedence(tmp_path, corpus_dir, monkeypatch):
    def run(tag, extra):
        out = tmp_path / tag
        assert cli.main([
            "sparsify", "--input", str(corpus_dir), "--out", str(out),
            "--method", "single", "--sparse", "0.3",
        ] + extra) == 0
        return (out / "annotations").glob("*.txt")

    def tree(files):
        return {f.name: f.read_text() for f in files}

    monkeypatch.setenv("SPWOOD_SEED", "21")
    env_only = tree(run("env", []))
    monkeypatch.delenv("SPWOOD_SEED")
    flag_only = tree(run("flag", ["--seed", "21"]))
    assert env_only == flag_only
    monkeypatch.setenv("SPWOOD_SEED", "99")
    flag_wins = tree(run("both", ["--seed", "21"]))
    assert flag_wins == flag_only


# --- fit-gmm --------------------------------------------------------------------


def write_scores_csv(path, per_level):
    lines = ["level,score"]
    for level, scores in per_level.items():
        lines.extend(f"{level},{s:.6f}" for s in scores)
    path.write_text("\n".join(lines) + "\n")


def test_fit_gmm_planted_levels(tmp_path):
    # 4-sigma separation keeps scores dense around each boundary
    rng = np.random.default_rng(2)
    per_level = {}
    boundaries = {}
    for i, level in enumerate(("P3", "P4")):
        mu_n, mu_p = 0.20 + 0.15 * i, 0.60 + 0.15 * i
        scores = np.concatenate([
            np.clip(rng.normal(mu_n, 0.1, 400), 0.01, 0.99),
            np.clip(rng.normal(mu_p, 0.1, 400), 0.01, 0.99),
        ])
        per_level[level] = scores
        boundaries[level] = (mu_n + mu_p) / 2
    src = tmp_path / "scores.csv"
    write_scores_csv(src, per_level)
    out = tmp_path / "fits.csv"
    assert cli.main(["fit-gmm", "--input", str(src), "--out", str(out)]) == 0
    rows = [
        line.split(",") for line in out.read_text().splitlines()
        if line and not line.startswith(("#", "level"))
    ]
    assert [r[0] for r in rows] == ["P3", "P4"]
    for r in rows:
        assert abs(float(r[7]) - boundaries[r[0]]) <= 0.05


def test_fit_gmm_constant_scores_degenerate_exit(tmp_path):
    src = tmp_path / "scores.csv"
    src.write_text("level,score\n" + "\n".join(["P3,0.5"] * 40) + "\n")
    out = tmp_path / "fits.csv"
    assert cli.main(["fit-gmm", "--input", str(src), "--out", str(out)]) == cli.EXIT_DEGENERATE


def test_fit_gmm_cpf_single_level_matches_mpf(tmp_path):
    rng = np.random.default_rng(3)
    scores = np.concatenate([
        np.clip(rng.normal(0.2, 0.05, 300), 0.01, 0.99),
        np.clip(rng.normal(0.8, 0.05, 300), 0.01, 0.99),
    ])
    src = tmp_path / "scores.csv"
    write_scores_csv(src, {"P5": scores})

    def tau_of(mode, path):
        assert cli.main(["fit-gmm", "--input", str(src), "--out", str(path), "--mode", mode]) == 0
        row = [l for l in path.read_text().splitlines() if not l.startswith(("#", "level"))][0]
        return float(row.split(",")[7])

    assert tau_of("mpf", tmp_path / "a.csv") == tau_of("cpf", tmp_path / "b.csv")


def test_fit_gmm_sparse_level_inherits_pooled(tmp_path):
    rng = np.random.default_rng(4)
    rich = np.concatenate([
        np.clip(rng.normal(0.3, 0.1, 400), 0.01, 0.99),
        np.clip(rng.normal(0.7, 0.1, 400), 0.01, 0.99),
    ])
    src = tmp_path / "scores.csv"
    write_scores_csv(src, {"P3": rich, "P7": np.array([0.4, 0.5, 0.6])})
    out = tmp_path / "fits.csv"
    assert cli.main(["fit-gmm", "--input", str(src), "--out", str(out)]) == 0
    rows = {
        line.split(",")[0]: line.split(",")
        for line in out.read_text().splitlines()
        if line and not line.startswith(("#", "level"))
    }
    pooled_out = tmp_path / "pooled.csv"
    assert cli.main(["fit-gmm", "--input", str(src), "--out", str(pooled_out), "--mode", "cpf"]) == 0
    pooled_row = [
        l for l in pooled_out.read_text().splitlines() if l.startswith("pooled")
    ][0]
    assert rows["P7"][7] == pooled_row.split(",")[7]  # sparse level inherits pooled tau


def test_fit_gmm_malformed_csv_reports_line(tmp_path, capsys):
    src = tmp_path / "scores.csv"
    src.write_text("level,score\nP3,0.4\nP3,spam\n")
    assert cli.main(["fit-gmm", "--input", str(src), "--out", str(tmp_path / "o.csv")]) == cli.EXIT_ERROR
    assert "line 3" in capsys.readouterr().err


# --- eval-loss ------------------------------------------------------------------


def test_eval_loss_entries(tmp_path, capsys):
    src = tmp_path / "losses.txt"
    src.write_text(
        "supervised parts=1,1,1,1,1,1\n"
        "sparse-cls p_t=0.5 kind=positive alpha_t=0.25 gamma=2\n"
    )
    assert cli.main(["eval-loss", str(src)]) == 0
    out = capsys.readouterr().out
    assert "value=18.2" in out
    assert "value=0.04332169878" in out


def test_eval_loss_domain_error_line(tmp_path, capsys):
    src = tmp_path / "losses.txt"
    src.write_text("sparse-cls p_t=1.0 kind=positive\nsupervised parts=1,1,1,1,1,1\n")
    assert cli.main(["eval-loss", str(src)]) == cli.EXIT_ERROR
    out = capsys.readouterr().out
    assert "line 1: error:" in out
    assert "value=18.2" in out  # later entries still evaluated


def test_eval_loss_random_gradient_sweep(capsys):
    assert cli.main(["eval-loss", "--check-grad", "--random", "5", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "overall max_rel_err=" in out


# --- simulate -------------------------------------------------------------------


def test_simulate_reproducible_bytes(tmp_path):
    scen = tmp_path / "scen.txt"
    scen.write_text(SCENARIO)
    out = tmp_path / "report.csv"
    args = ["simulate", "--scenario", str(scen), "--out", str(out), "--mode", "mpf"]
    assert cli.main(args) == 0
    first = out.read_bytes()
    assert cli.main(args) == 0
    assert out.read_bytes() == first
    header = first.decode().splitlines()[1]
    assert header == "round,level,tau,precision,recall,f1,n_selected"


def test_simulate_zero_rounds_rejected(tmp_path, capsys):
    scen = tmp_path / "scen.txt"
    scen.write_text(SCENARIO.replace("rounds = 2", "rounds = 0"))
    assert cli.main([
        "simulate", "--scenario", str(scen), "--out", str(tmp_path / "r.csv")
    ]) == cli.EXIT_ERROR


def test_simulate_paired_footer(tmp_path, capsys):
    scen = tmp_path / "scen.txt"
    scen.write_text(SCENARIO)
    out = tmp_path / "report.csv"
    assert cli.main([
        "simulate", "--scenario", str(scen), "--out", str(out),
        "--mode", "paired", "--repeats", "6",
    ]) == 0
    mpf_csv = (tmp_path / "report.mpf.csv").read_text()
    cpf_csv = (tmp_path / "report.cpf.csv").read_text()
    assert "# paired summary:" in mpf_csv and "# paired summary:" in cpf_csv
    assert "mpf_mean_f1=" in capsys.readouterr().out


# --- report ---------------------------------------------------------------------


def test_report_compares_directories(tmp_path, corpus_dir, capsys):
    single = tmp_path / "single"
    overall = tmp_path / "overall"
    for method, out in (("single", single), ("overall", overall)):
        assert cli.main([
            "sparsify", "--input", str(corpus_dir), "--out", str(out),
            "--method", method, "--sparse", "0.3", "--seed", "2",
        ]) == 0
    stats = tmp_path / "stats.csv"
    assert cli.main([
        "report", "--single", str(single / "annotations"),
        "--overall", str(overall / "annotations"), "--out", str(stats),
    ]) == 0
    text = stats.read_text()
    assert text.splitlines()[1] == "category,count_single,count_overall,relative_difference_percent"
    single_counts = load_dota_dir(single / "annotations").category_counts()
    for line in text.splitlines()[2:]:
        cat, cs, _, _ = line.split(",")
        assert int(cs) == single_counts.get(cat, 0)


# --- watershed ------------------------------------------------------------------


def test_watershed_command(tmp_path):
    img = np.zeros((48, 48))
    img[18:30, 12:36] = 1.0  # 24 x 12 rectangle
    write_pgm(tmp_path / "scene.pgm", img)
    (tmp_path / "pts.txt").write_text("24 24 ship\n")
    out = tmp_path / "masks"
    assert cli.main([
        "watershed", "--image", str(tmp_path / "scene.pgm"),
        "--points", str(tmp_path / "pts.txt"), "--out-dir", str(out),
    ]) == 0
    assert (out / "mask_000.pgm").exists()
    rows = [
        l for l in (out / "targets.csv").read_text().splitlines()
        if l and not l.startswith(("#", "seed_index"))
    ]
    _, _, _, cat, w_t, h_t, valid = rows[0].split(",")
    assert cat == "ship" and valid == "1"
    assert abs(float(w_t) - 24) <= 2 and abs(float(h_t) - 12) <= 2


# --- help surfaces ----------------------------------------------------------------


@pytest.mark.parametrize(
    "command,flags",
    [
        ("sparsify", ["--method", "--partial", "--sparse", "--seed", "--weaken", "--out"]),
        ("fit-gmm", ["--mode", "--input", "--out"]),
        ("eval-loss", ["--check-grad", "--random", "--seed"]),
        ("simulate", ["--scenario", "--mode", "--repeats", "--seed", "--out"]),
        ("report", ["--single", "--overall", "--out"]),
        ("watershed", ["--image", "--points", "--out-dir", "--theta"]),
    ],
)
def test_help_lists_flags(command, flags, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([command, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for flag in flags:
        assert flag in text
