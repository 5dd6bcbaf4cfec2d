"""Command-line interface.

Subcommands: sparsify, fit-gmm, eval-loss, simulate, report, watershed.
Every command is deterministic given its inputs, flags, and seed. The
seed is resolved as ``--seed`` > ``SPWOOD_SEED`` environment variable >
the command's documented default. Output CSVs start with a comment line
recording the tool version, the command line, and the seed.

Exit codes: 0 success, 1 input or runtime error, 2 usage error,
3 degenerate input (no structure to fit).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, dataset, filtering, gradcheck, layout, pipeline
from .errors import (
    DegenerateInputError,
    DotaParseError,
    InvalidInputError,
    NumericalDegeneracyError,
)
from .filtering import GmmConfig, LevelScores, PyramidLevel
from .geometry import OrientedBox, PointAnnotation
from .losses import Flip, FocalParams, PredictionTriple, Rotate, SampleKind, SupervisedWeights

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DEGENERATE = 3


def _resolve_seed(explicit, default: int) -> int:
    if explicit is not None:
        return explicit
    env = os.environ.get("SPWOOD_SEED")
    if env is not None:
        return int(env)
    return default


def _comment_header(args, seed) -> str:
    cmd = " ".join(args._argv)
    return f"# spwood {__version__} | cmd: {cmd} | seed: {seed}\n"


def _fmt(v: float) -> str:
    return f"{v:.10g}"


# --- sparsify ----------------------------------------------------------------


def cmd_sparsify(args) -> int:
    ann = dataset.load_dota_dir(args.input)
    seed = _resolve_seed(args.seed, 0)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.partial < 1.0:
        labeled_ids, unlabeled_ids = dataset.select_partial(ann, args.partial, seed)
        (out_dir / "labeled_ids.txt").write_text(
            "".join(f"{i}\n" for i in labeled_ids), encoding="utf-8"
        )
        (out_dir / "unlabeled_ids.txt").write_text(
            "".join(f"{i}\n" for i in unlabeled_ids), encoding="utf-8"
        )
        labeled = dataset.subset_images(ann, labeled_ids)
    else:
        labeled = ann

    config = dataset.SparsifyConfig(
        method=args.method,
        partial_ratio=args.partial,
        sparse_ratio=args.sparse,
        seed=seed,
    )
    sparse = dataset.sparsify(labeled, config)

    ann_dir = out_dir / "annotations"
    ann_dir.mkdir(parents=True, exist_ok=True)
    if args.weaken == "none":
        rendered = dataset.serialize_dota(sparse)
    else:
        rendered = dataset.serialize_weak(sparse, dataset.WeakKind(args.weaken))
    for image_id in sorted(rendered):
        (ann_dir / f"{image_id}.txt").write_text(rendered[image_id], encoding="utf-8")

    before = labeled.category_counts()
    after = sparse.category_counts()
    categories = sorted(before, key=dataset.category_sort_key)
    stats_path = Path(args.stats) if args.stats else out_dir / "stats.csv"
    with open(stats_path, "w", encoding="utf-8") as fh:
        fh.write(_comment_header(args, seed))
        fh.write("category,kept,total,retention_percent\n")
        for cat in categories:
            kept, total = after.get(cat, 0), before[cat]
            fh.write(f"{cat},{kept},{total},{_fmt(100.0 * kept / total)}\n")
    for cat in categories:
        kept, total = after.get(cat, 0), before[cat]
        print(f"{cat}: kept {kept}/{total} ({100.0 * kept / total:.1f}%)")
    print(f"wrote {len(rendered)} annotation files to {ann_dir}")
    return EXIT_OK


# --- fit-gmm -----------------------------------------------------------------


def _read_level_scores(path) -> list[LevelScores]:
    by_level: dict[PyramidLevel, list[float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if line_no == 1 and parts[:2] == ["level", "score"]:
                continue
            if len(parts) != 2:
                raise InvalidInputError(
                    f"{path}: line {line_no}: expected 'level,score', got {raw!r}"
                )
            try:
                level = PyramidLevel(parts[0])
            except ValueError:
                raise InvalidInputError(
                    f"{path}: line {line_no}: unknown level {parts[0]!r}"
                ) from None
            try:
                score = float(parts[1])
            except ValueError:
                raise InvalidInputError(
                    f"{path}: line {line_no}: bad score {parts[1]!r}"
                ) from None
            if not 0.0 < score < 1.0:
                raise InvalidInputError(
                    f"{path}: line {line_no}: score {score} outside (0, 1)"
                )
            by_level.setdefault(level, []).append(score)
    return [
        LevelScores(level, np.array(by_level[level]))
        for level in PyramidLevel
        if level in by_level
    ]


def _fit_row(level_name: str, fit: filtering.GmmFit, tau: float) -> str:
    return ",".join(
        [
            level_name,
            _fmt(fit.w_p),
            _fmt(fit.mu_p),
            _fmt(fit.var_p),
            _fmt(fit.w_n),
            _fmt(fit.mu_n),
            _fmt(fit.var_n),
            _fmt(tau),
            str(int(fit.converged)),
        ]
    )


def cmd_fit_gmm(args) -> int:
    per_level = _read_level_scores(args.input)
    if not per_level:
        raise DegenerateInputError(f"no score rows in {args.input}")
    config = GmmConfig()
    rows = []
    pooled = np.concatenate([ls.scores for ls in per_level])
    if args.mode == "cpf":
        fit = filtering.fit_gmm(pooled, config)
        tau = filtering.threshold_from_fit(fit, pooled, config.rule).tau
        rows.append(_fit_row("pooled", fit, tau))
    else:
        pooled_fit = None
        pooled_tau = None
        if any(filtering.is_degenerate_level(ls.scores, config) for ls in per_level):
            pooled_fit = filtering.fit_gmm(pooled, config)
            pooled_tau = filtering.threshold_from_fit(pooled_fit, pooled, config.rule).tau
        for ls in per_level:
            if filtering.is_degenerate_level(ls.scores, config):
                rows.append(_fit_row(ls.level.value, pooled_fit, pooled_tau))
            else:
                fit = filtering.fit_gmm(ls.scores, config)
                tau = filtering.threshold_from_fit(fit, ls.scores, config.rule).tau
                rows.append(_fit_row(ls.level.value, fit, tau))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(_comment_header(args, "-"))
        fh.write("level,w_p,mu_p,var_p,w_n,mu_n,var_n,tau,converged\n")
        fh.write("".join(row + "\n" for row in rows))
    print(f"wrote {len(rows)} fit rows to {args.out}")
    return EXIT_OK


# --- eval-loss ---------------------------------------------------------------


def _parse_floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t]


def _parse_boxes(text: str) -> list[OrientedBox]:
    boxes = []
    for chunk in text.split(","):
        fields = [float(t) for t in chunk.split(":")]
        if len(fields) != 5:
            raise InvalidInputError(
                f"box {chunk!r} must be cx:cy:w:h:theta"
            )
        boxes.append(OrientedBox(*fields))
    return boxes


def _parse_margins(text: str) -> np.ndarray:
    rows = []
    for chunk in text.split(","):
        fields = [float(t) for t in chunk.split(":")]
        if len(fields) != 4:
            raise InvalidInputError(f"margins {chunk!r} must be four ':'-separated values")
        rows.append(fields)
    return np.array(rows)


def _entry_case(line: str) -> gradcheck.GradCase:
    tokens = line.split()
    op = tokens[0]
    kv = {}
    for tok in tokens[1:]:
        if "=" not in tok:
            raise InvalidInputError(f"expected key=value, got {tok!r}")
        key, _, value = tok.partition("=")
        kv[key] = value
    if op == "sparse-cls":
        params = FocalParams(
            alpha_t=float(kv.get("alpha_t", 0.25)),
            gamma=float(kv.get("gamma", 2.0)),
            omega=float(kv.get("omega", 0.2)),
            thr=float(kv.get("thr", 0.5)),
        )
        kind = SampleKind(kv["kind"])
        return gradcheck.sparse_cls_case(float(kv["p_t"]), kind, params)
    if op == "angle":
        aug = Flip() if kv["aug"] == "flip" else Rotate(float(kv["r"]))
        return gradcheck.angle_case(
            float(kv["theta_aug"]), float(kv["theta"]), aug, float(kv.get("beta", 1.0))
        )
    if op == "overlap":
        return gradcheck.overlap_case(_parse_boxes(kv["boxes"]))
    if op == "watershed":
        return gradcheck.watershed_case(
            float(kv["w"]),
            float(kv["h"]),
            float(kv["target_w"]),
            float(kv["target_h"]),
            tau=float(kv.get("tau", 1.0)),
            raw=bool(int(kv.get("raw", 0))),
        )
    if op == "supervised":
        parts = _parse_floats(kv["parts"])
        if "weights" in kv:
            weights = SupervisedWeights(*_parse_floats(kv["weights"]))
        else:
            weights = SupervisedWeights()
        return gradcheck.supervised_case(parts, weights)
    if op == "unsupervised":
        teacher = PredictionTriple(
            np.array(_parse_floats(kv["t_conf"])),
            np.array(_parse_floats(kv["t_cen"])),
            _parse_margins(kv["t_box"]),
        )
        student = PredictionTriple(
            np.array(_parse_floats(kv["s_conf"])),
            np.array(_parse_floats(kv["s_cen"])),
            _parse_margins(kv["s_box"]),
        )
        return gradcheck.unsupervised_case(teacher, student, float(kv.get("beta", 1.0)))
    if op == "total":
        return gradcheck.total_case(float(kv["sup"]), float(kv["unsup"]))
    raise InvalidInputError(f"unknown loss op {op!r}")


def cmd_eval_loss(args) -> int:
    if args.input is None:
        if not args.check_grad:
            print("eval-loss: provide an input file or --check-grad", file=sys.stderr)
            return EXIT_ERROR
        seed = _resolve_seed(args.seed, 0)
        errs = gradcheck.random_sweep(args.random, seed)
        worst = max(errs.values())
        for op in gradcheck.OPS:
            status = "ok" if errs[op] < gradcheck.DEFAULT_REL_TOL else "FAIL"
            print(f"{op}: points={args.random} max_rel_err={errs[op]:.3g} {status}")
        print(f"overall max_rel_err={worst:.3g}")
        return EXIT_OK if worst < gradcheck.DEFAULT_REL_TOL else EXIT_ERROR

    failed = False
    with open(args.input, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                case = _entry_case(line)
            except (InvalidInputError, NumericalDegeneracyError, KeyError, ValueError) as exc:
                print(f"line {line_no}: error: {exc}")
                failed = True
                continue
            grad = ",".join(_fmt(g) for g in np.asarray(case.analytic).ravel())
            out = f"line {line_no}: {case.op} value={_fmt(case.value)} grad={grad}"
            if args.check_grad:
                out += f" fd_max_rel_err={gradcheck.check_case(case):.3g}"
            print(out)
    return EXIT_ERROR if failed else EXIT_OK


# --- simulate ----------------------------------------------------------------


def _write_report(path, args, report: pipeline.SimulationReport, footer: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_comment_header(args, report.seed))
        fh.write("round,level,tau,precision,recall,f1,n_selected\n")
        for r in report.rows:
            fh.write(
                f"{r.round},{r.level.value},{_fmt(r.tau)},{_fmt(r.precision)},"
                f"{_fmt(r.recall)},{_fmt(r.f1)},{r.n_selected}\n"
            )
        if footer:
            fh.write(footer)


def cmd_simulate(args) -> int:
    scenario = pipeline.load_scenario(args.scenario)
    seed = _resolve_seed(args.seed, scenario.seed)
    out = Path(args.out)
    if args.mode in ("mpf", "cpf"):
        report = pipeline.run_simulation(
            scenario, pipeline.FilterMode(args.mode), seed=seed
        )
        _write_report(out, args, report)
        print(f"{args.mode}: mean_f1={report.mean_f1:.6f} rows={len(report.rows)}")
        return EXIT_OK
    # paired head-to-head: one report file per mode plus a summary footer
    summary = pipeline.paired_comparison(scenario, args.repeats, base_seed=seed)
    footer = f"# paired summary: {summary.describe()}\n"
    for mode in (pipeline.FilterMode.MPF, pipeline.FilterMode.CPF):
        report = pipeline.run_simulation(scenario, mode, seed=seed)
        mode_path = out.with_suffix(f".{mode.value}{out.suffix}")
        _write_report(mode_path, args, report, footer)
    print(f"paired summary: {summary.describe()}")
    return EXIT_OK


# --- report ------------------------------------------------------------------


def cmd_report(args) -> int:
    single = dataset.load_dota_dir(args.single)
    overall = dataset.load_dota_dir(args.overall)
    stats = dataset.compare_stats(single, overall)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(_comment_header(args, "-"))
        fh.write(stats.to_csv())
    for row in stats.rows:
        rel = (
            "undefined"
            if row.relative_difference_percent is None
            else f"{row.relative_difference_percent:+.1f}%"
        )
        print(f"{row.category}: single={row.count_single} overall={row.count_overall} rel={rel}")
    return EXIT_OK


# --- watershed ---------------------------------------------------------------


def _read_points(path) -> list[PointAnnotation]:
    points = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if len(tokens) < 2:
                raise InvalidInputError(
                    f"{path}: line {line_no}: expected 'x y [category]'"
                )
            category = tokens[2] if len(tokens) > 2 else ""
            points.append(PointAnnotation(float(tokens[0]), float(tokens[1]), category))
    if not points:
        raise InvalidInputError(f"no points in {path}")
    return points


def cmd_watershed(args) -> int:
    image = layout.read_pgm(args.image)
    seeds = _read_points(args.points)
    cells = layout.voronoi_partition(seeds, image.width, image.height)
    masks = layout.watershed_segment(image, cells)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, (seed, mask) in enumerate(zip(seeds, masks)):
        layout.write_pgm(out_dir / f"mask_{k:03d}.pgm", mask)
        target = layout.scale_target_from_mask(mask, args.theta)
        rows.append(
            f"{k},{_fmt(seed.x)},{_fmt(seed.y)},{seed.category},"
            f"{_fmt(target.w_t)},{_fmt(target.h_t)},{int(target.valid)}"
        )
    with open(out_dir / "targets.csv", "w", encoding="utf-8") as fh:
        fh.write(_comment_header(args, "-"))
        fh.write("seed_index,x,y,category,w_t,h_t,valid\n")
        fh.write("".join(r + "\n" for r in rows))
    print(f"wrote {len(masks)} masks and targets.csv to {out_dir}")
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spwood",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"spwood {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sparsify", help="subsample a DOTA annotation directory")
    p.add_argument("--input", required=True, help="directory of .txt annotation files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--method",
        choices=["single", "overall"],
        required=True,
        help="single: per image per category with an at-least-one floor; "
        "overall: exact per-category ratio across the whole set",
    )
    p.add_argument("--sparse", type=float, required=True, help="sparse ratio in (0, 1]")
    p.add_argument(
        "--partial",
        type=float,
        default=1.0,
        help="fraction of images kept as labeled before sparsifying (default 1.0)",
    )
    p.add_argument("--seed", type=int, default=None, help="sampling seed (default 0)")
    p.add_argument(
        "--weaken",
        choices=["none", "rbox", "hbox", "point"],
        default="none",
        help="emit weak labels instead of corner annotations (default none)",
    )
    p.add_argument("--stats", default=None, help="stats CSV path (default OUT/stats.csv)")
    p.set_defaults(func=cmd_sparsify)

    p = sub.add_parser("fit-gmm", help="fit per-level score mixtures and thresholds")
    p.add_argument("--input", required=True, help="CSV of level,score rows")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument(
        "--mode",
        choices=["mpf", "cpf"],
        default="mpf",
        help="mpf: one fit per level; cpf: pool all levels (default mpf)",
    )
    p.set_defaults(func=cmd_fit_gmm)

    p = sub.add_parser("eval-loss", help="evaluate loss entries from a text file")
    p.add_argument("input", nargs="?", default=None, help="loss entry file")
    p.add_argument(
        "--check-grad",
        action="store_true",
        help="verify analytic gradients against central finite differences; "
        "without an input file, run a seeded random sweep",
    )
    p.add_argument(
        "--random",
        type=int,
        default=100,
        metavar="N",
        help="random interior points per op for the sweep (default 100)",
    )
    p.add_argument("--seed", type=int, default=None, help="sweep seed (default 0)")
    p.set_defaults(func=cmd_eval_loss)

    p = sub.add_parser("simulate", help="run the planted-score filtering simulation")
    p.add_argument("--scenario", required=True, help="scenario file path")
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument(
        "--mode",
        choices=["mpf", "cpf", "paired"],
        default="mpf",
        help="filter to simulate; paired runs both on identical seeds and "
        "writes OUT with .mpf/.cpf inserted before the extension",
    )
    p.add_argument(
        "--repeats",
        type=int,
        default=1,
        help="paired mode: number of seeded repeats for the summary (default 1)",
    )
    p.add_argument(
        "--seed", type=int, default=None, help="seed (default: scenario file's seed)"
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="compare two sparsified annotation directories")
    p.add_argument("--single", required=True, help="single-method annotation directory")
    p.add_argument("--overall", required=True, help="overall-method annotation directory")
    p.add_argument("--out", required=True, help="stats CSV path")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser(
        "watershed", help="segment a PGM image around point annotations"
    )
    p.add_argument("--image", required=True, help="input image (binary 8-bit PGM)")
    p.add_argument("--points", required=True, help="text file of 'x y [category]' seeds")
    p.add_argument("--out-dir", required=True, help="directory for masks and targets.csv")
    p.add_argument(
        "--theta",
        type=float,
        default=0.0,
        help="rotation (radians) of the target extent frame (default 0)",
    )
    p.set_defaults(func=cmd_watershed)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    try:
        return args.func(args)
    except DegenerateInputError as exc:
        print(f"error: degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (InvalidInputError, DotaParseError, NumericalDegeneracyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
