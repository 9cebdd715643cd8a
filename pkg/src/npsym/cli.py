"""Command line surface: data generation, training, oracle scoring,
finite-group theory checks, and report emission.

Every invocation takes ``--config PATH`` (an INI experiment file, see the
config module) plus optional field overrides. Outputs are deterministic for
a fixed (config, seeds, BLAS thread count): result bundles are JSON with
sorted keys and no timestamps, CSVs format floats via repr, and rerunning a
command reproduces its files byte for byte. Wall-clock is confined to the
``run.log`` sidecar and the seconds column of ``history.csv``; neither is
part of that guarantee.

Exit codes: 0 success, 2 configuration or input errors, 3 IO errors
(including a held directory lock), 4 numeric failures, 5 theory-check
failures.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ExperimentConfig, apply_seed_override, default_config,
                     read_config)
from .errors import (ConfigError, DataFormatError, InputError, NpsymError,
                     NumericError)
from .fibres import check_equivariant_fibres, parse_case
from .groups import GroupTag
from .metrics import aggregate, auc, rejection_at, roc_curve
from .model import ModelConfig, save_checkpoint
from .oracle import log_likelihood_ratio, oracle_scores
from .shapes import (SPLITS, dataset_filename, generate_split, load_split,
                     scenario_specs)
from .theory_cases import run_bundled_checks
from .train import TrainSettings, predict_logits, train_run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_THEORY = 5

LOCK_NAME = ".npsym.lock"
BUNDLE_NAME = "bundle.json"


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _config_stamp(cfg: ExperimentConfig) -> str:
    digest = hashlib.sha256(cfg.to_ini_text().encode()).hexdigest()
    return digest[:12]


def _blas_threads() -> int:
    try:
        from threadpoolctl import threadpool_info
        counts = [entry["num_threads"] for entry in threadpool_info()
                  if entry.get("user_api") == "blas"]
        return max(counts) if counts else 1
    except Exception:
        return 1


@contextlib.contextmanager
def _dir_lock(directory: Path):
    """Exclusive per-directory lock; a second taker fails with an IO error."""
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / LOCK_NAME
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OSError(
            f"{directory} is locked by another invocation ({path} exists; "
            "delete it if that invocation is dead)") from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(OSError):
            path.unlink()


def _write_text(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _roc_csv(cfg: ExperimentConfig, fpr, tpr) -> str:
    lines = [f"# npsym-roc v1 tool={__version__} config={_config_stamp(cfg)}",
             "fpr,tpr"]
    lines.extend(f"{float(a)!r},{float(b)!r}" for a, b in zip(fpr, tpr))
    return "\n".join(lines) + "\n"


def _scores_csv(cfg: ExperimentConfig, labels, scores) -> str:
    lines = [f"# npsym-scores v1 tool={__version__} "
             f"config={_config_stamp(cfg)}", "label,score"]
    lines.extend(f"{int(lab)},{float(sc)!r}"
                 for lab, sc in zip(labels, scores))
    return "\n".join(lines) + "\n"


def _history_csv(cfg: ExperimentConfig, history) -> str:
    cols = ("epoch", "train_loss", "val_loss", "val_rejection", "lr",
            "seconds")
    lines = [f"# npsym-history v1 tool={__version__} "
             f"config={_config_stamp(cfg)}", ",".join(cols)]
    for row in history:
        lines.append(",".join(
            str(row["epoch"]) if c == "epoch" else repr(float(row[c]))
            for c in cols))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

def ensure_datasets(cfg: ExperimentConfig, regenerate: bool = False):
    """Write any missing split files; returns all six paths."""
    data_dir = Path(cfg.data_dir)
    sizes = {"train": cfg.train_per_class, "val": cfg.val_per_class,
             "test": cfg.test_per_class}
    seeds = {"train": cfg.train_seed, "val": cfg.val_seed,
             "test": cfg.test_seed}
    paths = [data_dir / dataset_filename(cfg.scenario, split, label)
             for split in SPLITS for label in (0, 1)]
    missing = [p for p in paths if not p.exists()]
    if regenerate or missing:
        with _dir_lock(data_dir):
            for split in SPLITS:
                want = [data_dir / dataset_filename(cfg.scenario, split, lab)
                        for lab in (0, 1)]
                if regenerate or any(not p.exists() for p in want):
                    generate_split(data_dir, cfg.scenario, split,
                                   sizes[split], seeds[split],
                                   noise_sigma=cfg.noise_sigma)
    return paths


def cmd_gen_data(cfg: ExperimentConfig) -> int:
    paths = ensure_datasets(cfg, regenerate=True)
    for p in paths:
        print(p)
    return EXIT_OK


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _oracle_block(cfg: ExperimentConfig, out_dir: Path, test_x, test_y):
    scores = oracle_scores(cfg.scenario, test_x,
                           noise_sigma=cfg.noise_sigma)
    fpr, tpr = roc_curve(test_y, scores)
    _write_text(out_dir / "oracle_roc.csv", _roc_csv(cfg, fpr, tpr))
    _write_text(out_dir / "oracle_scores.csv",
                _scores_csv(cfg, test_y, scores))
    return {
        "rejection_at_0.95": rejection_at(test_y, scores),
        "auc": auc(test_y, scores),
        "roc_csv": "oracle_roc.csv",
        "scores_csv": "oracle_scores.csv",
    }


def _aggregate_block(runs):
    rej_mean, rej_std = aggregate([r["test_rejection"] for r in runs])
    out = {"test_rejection_mean": rej_mean, "test_rejection_std": rej_std}
    losses = [r["min_val_loss"] for r in runs
              if r["min_val_loss"] is not None]
    if losses:
        loss_mean, loss_std = aggregate(losses)
        out["min_val_loss_mean"] = loss_mean
        out["min_val_loss_std"] = loss_std
    else:
        out["min_val_loss_mean"] = None
        out["min_val_loss_std"] = None
    return out


def cmd_train(cfg: ExperimentConfig, force: bool = False,
              progress=None) -> int:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle_path = out_dir / BUNDLE_NAME
    if bundle_path.exists():
        old = json.loads(bundle_path.read_text())
        if old.get("config") != cfg.to_dict() and not force:
            raise ConfigError(
                f"{bundle_path} holds results for a different config; "
                "pass --force to overwrite")

    with _dir_lock(out_dir):
        log = (out_dir / "run.log").open("a", encoding="utf-8")

        def note(text):
            log.write(f"{_now()} {text}\n")
            log.flush()
            if progress is not None:
                progress(text)

        note(f"start config={_config_stamp(cfg)} tool={__version__}")
        ensure_datasets(cfg)
        train_x, train_y = load_split(cfg.data_dir, cfg.scenario, "train")
        val_x, val_y = load_split(cfg.data_dir, cfg.scenario, "val")
        test_x, test_y = load_split(cfg.data_dir, cfg.scenario, "test")

        model_config = ModelConfig(cfg.variant, cfg.group)
        settings = TrainSettings(epochs=cfg.epochs,
                                 batch_size=cfg.batch_size,
                                 learning_rate=cfg.learning_rate,
                                 plateau_patience=cfg.plateau_patience,
                                 plateau_factor=cfg.plateau_factor)
        bundle = {
            "config": cfg.to_dict(),
            "tool_version": __version__,
            "threads": _blas_threads(),
            "oracle": _oracle_block(cfg, out_dir, test_x, test_y),
            "runs": [],
            "aggregate": None,
        }
        note("oracle reference rejection "
             f"{bundle['oracle']['rejection_at_0.95']:.4f}")

        for seed in cfg.run_seeds:
            run_dir = out_dir / f"run{seed}"
            run_dir.mkdir(exist_ok=True)
            params, history = train_run(
                model_config, settings, seed, train_x, train_y, val_x, val_y,
                progress=(lambda row, s=seed: note(
                    f"seed {s} epoch {row['epoch']} "
                    f"val_loss {row['val_loss']:.4f} "
                    f"val_rej {row['val_rejection']:.4f}")))
            scores = predict_logits(params, model_config, test_x)
            best_epoch, min_val_loss = None, None
            if history:
                best = min(history, key=lambda row: row["val_loss"])
                best_epoch = best["epoch"]
                min_val_loss = best["val_loss"]
            ckpt = run_dir / "checkpoint.npckpt"
            save_checkpoint(ckpt, model_config, params,
                            extra={"run_seed": seed,
                                   "best_epoch": best_epoch})
            _write_text(run_dir / "history.csv", _history_csv(cfg, history))
            _write_text(run_dir / "test_scores.csv",
                        _scores_csv(cfg, test_y, scores))
            run_row = {
                "run_seed": seed,
                "best_epoch": best_epoch,
                "min_val_loss": min_val_loss,
                "test_rejection": rejection_at(test_y, scores),
                "test_auc": auc(test_y, scores),
                "checkpoint": str(ckpt.relative_to(out_dir)),
                "history_csv": str((run_dir / "history.csv")
                                   .relative_to(out_dir)),
                "test_scores_csv": str((run_dir / "test_scores.csv")
                                       .relative_to(out_dir)),
            }
            bundle["runs"].append(run_row)
            bundle["aggregate"] = _aggregate_block(bundle["runs"])
            # flush after every completed run so partial progress survives
            _write_text(bundle_path, _json_text(bundle))
            note(f"seed {seed} done test_rejection "
                 f"{run_row['test_rejection']:.4f}")
        note("finished")
        log.close()
    agg = bundle["aggregate"]
    print(f"{cfg.scenario} {cfg.group.value} {cfg.variant}: "
          f"rejection {agg['test_rejection_mean']:.4f} "
          f"+/- {agg['test_rejection_std']:.4f} over "
          f"{len(bundle['runs'])} runs -> {bundle_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

def cmd_oracle(cfg: ExperimentConfig, self_test: bool = False) -> int:
    out_dir = Path(cfg.output_dir)
    with _dir_lock(out_dir):
        ensure_datasets(cfg)
        test_x, test_y = load_split(cfg.data_dir, cfg.scenario, "test")
        if self_test:
            # score both classes with the same density: the ratio carries no
            # information and the ROC must collapse to the diagonal
            spec0, _ = scenario_specs(cfg.scenario, cfg.noise_sigma)
            scores = log_likelihood_ratio(spec0, spec0, test_x)
        else:
            scores = oracle_scores(cfg.scenario, test_x,
                                   noise_sigma=cfg.noise_sigma)
        fpr, tpr = roc_curve(test_y, scores)
        _write_text(out_dir / "oracle_roc.csv", _roc_csv(cfg, fpr, tpr))
        summary = {
            "config": cfg.to_dict(),
            "tool_version": __version__,
            "self_test": bool(self_test),
            "n_clouds": int(len(test_x)),
            "rejection_at_0.95": rejection_at(test_y, scores),
            "auc": auc(test_y, scores),
            "roc_csv": "oracle_roc.csv",
        }
        _write_text(out_dir / "oracle_summary.json", _json_text(summary))
    print(f"oracle rejection_at(0.95) = {summary['rejection_at_0.95']:.6f} "
          f"(auc {summary['auc']:.6f}, {summary['n_clouds']} clouds) "
          f"-> {out_dir / 'oracle_summary.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# theory checks
# ---------------------------------------------------------------------------

def _case_file_checks(path: Path):
    from .theory_cases import CheckResult
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read case file {path}: {exc}") from None
    try:
        case = parse_case(text, strict=False)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None
    report = check_equivariant_fibres(case)
    if report.violation is not None:
        g, x = report.violation
        detail = (f"map is not equivariant: witness g={g}, x={x}, "
                  f"f(g.x)={case.f(case.domain_action.act(g, x))!r} != "
                  f"g.f(x)={case.codomain_action.act(g, case.f(x))!r}")
        return [CheckResult(f"{path.name}: equivariance", False, detail)]
    out = [CheckResult(f"{path.name}: equivariance", True,
                       f"{len(case.domain_action.elements)} elements x "
                       f"{len(case.domain_action.carrier)} points verified")]
    bad = [b for b in report.blocks if not b.is_union_of_minimal_fibres]
    out.append(CheckResult(
        f"{path.name}: fibre structure", not bad,
        "every fibre is a union of minimal fibres" if not bad else
        f"fibre of {bad[0].value!r} splits a minimal fibre"))
    return out


def cmd_theory_check(cfg: ExperimentConfig, case_paths) -> int:
    results = list(run_bundled_checks())
    for path in case_paths:
        results.extend(_case_file_checks(Path(path)))
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        mark = "PASS" if r.ok else "FAIL"
        failures += not r.ok
        print(f"{mark}  {r.name:<{width}}  {r.detail}")
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return EXIT_OK if failures == 0 else EXIT_THEORY


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

_GROUP_ORDER = {tag.value: i for i, tag in enumerate(GroupTag)}


def cmd_report(cfg: ExperimentConfig, bundle_paths) -> int:
    if not bundle_paths:
        raise InputError("report needs at least one bundle path")
    cells = {}
    scenario = None
    for path in bundle_paths:
        try:
            bundle = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataFormatError(f"cannot read bundle {path}: {exc}") \
                from None
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path} is not valid JSON: {exc}") \
                from None
        try:
            conf = bundle["config"]
            key = (conf["group"], conf["variant"], conf["train_per_class"])
            runs = bundle["runs"]
            this_scenario = conf["scenario"]
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"{path} is not a result bundle "
                                  f"(missing {exc})") from None
        if scenario is None:
            scenario = this_scenario
        elif this_scenario != scenario:
            raise InputError(
                f"mixed scenarios in one report: {scenario} vs "
                f"{this_scenario} ({path})")
        cells.setdefault(key, []).extend(runs)

    ordered = sorted(cells.items(),
                     key=lambda kv: (kv[0][2], _GROUP_ORDER.get(kv[0][0], 99),
                                     kv[0][1]))
    table_rows, fig_rows = [], []
    for (group, variant, size), runs in ordered:
        rej_mean, rej_std = aggregate([r["test_rejection"] for r in runs])
        losses = [r["min_val_loss"] for r in runs
                  if r.get("min_val_loss") is not None]
        if losses:
            loss_mean, loss_std = aggregate(losses)
            loss_cells = (repr(loss_mean), repr(loss_std))
        else:
            loss_cells = ("", "")
        table_rows.append((group, variant, size, len(runs),
                           rej_mean, rej_std))
        fig_rows.append((scenario, group, variant, size) + loss_cells)

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table_csv = ["scenario,group,variant,train_per_class,runs,"
                 "rejection_mean,rejection_std"]
    table_csv.extend(
        f"{scenario},{g},{v},{n},{runs},{mean!r},{std!r}"
        for g, v, n, runs, mean, std in table_rows)
    _write_text(out_dir / "report_table.csv", "\n".join(table_csv) + "\n")

    fig_csv = ["scenario,group,variant,train_per_class,"
               "min_val_loss_mean,min_val_loss_std"]
    fig_csv.extend(",".join(map(str, row)) for row in fig_rows)
    _write_text(out_dir / "report_valloss.csv", "\n".join(fig_csv) + "\n")

    lines = [f"scenario: {scenario}",
             f"{'group':<5} {'variant':<12} {'train/class':>11} "
             f"{'runs':>4}  rejection(0.95)"]
    for g, v, n, runs, mean, std in table_rows:
        lines.append(f"{g:<5} {v:<12} {n:>11} {runs:>4}  "
                     f"{mean:.3f} +/- {std:.3f}")
    text = "\n".join(lines) + "\n"
    _write_text(out_dir / "report_table.txt", text)
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="npsym",
        description="Symmetry experiments on noisy point clouds")
    parser.add_argument("--version", action="version",
                        version=f"npsym {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True,
                       help="experiment INI file")
        p.add_argument("--profile", choices=("desk", "paper"))
        p.add_argument("--group")
        p.add_argument("--variant", choices=("invariant", "equivariant"))
        p.add_argument("--scenario")
        p.add_argument("--runs", type=int,
                       help="use the first N configured run seeds")
        p.add_argument("--out", help="override output directory")
        p.add_argument("--threads", type=int,
                       help="cap BLAS threads (part of the "
                            "reproducibility key)")
        p.add_argument("--force", action="store_true",
                       help="overwrite results produced by a different "
                            "config")

    common(sub.add_parser("gen-data", help="write the dataset files"))
    common(sub.add_parser("train", help="train the configured run matrix"))
    oracle = sub.add_parser("oracle",
                            help="score the test set with the exact "
                                 "likelihood ratio")
    common(oracle)
    oracle.add_argument("--self-test", action="store_true",
                        help="score both classes with the same density; "
                             "the ROC must collapse to the diagonal")
    theory = sub.add_parser("theory-check",
                            help="run the finite-group verification suite")
    common(theory)
    theory.add_argument("cases", nargs="*",
                        help="extra case files (action_X/action_H/map)")
    report = sub.add_parser("report",
                            help="summarize result bundles into tables")
    common(report)
    report.add_argument("bundles", nargs="*", help="bundle.json paths")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    overrides = {}
    for field, attr in (("profile", "profile"), ("group", "group"),
                        ("variant", "variant"), ("scenario", "scenario"),
                        ("output_dir", "out")):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[field] = value
    cfg = read_config(args.config, overrides)
    if args.runs is not None:
        if args.runs < 1:
            raise ConfigError("--runs must be positive")
        if args.runs > len(cfg.run_seeds):
            raise ConfigError(
                f"--runs {args.runs} exceeds the {len(cfg.run_seeds)} "
                "run seeds listed in the config")
        cfg = cfg.replace(run_seeds=cfg.run_seeds[:args.runs])
    env_seed = os.environ.get("NPSYM_SEED_OVERRIDE")
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(
                f"NPSYM_SEED_OVERRIDE must be an integer, got "
                f"{env_seed!r}") from None
        cfg = apply_seed_override(cfg, seed)
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        with contextlib.ExitStack() as stack:
            if args.threads is not None:
                from threadpoolctl import threadpool_limits
                stack.enter_context(threadpool_limits(limits=args.threads))
            cfg = _config_from_args(args)
            if args.command == "gen-data":
                return cmd_gen_data(cfg)
            if args.command == "train":
                return cmd_train(cfg, force=args.force)
            if args.command == "oracle":
                return cmd_oracle(cfg, self_test=args.self_test)
            if args.command == "theory-check":
                return cmd_theory_check(cfg, args.cases)
            if args.command == "report":
                return cmd_report(cfg, args.bundles)
            raise InputError(f"unknown command {args.command!r}")
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NpsymError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
