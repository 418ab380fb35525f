"""Command-line entry point: ``run``, ``infer`` and ``eval``.

Run directories contain::

    manifest.json    config snapshot, versions, timestamps, status, sha256 per file
    archive.csv      every expensive evaluation in order (x, t, y, iteration, counter)
    trace.csv        per-iteration (static) or per-generation (dynamic) log
    checkpoint.json  Pareto-set model and surrogate state
    fronts/*.csv     inferred fronts at held-out tasks, or per-generation fronts

Log verbosity is read from ``PPSLMOBO_LOG`` (e.g. ``DEBUG``, ``INFO``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
import tempfile
import time
import traceback
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy
import sklearn

from . import __version__
from .config import RunConfig, run
from .metrics import NormalizationSpec, igd, mhv, migd, normalized_hv
from .problems import UnsupportedError, make_problem
from .psmodel import ParetoSetModel
from .runner import ConfigError, infer_front

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def fmt(v) -> str:
    """17 significant digits, so parsing gives back the same double."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def atomic_write(path: Path, data: str | bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def read_csv(path):
    """Header and float matrix of a numeric CSV written by this module."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(rows[0]))
    return rows[0], data


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ------------------------------------------------------------------ config


def _line_of(text: str, key) -> int:
    if key is None:
        return 1
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return 1


def load_config(path) -> RunConfig:
    """Parse and validate; raises ``ConfigError`` whose message starts with ``path:line:``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}:1: cannot read config: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from exc
    try:
        return RunConfig.from_dict(data)
    except (ConfigError, TypeError, ValueError) as exc:
        key = getattr(exc, "key", None)
        raise ConfigError(f"{path}:{_line_of(text, key)}: {exc}", key=key) from exc


def default_run_dir(cfg: RunConfig, root="runs") -> Path:
    return Path(root) / f"{cfg.problem}-{cfg.digest()[:12]}-seed{cfg.seed}"


# ----------------------------------------------------------------- outputs


def archive_rows(est, problem):
    dynamic = hasattr(est, "evaluations_")
    arc = est.evaluations_ if dynamic else est.archive_
    key = "generation" if dynamic else "iteration"
    for counter, (x, t, y, info) in enumerate(zip(arc.X, arc.T, arc.Y, arc.info)):
        yield [*x, *t, *y, info[key], counter]


def archive_header(problem):
    return ([f"x{i + 1}" for i in range(problem.n)] + [f"t{i + 1}" for i in range(problem.p)]
            + [f"y{i + 1}" for i in range(problem.m)] + ["iteration", "counter"])


def trace_table(est):
    if hasattr(est, "evaluations_"):
        header = ["generation", "t", "igd", "hv", "archive_size", "train_size", "n_evals", "loss_last", "seconds"]
        rows = [[r.generation, r.t, r.igd, r.hv, r.archive_size, r.train_size, r.n_evals, r.loss_last, r.seconds]
                for r in est.history_]
    else:
        header = ["iteration", "n_evals", "loss_first", "loss_last", "loss_mean", "acq_gain", "archive_size",
                  "seconds"]
        rows = [[r.iteration, r.n_evals, r.loss_first, r.loss_last, r.loss_mean, r.acq_gain, r.archive_size,
                 r.seconds] for r in est.history_]
    return header, rows


def front_files(est, problem):
    """``{relative name: csv text}`` for the fronts directory."""
    out = {}
    ys = [f"y{i + 1}" for i in range(problem.m)]
    if hasattr(est, "evaluations_"):
        for r in est.history_:
            rows = [[r.t, *y] for y in r.front]
            out[f"fronts/gen{r.generation:04d}.csv"] = csv_text(["t"] + ys, rows)
        return out
    last = max((r.iteration for r in est.metric_log_), default=None)
    for r in est.metric_log_:
        if r.iteration != last:
            continue
        header = ([f"t{i + 1}" for i in range(problem.p)] + [f"lam{i + 1}" for i in range(problem.m)]
                  + [f"x{i + 1}" for i in range(problem.n)] + ys)
        rows = [[*np.ravel(r.t), *row] for row in r.front]
        out[f"fronts/heldout{r.t_index:02d}.csv"] = csv_text(header, rows)
    return out


def checkpoint(est, cfg: RunConfig, problem) -> dict:
    return {"format": 1, "problem": cfg.problem, "problem_kwargs": cfg.problem_kwargs,
            "plugins": cfg.plugins, "mode": cfg.mode,
            "model": est.model_.to_dict(), "surrogate": est.surrogate_.to_dict()}


def summary(est) -> dict:
    if hasattr(est, "evaluations_"):
        return {"migd": est.migd_, "mhv": est.mhv_, "generations": len(est.history_)}
    last = max((r.iteration for r in est.metric_log_), default=None)
    rows = [r for r in est.metric_log_ if r.iteration == last]
    return {"norm_hv": [r.norm_hv for r in rows], "optimum_hv": [r.optimum_hv for r in rows],
            "iterations": len(est.history_)}


def versions() -> dict:
    return {"ppslmobo": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__}


def write_run(out: Path, cfg, est, problem, manifest: dict):
    files = {"archive.csv": csv_text(archive_header(problem), archive_rows(est, problem))}
    header, rows = trace_table(est)
    files["trace.csv"] = csv_text(header, rows)
    if hasattr(est, "model_") and hasattr(est, "surrogate_") and getattr(est.surrogate_, "models_", None):
        files["checkpoint.json"] = json.dumps(checkpoint(est, cfg, problem), sort_keys=True)
    files.update(front_files(est, problem))
    for name, text in files.items():
        atomic_write(out / name, text)
    manifest["files"] = {name: sha256(out / name) for name in sorted(files)}


# ---------------------------------------------------------------- commands


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out) if args.out else default_run_dir(cfg)
    if out.exists() and any(out.iterdir()) and not args.force:
        print(f"error: output directory {out} exists; pass --force to overwrite", file=sys.stderr)
        return EXIT_USAGE
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg.to_dict(), "config_sha256": cfg.digest(), "seed": cfg.seed,
                "versions": versions(), "started": datetime.now(timezone.utc).isoformat(),
                "status": "running"}
    problem = cfg.make_problem()
    est = cfg.build_estimator()
    code = EXIT_OK
    tic = time.perf_counter()
    try:
        run(cfg, est=est, problem=problem)
        manifest["status"] = "complete"
        manifest["summary"] = summary(est)
    except Exception as exc:  # keep whatever finished
        log.error("run failed: %s", exc)
        manifest["status"] = "failed"
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc),
                             "traceback": traceback.format_exc()}
        code = EXIT_FAIL
    manifest["seconds"] = time.perf_counter() - tic
    manifest["finished"] = datetime.now(timezone.utc).isoformat()
    try:
        write_run(out, cfg, est, problem, manifest)
    except Exception as exc:
        if code == EXIT_OK:
            raise
        log.error("could not write partial outputs: %s", exc)
        manifest.setdefault("files", {})
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=_json_default))
    print(out)
    return code


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def parse_t_values(text: str, p: int) -> list:
    """``"0.1,0.5"`` gives scalar tasks; use ``;`` between vector tasks (``"0.1 0.2;0.3 0.4"``)."""
    if ";" in text or p > 1:
        tasks = [np.array([float(v) for v in part.replace(",", " ").split()]) for part in text.split(";")]
    else:
        tasks = [np.array([float(v)]) for v in text.split(",") if v.strip()]
    for t in tasks:
        if t.shape != (p,):
            raise ValueError(f"task {t.tolist()} has {t.size} components, expected {p}")
    return tasks


def cmd_infer(args) -> int:
    try:
        ck = json.loads(Path(args.checkpoint).read_text(encoding="utf-8"))
        model = ParetoSetModel.from_dict(ck["model"])
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {args.checkpoint}: invalid checkpoint: {exc}", file=sys.stderr)
        return EXIT_USAGE
    cfg = model.config
    try:
        tasks = parse_t_values(args.t, cfg.n_param)
    except ValueError as exc:
        print(f"error: --t: {exc}", file=sys.stderr)
        return EXIT_USAGE
    problem = None
    try:
        RunConfig(plugins=ck.get("plugins", [])).load_plugins()
        problem = make_problem(ck["problem"], **ck.get("problem_kwargs", {}))
    except Exception as exc:
        log.warning("problem %r unavailable, writing fronts without objectives: %s", ck.get("problem"), exc)
    out = Path(args.out) if args.out else Path(args.checkpoint).resolve().parent / "infer"
    lb, ub = cfg.t_bounds if cfg.t_bounds is not None else (None, None)
    for j, t in enumerate(tasks):
        extrap = lb is not None and bool(np.any(t < lb) or np.any(t > ub))
        if extrap:
            log.warning("t=%s lies outside the trained box [%s, %s]; extrapolating", t.tolist(), lb, ub)
        tic = time.perf_counter()
        lam, X = infer_front(model, t, args.k, check_box=False)
        log.info("inferred %d solutions at t=%s in %.2f ms", len(X), t.tolist(), 1e3 * (time.perf_counter() - tic))
        header = [f"lam{i + 1}" for i in range(cfg.n_obj)] + [f"x{i + 1}" for i in range(cfg.n_var)]
        cols = [lam, X]
        if problem is not None:
            header += [f"y{i + 1}" for i in range(cfg.n_obj)]
            if extrap:  # the problem is only defined on its box
                cols.append(np.full((len(X), cfg.n_obj), np.nan))
            else:
                cols.append(problem.evaluate_batch(X, np.tile(t, (len(X), 1)), audit=True))
        header.append("extrapolated")
        rows = [[*row, int(extrap)] for row in np.hstack(cols)]
        atomic_write(out / f"front_{j:02d}_t={'_'.join(repr(float(v)) for v in t)}.csv", csv_text(header, rows))
    print(out)
    return EXIT_OK


def recompute_metrics(run_dir: Path) -> tuple[list, list]:
    """Header and rows of metrics.csv from the logged fronts."""
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    cfg = RunConfig.from_dict(manifest["config"])
    problem = cfg.make_problem()
    fronts = sorted((run_dir / "fronts").glob("*.csv")) if (run_dir / "fronts").is_dir() else []
    if not fronts:
        raise FileNotFoundError(f"{run_dir / 'fronts'}: no front files")
    rows = []
    if cfg.mode == "dynamic":
        igds, fs, refs = [], [], []
        for path in fronts:
            _, data = read_csv(path)
            t, Y = data[0, 0], data[:, 1:]
            true = problem.pareto_front([t], cfg.dynamic.reference_size)
            ref = true.max(axis=0)
            igds.append(igd(true, Y))
            fs.append(Y)
            refs.append(ref)
            rows.append([path.stem, t, igds[-1], float("nan"), float("nan")])
        rows.append(["all", float("nan"), float("nan"), migd(igds), mhv(fs, refs)])
        return ["front", "t", "igd", "migd", "mhv"], rows
    for path in fronts:
        _, data = read_csv(path)
        t = data[0, : problem.p]
        Y = data[:, -problem.m:]
        try:
            ref_front = problem.pareto_front(t, 10_000)
        except UnsupportedError:
            rows.append([path.stem, *t, float("nan"), float("nan")])
            continue
        spec = NormalizationSpec.from_front(ref_front)
        rows.append([path.stem, *t, normalized_hv(Y, spec), normalized_hv(ref_front, spec)])
    return ["front"] + [f"t{i + 1}" for i in range(problem.p)] + ["norm_hv", "optimum_hv"], rows


def cmd_eval(args) -> int:
    run_dir = Path(args.run_dir)
    missing = [name for name in ("manifest.json", "archive.csv", "trace.csv", "fronts")
               if not (run_dir / name).exists()]
    if missing:
        print(f"error: {run_dir}: missing {', '.join(missing)}", file=sys.stderr)
        return EXIT_FAIL
    try:
        header, rows = recompute_metrics(run_dir)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    atomic_write(run_dir / "metrics.csv", csv_text(header, rows))
    print(run_dir / "metrics.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ppslmobo", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an optimization from a JSON config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: runs/<problem>-<config hash>-seed<seed>)")
    r.add_argument("--force", action="store_true", help="overwrite an existing output directory")
    r.set_defaults(func=cmd_run)
    i = sub.add_parser("infer", help="infer fronts at new task parameters from a checkpoint")
    i.add_argument("checkpoint")
    i.add_argument("--t", required=True, help="comma-separated tasks; ';' separates vector tasks")
    i.add_argument("--k", type=int, default=100, help="solutions per front")
    i.add_argument("--out", help="output directory (default: <checkpoint dir>/infer)")
    i.set_defaults(func=cmd_infer)
    e = sub.add_parser("eval", help="recompute metrics.csv from a run directory")
    e.add_argument("run_dir")
    e.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("PPSLMOBO_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
