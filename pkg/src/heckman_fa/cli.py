"""Command-line driver: ``synth``, ``run``, ``benchmark`` and ``ttest``.

Configuration is a sectioned key-value file (``[train]``, ``[data]``,
``[synth]``, ``[benchmark]``); ``--seed`` and ``--set section.key=value``
override file values. Errors exit with the code attached to their
exception class (see ``heckman_fa.errors.EXIT_CODES``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, kernels
from .config import TRAINING_METHODS, RunConfig, from_ini, parse_sections
from .data import (
    BiasRule,
    SplitSpec,
    SyntheticSpec,
    inject_bias,
    load_csv,
    population,
    save_csv,
    sealed_path,
    split,
    standardize,
    synthesize,
    write_sealed,
)
from .dataset import FeatureMask
from .errors import (
    ConfigError,
    HeckmanFAError,
    NoCandidateInRange,
    OutputError,
    ZeroVarianceDifferences,
)
from .evaluation import Holdout, _aligned, _csv, benchmark, paired_t_test, run_method

USAGE_EXIT = 2
REQUIRED_TRAIN = ("c", "T", "alpha", "tau", "B", "rho_min", "rho_max")


def _floats(raw: str) -> list[float]:
    return [float(v) for v in raw.replace(",", " ").split()]


def _ints(raw: str) -> list[int]:
    return [int(v) for v in raw.replace(",", " ").split()]


def load_config_text(args) -> str:
    text = ""
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
    cp = parse_sections(text)
    for item in args.set or []:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][name] = value
    if args.seed is not None:
        if not cp.has_section("train"):
            cp.add_section("train")
        cp["train"]["seed"] = str(args.seed)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def manifest(command: str, config_text: str, seed: int) -> dict:
    return {
        "command": command,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "seed": seed,
        "heckman_fa": __version__,
        "kernel_backend": kernels.BACKEND,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "platform": platform.platform(),
        "config": config_text,
    }


# -- synth -------------------------------------------------------------------


def synth_spec(cp) -> tuple[SyntheticSpec, dict]:
    if not cp.has_section("synth"):
        raise ConfigError("missing [synth] section")
    sec = cp["synth"]
    try:
        n = int(sec["n"])
        K = int(sec["K"])
        idx = [i - 1 for i in _ints(sec["true_features"])]
        spec = SyntheticSpec(
            n=n,
            K=K,
            true_mask=FeatureMask.from_indices(idx, K),
            beta=_floats(sec["beta"]),
            gamma=_floats(sec["gamma"]),
            rho=float(sec["rho"]),
            sigma=float(sec.get("sigma", "1.0")),
        )
    except KeyError as exc:
        raise ConfigError(f"missing required config field [synth] {exc.args[0]}") from None
    except ValueError as exc:
        raise ConfigError(f"[synth]: {exc}") from None
    extra = {
        "name": sec.get("name", "synthetic"),
        "n_test": int(sec.get("n_test", "0")),
    }
    return spec, extra


def cmd_synth(args, text: str) -> int:
    cp = parse_sections(text)
    spec, extra = synth_spec(cp)
    seed = int(cp["train"]["seed"]) if cp.has_section("train") and "seed" in cp["train"] else 0
    out = _out_dir(args)
    data, truth = synthesize(spec, seed)
    csv_path = out / f"{extra['name']}.csv"
    try:
        save_csv(data, csv_path)
        write_sealed(truth, sealed_path(csv_path))
        if extra["n_test"] > 0:
            save_csv(population(spec, seed, extra["n_test"]), out / f"{extra['name']}_test.csv")
    except OSError as exc:
        raise OutputError(f"cannot write {exc.filename}: {exc.strerror}") from None
    _write(out / "manifest.json", _json(manifest("synth", text, seed)))
    print(f"n={data.n} m={data.m} selected_fraction={data.m / data.n:.4f}")
    print(f"wrote {csv_path} and {sealed_path(csv_path)} (evaluation only)")
    return 0


# -- run ---------------------------------------------------------------------


def _required_for(method: str) -> tuple[str, ...]:
    if method in TRAINING_METHODS:
        return REQUIRED_TRAIN
    if method == "HECKMAN_C":
        return ("rho_min", "rho_max")
    return ()


def run_config(text: str) -> RunConfig:
    cp = parse_sections(text)
    method = cp["train"].get("method", "FA") if cp.has_section("train") else "FA"
    return from_ini(text, required=_required_for(method))


def prepare_data(cfg: RunConfig):
    """Load, split, inject bias and standardize per ``cfg.io``.

    Returns the training set and a holdout (or ``None`` when no held-out
    outcomes exist).
    """
    io = cfg.io
    if io.data_path is None:
        raise ConfigError("missing required config field [data] data_path")
    data = load_csv(io.data_path, io.outcome, io.features, io.indicator)
    rule = None
    if io.bias_column is not None:
        if io.bias_comparator is None or io.bias_threshold is None:
            raise ConfigError("bias rule needs bias_column, bias_comparator and bias_threshold")
        try:
            rule = BiasRule(io.bias_column, io.bias_comparator, io.bias_threshold)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    test = None
    if io.test_path is not None:
        test = load_csv(io.test_path, io.outcome, list(data.feature_names))
        if not test.fully_observed:
            raise ConfigError(f"test file {io.test_path} has missing outcomes")
        train = data
    elif data.fully_observed:
        train, test = split(data, SplitSpec(io.train_fraction, cfg.seed))
    else:
        train = data
    if rule is not None and train.fully_observed:
        train = inject_bias(train, rule)
    if io.standardize:
        train, st = standardize(train)
        if test is not None:
            test = st.transform(test)
    return train, (Holdout(test) if test is not None else None)


def _report_json(run) -> dict:
    rep = run.report
    out = {
        "method": rep.method_tag,
        "seed": rep.seed,
        "features": rep.features(),
        "J": rep.mask.j_count,
        "mask": [int(v) for v in rep.mask.assigned],
        "r2_adj": rep.r2_adj,
        "train_mse": rep.train_mse,
        "test_mse": rep.test_mse,
    }
    if rep.method_tag != "NAIVE":
        out["rho_hat"] = rep.rho_hat
        out["train_mse_imr"] = rep.train_mse_imr
        out["beta_hat"] = run.model.beta_hat.tolist()
        out["beta_h_hat"] = run.model.beta_h_hat
        out["sigma_sq_hat"] = run.model.sigma_sq_hat
        out["accepted_candidates"] = run.extraction.accepted_count
        if run.naive_report is not None:
            out["naive_same_mask_test_mse"] = run.naive_report.test_mse
    else:
        out["coef"] = run.model.coef.tolist()
    if run.pi_hat is not None:
        out["pi_assign"] = run.pi_hat.p_assign.tolist()
    return out


def cmd_run(args, text: str) -> int:
    cfg = run_config(text)
    out = _out_dir(args)
    train, holdout = prepare_data(cfg)
    t0 = time.perf_counter()
    try:
        run = run_method(train, cfg, holdout)
    except NoCandidateInRange as exc:
        print(f"error: {exc}", file=sys.stderr)
        _write(out / "no_candidate.json", _json(exc.rho_summary))
        raise
    elapsed = time.perf_counter() - t0
    _write(out / "report.json", _json(_report_json(run)))
    rows = [run.report.as_row(with_runtime=False)]
    if run.naive_report is not None:
        rows.append(run.naive_report.as_row(with_runtime=False))
    _write(out / "report.csv", _csv(rows))
    _write(out / "report.txt", _aligned(rows) + "\n")
    names = train.feature_names
    mask_rows = [
        {"feature": nm, "assigned": str(int(run.report.mask.assigned[k]))}
        | ({"pi_assign": repr(float(run.pi_hat.p_assign[k]))} if run.pi_hat is not None else {})
        for k, nm in enumerate(names)
    ]
    _write(out / "mask.csv", _csv(mask_rows))
    if run.trace is not None:
        trace_rows = [
            {
                "epoch": str(r.epoch),
                "mae": repr(r.loss),
                "J": "0" if r.mask is None else str(r.mask.j_count),
                "redraws": str(r.redraws),
                "skipped": str(int(r.skipped)),
            }
            for r in run.trace.records
        ]
        _write(out / "trace.csv", _csv(trace_rows))
    _write(out / "manifest.json", _json(manifest("run", text, cfg.seed)))
    if not args.replay:
        _write(out / "timings.json", _json({"runtime_seconds": elapsed}))
    print(_aligned(rows))
    return 0


# -- benchmark ---------------------------------------------------------------


def cmd_benchmark(args, text: str, parser) -> int:
    cp = parse_sections(text)
    sec = cp["benchmark"] if cp.has_section("benchmark") else {}
    methods = [m.strip() for m in sec.get("methods", "NAIVE,FA,FA_STAR,HECKMAN_C").split(",") if m.strip()]
    if not methods:
        parser.print_usage(sys.stderr)
        print("error: [benchmark] methods is empty", file=sys.stderr)
        return USAGE_EXIT
    cfg = from_ini(text, required=max((_required_for(m) for m in methods), key=len))
    for m in methods:
        cfg.with_(method=m)  # validates the name
    try:
        grid_c = _floats(sec.get("grid_c", ""))
        grid_T = _ints(sec.get("grid_T", ""))
        grid_B = _ints(sec.get("grid_B", ""))
        repeats = int(sec.get("repeats", "1"))
    except ValueError as exc:
        raise ConfigError(f"[benchmark]: {exc}") from None
    out = _out_dir(args)
    train, holdout = prepare_data(cfg)
    res = benchmark(train, holdout, cfg, methods, grid_c, grid_T, grid_B, repeats,
                    with_runtime=not args.replay)
    _write(out / "benchmark.csv", res.methods_csv(with_runtime=not args.replay))
    _write(out / "benchmark.txt", res.render(with_runtime=not args.replay))
    if res.grid_c_T:
        _write(out / "grid_c_T.csv", _csv(res.grid_c_T))
    if res.grid_T_B:
        _write(out / "grid_T_B.csv", _csv(res.grid_T_B))
    if res.ttests:
        _write(out / "ttests.csv", _csv(res.ttests))
    _write(out / "manifest.json", _json(manifest("benchmark", text, cfg.seed)))
    print(res.render(with_runtime=not args.replay), end="")
    return 0


# -- ttest -------------------------------------------------------------------


def cmd_ttest(args) -> int:
    try:
        with open(args.input, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {args.input}: {exc.strerror}") from None
    if not rows:
        raise ConfigError(f"{args.input} has no rows")
    cols = list(rows[0])
    a_col = args.a or cols[0]
    b_col = args.b or cols[1]
    for c in (a_col, b_col):
        if c not in cols:
            raise ConfigError(f"column {c!r} not in {args.input}")
    a = [float(r[a_col]) for r in rows]
    b = [float(r[b_col]) for r in rows]
    res = paired_t_test(a, b)
    if res.zero_variance:
        raise ZeroVarianceDifferences(
            f"all {res.pairs} differences equal {res.mean_diff:g}; t is undefined"
        )
    print(f"{a_col} - {b_col}: {res.mean_diff:.6g} +- {res.std_diff:.6g} "
          f"(pairs={res.pairs}, t={res.t_statistic:.6g}, p={res.p_value:.6g})")
    if args.out_dir:
        out = _out_dir(args)
        _write(out / "ttest.json", _json(res.__dict__ | {"a": a_col, "b": b_col}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="sectioned key-value config file")
    common.add_argument("--seed", type=int, help="override [train] seed")
    common.add_argument("--out-dir", default="out", help="output directory (default: out)")
    common.add_argument("--replay", action="store_true",
                        help="omit wall-clock timings so outputs are byte-identical across runs")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    p = argparse.ArgumentParser(prog="heckman-fa", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic MNAR dataset")
    sub.add_parser("run", parents=[common], help="fit one method end to end")
    sub.add_parser("benchmark", parents=[common], help="compare methods and sweep grids")
    t = sub.add_parser("ttest", parents=[common], help="paired t-test on two CSV columns")
    t.add_argument("input", help="CSV file with paired values")
    t.add_argument("--a", help="first column (default: first)")
    t.add_argument("--b", help="second column (default: second)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "ttest":
            return cmd_ttest(args)
        text = load_config_text(args)
        if args.command == "synth":
            return cmd_synth(args, text)
        if args.command == "run":
            return cmd_run(args, text)
        return cmd_benchmark(args, text, parser)
    except HeckmanFAError as exc:
        if not isinstance(exc, NoCandidateInRange):
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
