"""``ergorisk`` command line: validate, sync, score, train, evaluate, synth, report.

Exit codes: 0 success, 2 usage, 3 input validation, 4 numeric or precondition
failure. Failures print one JSON object to stderr naming the stage that
raised. Every artifact records the subcommand, config hash and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .bach import bach_series
from .config import ENV_VAR, Config, load_config
from .errors import ConfigError, ErgoRiskError, StreamFormatError
from .evaluation import (
    bin_hal_array, bin_rula_array, fit_rula_models, leave_one_out, report_csv, report_json,
    report_text,
)
from .hal import count_exertions, hal_counts, hal_series, trial_channels
from .ml.datasets import Samples, hal_samples, rula_samples
from .ml.gru import train_gru
from .rula import rula_series
from .series import KINDS, header_lines, load_series, save_long, save_series
from .streams import SIDES, load_bundle, save_bundle, validate_bundle
from .sync import load_synced, save_synced, synchronize
from .synth import generate_synthetic_trial, load_scenario, participant_scenario

MODEL_ALIASES = {"rula-gbdt": "rula_gbdt", "hal-gru": "hal_gru"}


# -- helpers ------------------------------------------------------------------

def _overrides(pairs: list[str]) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot or not section or not name:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        out.setdefault(section.strip(), {})[name.strip()] = value
    return out


def _config(args) -> Config:
    overrides = _overrides(args.set)
    if args.seed is not None:
        overrides.setdefault("run", {})["seed"] = str(args.seed)
    return load_config(args.config, overrides)


def _meta(args, cfg: Config) -> dict:
    return {"subcommand": args.label, "config_sha256": cfg.sha256(),
            "seed": cfg.run.seed, "version": __version__}


def load_trial(path: str | Path, cfg: Config):
    """A synced trial from a synced directory/header or a raw bundle manifest/directory."""
    path = Path(path)
    if path.is_dir():
        if (path / "synced.json").exists():
            return load_synced(path)
        path = path / "manifest.json"
    if not path.exists():
        raise StreamFormatError(f"{path}: no such file")
    if path.name == "synced.json":
        return load_synced(path)
    return synchronize(load_bundle(path), cfg.sync.max_bridge)


def _out_dir(path: str) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


# -- subcommands --------------------------------------------------------------

def cmd_validate(args, cfg: Config) -> int:
    bundle = load_bundle(args.input)
    report = validate_bundle(bundle, cfg.sync.max_bridge)
    doc = {"meta": _meta(args, cfg), "participant_id": bundle.participant_id,
           "tool": bundle.tool, "report": report.to_dict()}
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 3 if report.fatal else 0


def cmd_sync(args, cfg: Config) -> int:
    trial = load_trial(args.input, cfg)
    save_synced(trial, _out_dir(args.out), _meta(args, cfg))
    print(f"{len(trial)} ticks at {trial.rate:g} Hz -> {Path(args.out) / 'synced.csv'}")
    return 0


def _hal_audit(trial, cfg: Config, path: Path, meta: dict) -> None:
    """Per-window counts from the sliding counter next to a from-scratch recount."""
    tmap = cfg.taxel_map()
    fast = hal_counts(trial, tmap, cfg.hal)
    chans = trial_channels(trial, tmap, cfg.hal.include_palm)
    W = cfg.hal.window_ticks
    lines = header_lines(meta)
    lines.append("tick,left_count,left_recount,right_count,right_recount")
    for k in range(W, len(trial)):
        row = [str(k)]
        for s in SIDES:
            again = count_exertions(chans[s][k - W + 1:k + 1], cfg.hal).count
            row += [str(int(fast[s][k])), str(again)]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def cmd_score(args, cfg: Config) -> int:
    trial = load_trial(args.input, cfg)
    out = _out_dir(args.out)
    meta = _meta(args, cfg)
    kinds = KINDS if args.kind == "all" else (args.kind,)
    tmap = cfg.taxel_map()
    for kind in kinds:
        if kind == "rula":
            series = rula_series(trial, cfg.rula)
        elif kind == "hal":
            series = hal_series(trial, tmap, cfg.hal)
            if args.recount_audit:
                _hal_audit(trial, cfg, out / "hal_audit.csv", meta)
        else:
            series, diag = bach_series(trial, tmap, cfg.bach, with_diagnostics=True)
            if args.bach_diagnostics:
                lines = header_lines(meta)
                lines.append("tick,t," + ",".join(f"{s}_{c}" for s in SIDES
                                                   for c in ("tau", "theta", "alpha")))
                lines += [",".join(repr(v) for v in row) for row in diag.rows(trial.t)]
                lines.append("")
                (out / "bach_diagnostics.csv").write_text("\n".join(lines))
        save_series(series, out / f"{kind}.csv", meta)
        print(f"{kind}: {len(series)} ticks -> {out / (kind + '.csv')}")
    return 0


def cmd_train(args, cfg: Config) -> int:
    kind = MODEL_ALIASES[args.model]
    trials = [load_trial(p, cfg) for p in args.inputs]
    meta = _meta(args, cfg) | {"participants": ",".join(sorted({t.participant_id for t in trials}))}
    ecfg = cfg.eval_config()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if kind == "rula_gbdt":
        data = Samples.concat([rula_samples(t, cfg.rula, cfg.evaluate.rula_stride) for t in trials])
        bin_rula_array(data.y)
        models = fit_rula_models(data, ecfg)
        doc = {"schema": "ergorisk-rula-gbdt-pair/1", "meta": meta,
               "models": {s: models[s].to_dict() for s in SIDES}}
        traces = {s: models[s].loss_trace for s in SIDES}
    else:
        data = Samples.concat([hal_samples(t, cfg.taxel_map(), cfg.hal,
                                           cfg.evaluate.hal_train_stride_s) for t in trials])
        bin_hal_array(data.y)
        model = train_gru(data.X, data.y, ecfg.gru)
        doc = model.to_dict() | {"meta": meta}
        traces = {"all": model.loss_trace}
    out.write_text(json.dumps(doc) + "\n")
    lines = header_lines(meta) + ["step," + ",".join(traces)]
    n = max(len(v) for v in traces.values())
    for i in range(n):
        lines.append(f"{i}," + ",".join(repr(float(v[i])) if i < len(v) else "" for v in traces.values()))
    out.with_suffix(".loss.csv").write_text("\n".join(lines) + "\n")
    print(f"{args.model}: {len(data)} samples -> {out}")
    return 0


def cmd_evaluate(args, cfg: Config) -> int:
    kind = MODEL_ALIASES[args.model]
    trials = [load_trial(p, cfg) for p in args.inputs]
    runs = leave_one_out(trials, kind, cfg.eval_config(), cfg.taxel_map())
    out = _out_dir(args.out)
    meta = _meta(args, cfg)
    head = "\n".join(header_lines(meta)) + "\n"
    (out / "report.csv").write_text(head + report_csv(runs))
    (out / "report.txt").write_text(head + report_text(runs))
    (out / "report.json").write_text(report_json(runs, meta))
    sys.stdout.write(report_text(runs))
    return 0


def cmd_synth(args, cfg: Config) -> int:
    seed = cfg.run.seed
    if args.spec:
        spec = load_scenario(args.spec)
    else:
        spec = participant_scenario(args.participant, args.tool, args.duration, seed)
    bundle = generate_synthetic_trial(spec, seed)
    path = save_bundle(bundle, _out_dir(args.out), {"meta": _meta(args, cfg)})
    print(f"synthetic trial {spec.participant_id}/{spec.tool}, {spec.duration:g} s -> {path}")
    return 0


def _series_files(inputs: list[str]) -> list[Path]:
    files = []
    for p in map(Path, inputs):
        if p.is_dir():
            files += [p / f"{k}.csv" for k in KINDS if (p / f"{k}.csv").exists()]
        else:
            files.append(p)
    if not files:
        raise StreamFormatError("no score series found in the given inputs")
    return files


def cmd_report(args, cfg: Config) -> int:
    series = [load_series(f) for f in _series_files(args.inputs)]
    if len({len(s) for s in series}) > 1:
        raise StreamFormatError("score series differ in length; were they scored from one trial?")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_long(series, out, _meta(args, cfg))
    print(f"{sum(2 * len(s) for s in series)} rows -> {out}")
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None,
                        help=f"INI config file (default: ${ENV_VAR})")
    common.add_argument("--seed", type=int, default=None, help="overrides [run] seed")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")

    p = argparse.ArgumentParser(prog="ergorisk", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[common], help="check a raw trial bundle")
    s.add_argument("input", help="bundle manifest.json")
    s.add_argument("--out", help="also write the JSON report here")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("sync", parents=[common], help="trim and resample a bundle to 60 Hz")
    s.add_argument("input")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_sync)

    s = sub.add_parser("score", parents=[common], help="per-tick RULA, HAL and/or BACH")
    s.add_argument("kind", choices=KINDS + ("all",))
    s.add_argument("input", help="synced directory or bundle manifest")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--recount-audit", action="store_true",
                   help="write hal_audit.csv comparing sliding and from-scratch window counts")
    s.add_argument("--bach-diagnostics", action="store_true",
                   help="write bach_diagnostics.csv with per-frame torque, angle and scaling")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("train", parents=[common], help="fit a risk model")
    s.add_argument("model", choices=sorted(MODEL_ALIASES))
    s.add_argument("inputs", nargs="+")
    s.add_argument("--out", required=True, help="model JSON path")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="leave-one-participant-out report")
    s.add_argument("--model", required=True, choices=sorted(MODEL_ALIASES))
    s.add_argument("inputs", nargs="+")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic trial bundle")
    s.add_argument("--spec", help="scenario INI file")
    s.add_argument("--participant", default="P01")
    s.add_argument("--tool", default="stringer", choices=("stringer", "convex_mold"))
    s.add_argument("--duration", type=float, default=60.0)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("report", parents=[common], help="long-format CSV of score series")
    s.add_argument("inputs", nargs="+", help="score directories or series CSVs")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)
    return p


def _fail(exc: Exception, module: str, code: int) -> int:
    err = {"error": type(exc).__name__, "module": module, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.label = args.command + (f":{args.kind}" if args.command == "score" else "") + \
        (f":{args.model}" if args.command in ("train", "evaluate") else "")
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except ErgoRiskError as exc:
        return _fail(exc, exc.module, exc.exit_code)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(exc, "cli", 3)


if __name__ == "__main__":
    sys.exit(main())
