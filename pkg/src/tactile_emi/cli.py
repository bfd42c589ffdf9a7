"""``tactile-emi`` command line.

Exit codes: 0 ok, 2 config/usage error, 3 invariant violation, 4 I/O error.
Failures print one line ``error[<category>]: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

from . import __version__
from . import config as C
from .datagen import attack_trace, build_dataset, load_dataset, protocol_from_manifest, save_dataset, sensor_from_manifest, split_for
from .detect import detect
from .emi import frequency_sweep
from .grasp import SimTrace, run_scenario
from .learn import Forest, evaluate, train_forest, windowed_dataset
from .pipeline import reproduce_table1, run_calibration
from .report import CaseMetrics, MetricsReport, Stat, dataset_fidelity, emit_report, write_plot_csv

log = logging.getLogger("tactile_emi")

OUT_ENV = "TACTILE_EMI_OUT"
EXIT_CONFIG, EXIT_INVARIANT, EXIT_IO = 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error[usage]: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _load_config(args, required: bool = True) -> C.Config:
    if args.config is None:
        if required:
            raise C.ConfigError("--config is required for this subcommand")
        return C.Config.empty()
    return C.Config.load(args.config)


def _seed(args, cfg: C.Config) -> int:
    return cfg.seed if args.seed is None else args.seed


def _out_dir(args, default: str) -> Path:
    root = args.out or os.path.join(os.environ.get(OUT_ENV, "out"), default)
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _manifest(args, out: Path, cfg: C.Config | None, seed: int | None, outputs: list[Path], started: float) -> None:
    doc = {
        "subcommand": args.command,
        "config_path": args.config,
        "config_hash": cfg.hash if cfg is not None and args.config else None,
        "seed": seed,
        "tool_version": __version__,
        "outputs": sorted(str(p.relative_to(out)) if p.is_relative_to(out) else str(p) for p in outputs),
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    _write_atomic(out / "run_manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _profile(path: str | None):
    if path is None:
        return None, None
    cfg = C.Config.load(path)
    inj = C.injections(cfg)
    if not inj:
        raise C.ConfigError(f"{path}: no injections in attack profile")
    return inj, cfg.hash


# --- subcommands -------------------------------------------------------------


def cmd_gen_data(args) -> tuple:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    sensor = C.sensor_model(cfg)
    protocol = C.press_protocol(cfg, seed)
    profile, phash = _profile(args.attack_profile)
    traces = build_dataset(protocol, sensor, profile)
    out = _out_dir(args, "dataset")
    split = split_for(protocol, traces)
    extra = {"config_hash": cfg.hash, "attack_profile_hash": phash}
    path = save_dataset(out, protocol, sensor, traces, split, extra)
    log.info("wrote %d traces to %s", len(traces), out)
    return out, cfg, seed, [path, out / "traces"]


def cmd_train(args) -> tuple:
    cfg = _load_config(args, required=False)
    manifest, traces = load_dataset(args.dataset)
    seed = args.seed if args.seed is not None else manifest["seed"]
    protocol = protocol_from_manifest(manifest)
    train = manifest["split"]["train"]
    X, y = windowed_dataset([traces[i] for i in train], C.window_spec(cfg))
    names = [f"{w:g}g" for w in protocol.weight_classes]
    forest = train_forest(X, y, C.forest_params(cfg), seed, protocol.n_classes, names)
    out = _out_dir(args, "forest")
    path = out / "forest.json"
    path.write_text(forest.to_json())
    log.info("trained %d trees on %d windows", forest.n_trees, len(y))
    return out, cfg, seed, [path]


def cmd_eval(args) -> tuple:
    cfg = _load_config(args, required=False)
    manifest, traces = load_dataset(args.dataset)
    sensor = sensor_from_manifest(manifest)
    forest = Forest.from_json(Path(args.forest).read_text())
    profile, phash = _profile(args.attack_profile)
    if profile:
        traces = [attack_trace(lt, profile, sensor) for lt in traces]
    rows = manifest["split"]["test"] if args.split == "test" else range(len(traces))
    subset = [traces[i] for i in rows]
    X, y = windowed_dataset(subset, C.window_spec(cfg))
    ev = evaluate(forest, X, y)
    fid = dataset_fidelity(subset)
    label = args.label or ("attack" if profile else "non-attack")
    case = CaseMetrics(
        label,
        fid,
        Stat.of([ev.macro_precision]),
        Stat.of([ev.macro_recall]),
        None if ev.macro_f1 is None else Stat.of([ev.macro_f1]),
        {"evaluation": ev.to_dict(), "attack_profile_hash": phash},
    )
    out = _out_dir(args, "eval")
    path = out / "metrics.json"
    path.write_text(json.dumps(case.to_dict(), indent=2, sort_keys=True) + "\n")
    f1 = "--" if ev.macro_f1 is None else f"{ev.macro_f1:.4f}"
    print(f"{label}: P={ev.macro_precision:.4f} R={ev.macro_recall:.4f} F1={f1}")
    return out, cfg, manifest["seed"], [path]


def cmd_simulate(args) -> tuple:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    scenario = C.grasp_scenario(cfg, seed)
    sensor = C.sensor_model(cfg)
    trace = run_scenario(scenario, sensor, C.coupling_model(cfg) if scenario.attack else None)
    out = _out_dir(args, "simulate")
    tpath = out / "trace.csv"
    tpath.write_text(trace.to_csv())
    events = {name: trace.first_event(name) for name in ("attack_on", "slip", "drop", "crush")}
    epath = out / "events.json"
    epath.write_text(json.dumps({"first_frame": events, "frames": len(trace)}, indent=2, sort_keys=True) + "\n")
    ppath = out / "plot.csv"
    write_plot_csv(ppath, trace)
    print(" ".join(f"{k}={v}" for k, v in events.items()))
    return out, cfg, seed, [tpath, epath, ppath]


def cmd_sweep(args) -> tuple:
    cfg = _load_config(args)
    s = C.sweep_settings(cfg)
    for key in ("f_start", "f_end", "step"):
        if getattr(args, key) is not None:
            s[key] = getattr(args, key)
    result = frequency_sweep(C.coupling_model(cfg), s["f_start"], s["f_end"], s["step"], s["probe_distance"], s["probe_power"])
    out = _out_dir(args, "sweep")
    path = out / "sweep.csv"
    result.to_csv(path)
    print(f"{result.best_freq:.0f}")
    return out, cfg, None, [path]


def cmd_detect(args) -> tuple:
    cfg = _load_config(args, required=False)
    trace = SimTrace.from_csv(Path(args.trace).read_text())
    det = detect(trace.spoofed_reading, C.detector_config(cfg))
    onset = args.onset if args.onset is not None else trace.first_event("attack_on")
    out = _out_dir(args, "detect")
    fpath = out / "flags.csv"
    lines = Path(args.trace).read_text().splitlines()
    body = [lines[0] + ",flag"] + [f"{row},{int(f)}" for row, f in zip(lines[1:], det.flags)]
    fpath.write_text("\n".join(body) + "\n")
    spath = out / "detection.json"
    summary = det.summary(onset)
    spath.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"first_flag={summary['first_flag']} flagged_fraction={summary['flagged_fraction']:.4f}")
    return out, cfg, None, [fpath, spath]


def cmd_report(args) -> tuple:
    out = _out_dir(args, "report")
    if args.results:
        cases = [CaseMetrics.from_dict(json.loads(Path(p).read_text())) for p in args.results]
        report = MetricsReport(cases, {"tool_version": __version__, "sources": [Path(p).name for p in args.results]})
        cfg, seed = None, None
    else:
        cfg = _load_config(args)
        seed = _seed(args, cfg)
        profile, phash = _profile(args.attack_profile)
        run = reproduce_table1(cfg, seed, profile, phash)
        report = run.report
        if not args.no_artifacts:
            for i, forest in enumerate(run.forests):
                (out / f"forest_repeat{i}.json").write_text(forest.to_json())
    scenarios = {}
    for p in args.trace or []:
        scenarios[Path(p).stem] = SimTrace.from_csv(Path(p).read_text())
    written = emit_report(report, out, scenarios)
    if not args.quiet:
        print(report.table("per_trace"), end="")
    return out, cfg, seed, written


def cmd_calibrate(args) -> tuple:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    if not cfg.has("calibration"):
        raise C.ConfigError(f"{cfg.source}: calibrate needs a [calibration] section")
    sensor = C.sensor_model(cfg)
    traces = build_dataset(C.press_protocol(cfg, seed), sensor)
    result = run_calibration(cfg, traces, sensor)
    out = _out_dir(args, "calibrate")
    ppath = out / "profile.cfg"
    ppath.write_text(C.profile_text(result, cfg.hash))
    jpath = out / "calibration.json"
    chosen = {k: getattr(result, k) for k in ("suppression", "offset", "gain", "cos_sim", "amp_ratio", "error")}
    jpath.write_text(json.dumps({"chosen": chosen, "grid": result.grid}, indent=2, sort_keys=True) + "\n")
    print(f"suppression={result.suppression:.4f} offset={result.offset:.6f} gain={result.gain:.6f} "
          f"cos_sim={result.cos_sim:.4f} amp_ratio={result.amp_ratio:.4f}")
    return out, cfg, seed, [ppath, jpath]


COMMANDS = {
    "gen-data": (cmd_gen_data, "synthesise the weight-press dataset"),
    "train": (cmd_train, "train the random forest on a dataset's train split"),
    "eval": (cmd_eval, "score a forest on a dataset, optionally under attack"),
    "simulate": (cmd_simulate, "run a closed-loop grasp scenario"),
    "sweep": (cmd_sweep, "sweep the carrier and locate the coupling resonance"),
    "detect": (cmd_detect, "flag EMI-corrupted frames in a simulation trace"),
    "report": (cmd_report, "benign vs attack fidelity and classifier report"),
    "calibrate": (cmd_calibrate, "fit an attack profile to target fidelity statistics"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario config file (.cfg)")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<subcommand> or ./out/<subcommand>)")
    common.add_argument("--quiet", action="store_true", help="only errors on stderr")

    parser = _Parser(prog="tactile-emi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser, metavar="SUBCOMMAND")
    parsers = {}
    for name, (_, help_text) in COMMANDS.items():
        parsers[name] = sub.add_parser(name, parents=[common], help=help_text, description=help_text)

    parsers["gen-data"].add_argument("--attack-profile", help="injection profile applied to every frame")
    parsers["train"].add_argument("--dataset", required=True, help="dataset directory from gen-data")
    p = parsers["eval"]
    p.add_argument("--forest", required=True, help="forest.json from train")
    p.add_argument("--dataset", required=True)
    p.add_argument("--attack-profile", help="perturb the dataset with this profile before scoring")
    p.add_argument("--split", choices=("test", "all"), default="test")
    p.add_argument("--label", help="case label written into metrics.json")
    p = parsers["sweep"]
    p.add_argument("--f-start", type=float)
    p.add_argument("--f-end", type=float)
    p.add_argument("--step", type=float)
    p = parsers["detect"]
    p.add_argument("--trace", required=True, help="trace.csv from simulate")
    p.add_argument("--onset", type=int, help="attack onset frame (default: first attack_on event)")
    p = parsers["report"]
    p.add_argument("--attack-profile", help="use this profile instead of calibrating")
    p.add_argument("--results", nargs="+", help="aggregate existing eval metrics.json files instead of running")
    p.add_argument("--trace", nargs="+", help="simulation traces to emit as plot CSVs")
    p.add_argument("--no-artifacts", action="store_true", help="skip writing per-repeat forests")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    started = time.monotonic()
    try:
        out, cfg, seed, outputs = COMMANDS[args.command][0](args)
        _manifest(args, out, cfg, seed, outputs, started)
    except C.ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error[invariant]: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return 0


if __name__ == "__main__":
    sys.exit(main())
