"""``dataloc`` command line.

Exit codes: 0 success, 1 domain or I/O error, 2 usage error. Every command
that writes files also writes ``<primary output>.manifest.json`` holding
the argument vector, parameters and SHA-256 digests of the outputs;
``dataloc replay MANIFEST`` re-runs it and checks the digests.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from dataloc import __version__
from dataloc.augment import (
    DEFAULT_WINDOW_US,
    PortionRange,
    format_snapshots,
    online_snapshot,
    parse_snapshots,
    select_window,
)
from dataloc.errors import DataLocError, InvalidRange
from dataloc.features import (
    DEFAULT_TEST_FRACTION,
    build_feature_matrix,
    format_matrix,
    parse_matrix,
    subdivide_zones,
)
from dataloc.forest import ForestConfig, deserialize_model, dumps_model, predict_many, train_forest
from dataloc.harness import (
    SUBZONE_RANGES,
    GridSpec,
    augment_sessions,
    compare_modes,
    format_compare,
    format_curves,
    format_grid,
    format_subzones,
    run_grid,
    subzone_experiment,
    variability_curves,
)
from dataloc.ingest import (
    format_beacon_log,
    format_system_snapshots,
    hidden_bssids,
    parse_beacon_log,
    parse_system_snapshots,
)
from dataloc import sim


def _portion_range(text: str) -> PortionRange:
    try:
        return PortionRange.parse(text)
    except InvalidRange as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[str]:
    parts = [p.strip() for p in text.split(",")]
    try:
        [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated decimals, got {text!r}") from None
    return parts


def _max_features(text: str):
    if text in ("sqrt", "all"):
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("max features must be sqrt, all or an integer") from None


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """Collects outputs of one invocation and writes its manifest."""

    def __init__(self, args: argparse.Namespace, argv: list[str]):
        self.args = args
        self.argv = argv
        self.outputs: list[Path] = []

    def write(self, path, text: str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
        self.outputs.append(path)
        return path

    def finish(self) -> Path | None:
        if not self.outputs:
            return None
        params = {
            k: (str(v) if isinstance(v, (Path, PortionRange)) else
                [str(x) for x in v] if isinstance(v, list) else v)
            for k, v in sorted(vars(self.args).items()) if k != "func"
        }
        manifest = {
            "tool": "dataloc",
            "version": __version__,
            "subcommand": self.args.command,
            "argv": self.argv,
            "parameters": params,
            "outputs": {str(p): _sha256(p) for p in self.outputs},
        }
        path = Path(str(self.outputs[0]) + ".manifest.json")
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _grid_spec(args) -> GridSpec:
    return GridSpec(args.depths, args.estimators, args.max_features, args.min_samples_split,
                    seed=args.seed, test_fraction=args.test_fraction, split_seed=args.seed)


def _scenario(args):
    if args.scenario:
        return sim.load_scenario(args.scenario)
    return sim.default_hospital_like_scenario(args.seed)


# -- commands ---------------------------------------------------------------

def cmd_simulate(args, run: Run) -> None:
    scenario = _scenario(args)
    sessions, snaps = sim.simulate_all(scenario, args.snapshot_count if args.snapshots else 0)
    if args.subzones:
        sessions, snaps = subdivide_zones(sessions), subdivide_zones(snaps)
    run.write(args.out, format_beacon_log(sessions))
    if args.snapshots:
        run.write(args.snapshots, format_system_snapshots(snaps))
    if args.write_scenario:
        run.write(args.write_scenario, json.dumps(sim.scenario_to_dict(scenario), indent=2) + "\n")
    print(f"{len(sessions)} sessions, {sum(len(s.records) for s in sessions)} frames"
          + (f", {len(snaps)} system snapshots" if args.snapshots else ""))


def cmd_ingest(args, run: Run) -> None:
    if not args.log and not args.snapshots:
        raise DataLocError("give --log and/or --snapshots")
    lines = ["kind,position_id,zone_label,items,devices,duration_us\n"]
    if args.log:
        sessions = parse_beacon_log(args.log)
        for s in sessions:
            lines.append(f"session,{s.position_id},{s.zone_label},{len(s.records)},"
                         f"{len(s.bssids)},{s.duration_us}\n")
        hidden = hidden_bssids(sessions)
        print(f"{len(sessions)} sessions, {sum(len(s.records) for s in sessions)} frames, "
              f"{len({b for s in sessions for b in s.bssids})} devices ({len(hidden)} hidden)")
    if args.snapshots:
        snaps = parse_system_snapshots(args.snapshots)
        per_pos: dict[tuple[str, str], list] = {}
        for s in snaps:
            per_pos.setdefault((s.position_id, s.zone_label), []).append(s)
        for (pos, zone), group in per_pos.items():
            devices = len({b for s in group for b in s.readings})
            lines.append(f"snapshots,{pos},{zone},{len(group)},{devices},\n")
        print(f"{len(snaps)} system snapshots at {len(per_pos)} positions")
    if args.out:
        run.write(args.out, "".join(lines))


def cmd_augment(args, run: Run) -> None:
    sessions = parse_beacon_log(args.input)
    if args.subzones:
        sessions = subdivide_zones(sessions)
    snaps = augment_sessions(sessions, args.range, args.seed)
    run.write(args.out, format_snapshots(snaps))
    print(f"{len(snaps)} snapshots from {len(sessions)} sessions")


def cmd_featurize(args, run: Run) -> None:
    snaps = [s for path in args.input for s in parse_snapshots(path)]
    if args.subzones:
        snaps = subdivide_zones(snaps)
    universe = parse_matrix(args.universe_from).device_universe if args.universe_from else None
    exclude = hidden_bssids(parse_beacon_log(args.hidden_from)) if args.hidden_from else ()
    matrix = build_feature_matrix(snaps, universe, exclude)
    run.write(args.out, format_matrix(matrix))
    print(f"{len(matrix)} rows x {len(matrix.device_universe)} devices, {len(matrix.classes)} classes")


def cmd_train(args, run: Run) -> None:
    matrix = parse_matrix(args.input)
    config = ForestConfig(args.n_estimators, args.max_depth, args.max_features, args.seed,
                          args.min_samples_split)
    model = train_forest(matrix, config, jobs=args.jobs)
    run.write(args.out, dumps_model(model))
    print(f"{config.n_estimators} trees over {len(model.device_universe)} devices, "
          f"{len(model.classes)} classes")


def cmd_predict(args, run: Run) -> None:
    model = deserialize_model(args.model)
    if bool(args.snapshots) == bool(args.log):
        raise DataLocError("give exactly one of --snapshots or --log")
    if args.snapshots:
        snaps = parse_snapshots(args.snapshots)
    else:
        snaps = []
        for s in parse_beacon_log(args.log):
            now = s.records[-1].timestamp_us if args.now_us is None else args.now_us
            window = select_window(s.records, now, args.window_us)
            snaps.append(online_snapshot(window, s.position_id, s.zone_label))
    matrix = build_feature_matrix(snaps, model.device_universe)
    labels = predict_many(model, matrix.rows)
    text = "".join(label + "\n" for label in labels)
    sys.stdout.write(text)
    if args.out:
        run.write(args.out, text)


def cmd_grid(args, run: Run) -> None:
    result = run_grid(parse_matrix(args.input), _grid_spec(args), jobs=args.jobs)
    run.write(args.out, format_grid(result))
    best = result.best_cell
    print(f"best test accuracy {best.test_accuracy:.4f} at max_depth={best.max_depth}, "
          f"n_estimators={best.n_estimators}")


def cmd_compare(args, run: Run) -> None:
    sessions = parse_beacon_log(args.log)
    snaps = parse_system_snapshots(args.snapshots)
    report = compare_modes(sessions, snaps, args.range, _grid_spec(args), args.seed, jobs=args.jobs)
    run.write(args.out, format_compare(report))
    print(f"range used: {report.portion_range}")
    print(f"snapshot best test accuracy: {report.snapshot.best_test:.4f} "
          f"({report.snapshot.descriptor['samples']} samples)")
    print(f"augmented best test accuracy: {report.augmented.best_test:.4f} "
          f"({report.augmented.descriptor['samples']} samples)")
    print(f"best-cell delta {report.best_delta:+.4f}, per-cell mean delta {report.mean_delta:+.4f}")


def cmd_subzones(args, run: Run) -> None:
    sessions = parse_beacon_log(args.log)
    ranges = args.range or [PortionRange.parse(r) for r in SUBZONE_RANGES]
    runs = subzone_experiment(sessions, ranges, _grid_spec(args), args.seed, jobs=args.jobs)
    run.write(args.out, format_subzones(runs))
    for r in runs:
        print(f"({r.portion_range}): {r.samples} samples, best test accuracy {r.result.best_test:.4f}")


def cmd_curves(args, run: Run) -> None:
    sessions = parse_beacon_log(args.log)
    if args.position:
        matches = [s for s in sessions if s.position_id == args.position]
        if not matches:
            raise DataLocError(f"no session for position {args.position!r}")
        session = matches[0]
    else:
        session = sessions[0]
    curves = variability_curves(session, args.portions, args.reps, args.seed)
    samples, coverage = format_curves(curves)
    out = Path(args.out)
    run.write(out, samples)
    run.write(args.coverage_out or out.with_name(out.stem + "_coverage" + out.suffix), coverage)
    for c in curves:
        print(f"portion {c.portion_bp / 10000:.4g}: mean included fraction {c.mean_included:.4f}")


def cmd_replay(args, run: Run) -> None:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    code = main(manifest["argv"])
    if code != 0:
        raise DataLocError(f"replayed command exited with {code}")
    bad = [p for p, digest in manifest["outputs"].items() if _sha256(Path(p)) != digest]
    if bad:
        raise DataLocError("outputs differ from manifest: " + ", ".join(bad))
    print(f"replay reproduced {len(manifest['outputs'])} output(s)")


# -- parser -----------------------------------------------------------------

def _add_grid_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--depths", type=_int_list, default=(10, 15, 20, 25, 30),
                   help="comma-separated max_depth values (default 10,15,20,25,30)")
    p.add_argument("--estimators", type=_int_list, default=(10, 15, 20, 25, 30),
                   help="comma-separated n_estimators values (default 10,15,20,25,30)")
    p.add_argument("--max-features", type=_max_features, default="sqrt")
    p.add_argument("--min-samples-split", type=int, default=2)
    p.add_argument("--test-fraction", type=float, default=DEFAULT_TEST_FRACTION)
    p.add_argument("--jobs", type=int, default=1, help="parallel tree training processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dataloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dataloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate beacon logs and system snapshots")
    p.add_argument("--scenario", type=Path, help="scenario JSON (default: built-in 8-room scenario)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="beacon log to write")
    p.add_argument("--snapshots", type=Path, help="also write system snapshots here")
    p.add_argument("--snapshot-count", type=int, default=5, help="system snapshots per position")
    p.add_argument("--write-scenario", type=Path, help="dump the scenario JSON")
    p.add_argument("--subzones", action="store_true", help="label by zone/position")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="validate and summarise capture files")
    p.add_argument("--log", type=Path)
    p.add_argument("--snapshots", type=Path)
    p.add_argument("--out", type=Path, help="summary CSV")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("augment", help="synthesise snapshots from a beacon log")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--range", type=_portion_range, required=True, metavar="START,END,STEP,REPS")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subzones", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("featurize", help="build a feature matrix from snapshot files")
    p.add_argument("--in", dest="input", type=Path, nargs="+", required=True)
    p.add_argument("--universe-from", type=Path, help="reuse the columns of an existing matrix")
    p.add_argument("--hidden-from", type=Path, help="beacon log whose hidden networks are excluded")
    p.add_argument("--subzones", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train a random forest on a feature matrix")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-estimators", type=int, default=30)
    p.add_argument("--max-depth", type=int, default=20)
    p.add_argument("--max-features", type=_max_features, default="sqrt")
    p.add_argument("--min-samples-split", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="print one predicted zone per input row")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--snapshots", type=Path, help="snapshot file (augmented or system)")
    p.add_argument("--log", type=Path, help="beacon log; one online window per session")
    p.add_argument("--now-us", type=int, help="window end (default: last frame of each session)")
    p.add_argument("--window-us", type=int, default=DEFAULT_WINDOW_US)
    p.add_argument("--out", type=Path, help="also write labels here")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("grid", help="max_depth x n_estimators accuracy grid")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_grid_options(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("compare", help="snapshot mode vs augmented stream mode")
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--snapshots", type=Path, required=True)
    p.add_argument("--range", type=_portion_range, default=PortionRange.parse("0.8,1.0,0.05,1"),
                   metavar="START,END,STEP,REPS")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    _add_grid_options(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("subzones", help="sub-zone scaling over several ranges")
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--range", type=_portion_range, action="append",
                   metavar="START,END,STEP,REPS", help="repeatable (default: four scaling settings)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    _add_grid_options(p)
    p.set_defaults(func=cmd_subzones)

    p = sub.add_parser("curves", help="per-portion signal spread and device coverage")
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--position", help="position id (default: first session)")
    p.add_argument("--portions", type=_float_list,
                   default=_float_list("0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0"))
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--coverage-out", type=Path)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("replay", help="re-run a manifest and verify its output digests")
    p.add_argument("manifest", type=Path)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    run = Run(args, argv)
    try:
        args.func(args, run)
        if args.command != "replay":
            run.finish()
    except (DataLocError, ValueError, OSError) as exc:
        print(f"dataloc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
