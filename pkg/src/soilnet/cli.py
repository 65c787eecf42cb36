"""Operator CLI: load, advance, download, label, qc, report, serve, replay.

Stateful verbs keep the world in a state directory (a pickle snapshot next
to the sqlite database), so a session can span processes:

    soilnet --state run1 load scenarios/cubhill.json
    soilnet --state run1 advance 7d
    soilnet --state run1 download --protocol cxfs
    soilnet --state run1 report --scope deployment --out report.csv
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .pipeline import RegistryIncompleteError
from .world import World, load_scenario

STATE_PICKLE = "world.pkl"
STATE_DB = "pipeline.sqlite"


def parse_duration(text: str) -> float:
    units = {"s": 1.0, "m": 60.0, "h": 3600.0, "d": 86400.0}
    text = text.strip()
    if text and text[-1] in units:
        return float(text[:-1]) * units[text[-1]]
    return float(text)


def parse_scope(text: str) -> tuple[str, int | None]:
    if text == "deployment":
        return "deployment", None
    for prefix in ("patch", "mote"):
        if text.startswith(prefix + ":"):
            return prefix, int(text.split(":", 1)[1])
    raise argparse.ArgumentTypeError(
        f"scope must be deployment, patch:<id>, or mote:<id>, got {text!r}"
    )


def _state_paths(state_dir: str) -> tuple[Path, Path]:
    d = Path(state_dir)
    return d / STATE_PICKLE, d / STATE_DB


def _restore(state_dir: str) -> World:
    pkl, _ = _state_paths(state_dir)
    if not pkl.exists():
        sys.exit(f"no world loaded in {state_dir!r}; run `soilnet load` first")
    return World.restore(pkl)


def _save(world: World, state_dir: str):
    pkl, _ = _state_paths(state_dir)
    world.save(pkl)


def cmd_load(args) -> int:
    pkl, db = _state_paths(args.state)
    pkl.parent.mkdir(parents=True, exist_ok=True)
    if db.exists():
        db.unlink()
    world = load_scenario(args.scenario, db_path=str(db))
    _save(world, args.state)
    sc = world.scenario
    print(f"loaded scenario {sc.name!r}: {len(sc.motes)} motes, "
          f"{len(sc.patches)} patches, seed {sc.seed}")
    return 0


def cmd_advance(args) -> int:
    world = _restore(args.state)
    summary = world.advance(parse_duration(args.duration))
    _save(world, args.state)
    print(json.dumps(summary.to_dict()))
    return 0


def cmd_download(args) -> int:
    world = _restore(args.state)
    if args.slack is not None:
        world.protocol_params.hop_slack = args.slack
    if args.retries is not None:
        world.protocol_params.session_retries = args.retries
    scope, target = args.scope

    def progress(done, total, report):
        print(f"\rprogress {done}/{total}", end="", file=sys.stderr)

    report = world.trigger_download(scope, target, args.protocol, progress)
    print("", file=sys.stderr)
    _save(world, args.state)
    print(json.dumps({
        "sessions": len(report.sessions),
        "complete_sessions": sum(s.complete for s in report.sessions),
        "direct_leaf_sessions": len(report.direct_leaf_sessions()),
        "ingested": report.ingested,
        "duplicates": report.duplicates,
        "quarantined": report.quarantined,
    }))
    return 0


def cmd_label(args) -> int:
    world = _restore(args.state)
    attributes = {}
    for item in args.attr or []:
        key, _, value = item.partition("=")
        try:
            attributes[key] = json.loads(value)
        except json.JSONDecodeError:
            attributes[key] = value
    try:
        world.label(args.barcode, args.kind, attributes)
    except ValueError as err:
        sys.exit(f"label rejected: {err}")
    _save(world, args.state)
    print(f"labeled {args.kind} {args.barcode}")
    return 0


def cmd_qc(args) -> int:
    from .qc import screen_summary_csv

    world = _restore(args.state)
    alerts, result = world.qc_alerts()
    _save(world, args.state)
    for alert in alerts:
        print(f"{alert.severity}: {alert.message}")
    flagged = sum(1 for f in result.flags.values() if f != ["ok"])
    print(f"# {flagged} flagged rows, {len(result.missing)} missing samples")
    if args.out:
        Path(args.out).write_text(screen_summary_csv(result))
        print(f"wrote {args.out}")
    return 0


def cmd_report(args) -> int:
    world = _restore(args.state)
    scope, target = args.scope
    try:
        csv_text, summary = world.export_report(scope, target)
    except RegistryIncompleteError as err:
        sys.exit(f"report refused: {err}")
    _save(world, args.state)
    if args.out:
        Path(args.out).write_text(csv_text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(csv_text)
    print(json.dumps(summary, default=str), file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    world = _restore(args.state)
    serve(world, port=args.port, token=args.token,
          throttle_ms=args.throttle_ms, state_dir=args.state)
    return 0


def cmd_replay(args) -> int:
    pkl, db = _state_paths(args.state)
    pkl.parent.mkdir(parents=True, exist_ok=True)
    if db.exists():
        db.unlink()
    world = load_scenario(args.scenario, db_path=str(db))
    commands = json.loads(Path(args.commands).read_text())
    world.replay_commands(commands)
    _save(world, args.state)
    print(f"replayed {len(commands)} commands")
    return 0


def cmd_dump_commands(args) -> int:
    world = _restore(args.state)
    print(json.dumps(world.command_log, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="soilnet",
        description="soil-monitoring deployment simulator and control service",
    )
    parser.add_argument("--state", default="soilnet-state",
                        help="state directory (default: ./soilnet-state)")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("load", help="load a scenario file into the state dir")
    p.add_argument("scenario")
    p.set_defaults(fn=cmd_load)

    p = sub.add_parser("advance", help="advance simulated time (e.g. 30d, 12h, 600s)")
    p.add_argument("duration")
    p.set_defaults(fn=cmd_advance)

    p = sub.add_parser("download", help="run a collection plan")
    p.add_argument("--scope", type=parse_scope, default=("deployment", None),
                   help="deployment | patch:<id> | mote:<id>")
    p.add_argument("--protocol", choices=["cxfs", "koala", "flood"], default="cxfs")
    p.add_argument("--slack", type=int, default=None, help="forwarder hop slack")
    p.add_argument("--retries", type=int, default=None, help="session retry budget")
    p.set_defaults(fn=cmd_download)

    p = sub.add_parser("label", help="register a device or sensor assignment")
    p.add_argument("barcode", type=int)
    p.add_argument("kind", choices=["mote", "multiplexer", "sensor", "assignment"])
    p.add_argument("--attr", action="append", metavar="KEY=VALUE")
    p.set_defaults(fn=cmd_label)

    p = sub.add_parser("qc", help="screen the database and print alerts")
    p.add_argument("--out", default=None, help="write the QC summary CSV here")
    p.set_defaults(fn=cmd_qc)

    p = sub.add_parser("report", help="export a CSV report")
    p.add_argument("--scope", type=parse_scope, default=("deployment", None))
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("serve", help="run the HTTP control service")
    p.add_argument("--port", type=int, default=8471)
    p.add_argument("--token", default=None,
                   help="auth token (default: SOILNET_TOKEN env var)")
    p.add_argument("--throttle-ms", type=int, default=0,
                   help="per-session delay so progress is observable")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("replay", help="rebuild state from a scenario + command log")
    p.add_argument("scenario")
    p.add_argument("commands")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("dump-commands", help="print the state dir's command log")
    p.set_defaults(fn=cmd_dump_commands)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
