"""Command-line entry point: ``mhealth <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Optional

from mhealth.clock import SimClock, wall_clock_ms
from mhealth.config import load_flat, section
from mhealth.gateway.config import ConfigError, ForwardPolicy

log = logging.getLogger("mhealth")


def _emit(obj: Any, out: Optional[str]) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _clock(args) -> Callable[[], int]:
    if args.fixed_clock is None:
        return wall_clock_ms
    return SimClock(args.fixed_clock)


def _settings(args, name: str) -> dict[str, Any]:
    return section(args.flat_config, name) if args.flat_config else {}


# --- commands -----------------------------------------------------------------

def cmd_gen_dataset(args) -> int:
    from mhealth.engine.study import synthesize_dataset

    data = synthesize_dataset(args.size, args.seed, args.anomaly_fraction)
    data.to_csv(args.out)
    _emit({"path": str(args.out), "rows": len(data), "anomaly_fraction": data.anomaly_fraction,
           "seed": args.seed}, None)
    return 0


def _hyperparams(args):
    from mhealth.engine.training import Hyperparams

    cfg = _settings(args, "train")
    pick = lambda flag, key, default: flag if flag is not None else cfg.get(key, default)
    return Hyperparams(
        learning_rate=float(pick(args.lr, "learning_rate", 0.1)),
        epochs=int(pick(args.epochs, "epochs", 2000)),
        seed=args.seed,
        init_scale=float(pick(args.init_scale, "init_scale", 0.5)),
        target_loss=float(pick(args.target_loss, "target_loss", 0.01)),
    ), int(pick(args.hidden, "n_hidden", 5))


def cmd_train(args) -> int:
    from mhealth.engine import LabeledSet, evaluate, init_model, save_model, train

    data = LabeledSet.from_csv(args.dataset)
    hp, n_hidden = _hyperparams(args)
    res = train(init_model(args.n_inputs, n_hidden, args.seed, hp.init_scale), data, hp)
    save_model(res.model, args.model_out)
    ev = evaluate(res.model, data)
    _emit({
        "model": str(args.model_out),
        "n_inputs": args.n_inputs,
        "n_hidden": n_hidden,
        "epochs_run": res.epochs_run,
        "epochs_to_target": res.epochs_to_target,
        "initial_loss": res.losses[0],
        "final_loss": res.losses[-1],
        "train_accuracy": ev.accuracy,
        "loss_curve": res.losses if args.curve else None,
    }, args.out)
    return 0


def cmd_study(args) -> int:
    from mhealth.engine.study import input_study

    hp, n_hidden = _hyperparams(args)
    report = input_study(args.seed, args.trials, args.size, args.anomaly_fraction, hp, n_hidden)
    d = report.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    print(report.table())
    if report.median_epochs(4) < report.median_epochs(3):
        print("note: the 4-input arm converged in fewer epochs than the 3-input arm")
    return 0


def _scenario(args):
    from mhealth.gateway.link import LinkScript, LinkSegment
    from mhealth.sensor.generator import EpisodeScript
    from mhealth.simulate import ScenarioConfig

    flat = dict(args.flat_config or {})
    cfg = ScenarioConfig.from_mapping(flat)
    if args.duration is not None:
        cfg.duration_s = args.duration
    if args.episode:
        eps = []
        for item in args.episode:
            a, b, kind = item.split(":")
            eps.append((float(a), float(b), kind))
        cfg.script = EpisodeScript.of(*eps)
    if args.link_down:
        cfg.link = LinkScript([LinkSegment(float(a), float(b), False)
                               for a, b in (s.split(":") for s in args.link_down)])
    if args.link_script:
        cfg.link = LinkScript.from_csv(args.link_script)
    cfg.seed = args.seed
    if not cfg.duration_s > 0:
        raise ConfigError("duration must be > 0")
    return cfg


def cmd_simulate(args) -> int:
    from mhealth.engine.mlp import load_model
    from mhealth.engine.study import reference_model
    from mhealth.simulate import run_scenario

    cfg = _scenario(args)
    model = None
    if args.server is None:
        model = load_model(args.model) if args.model else reference_model(args.seed)
    result = run_scenario(cfg, server_url=args.server, model=model)
    _emit(result.report, args.out)
    for v in result.report["violations"]:
        log.error("invariant violated: %s", v)
    return 0 if result.ok else 1


def cmd_sensor(args) -> int:
    from mhealth.sensor.codec import encode_frame
    from mhealth.sensor.generator import generate_stream

    cfg = _scenario(args)
    stream = generate_stream(cfg.profile, cfg.script, cfg.mode, cfg.sampling_hz, cfg.seed,
                             duration_s=cfg.duration_s)
    with open(args.out, "wb") as fh:
        for s in stream:
            fh.write(encode_frame(s))
    _emit({"path": str(args.out), "frames": len(stream)}, None)
    return 0


def cmd_gateway(args) -> int:
    from mhealth.gateway.link import HttpUplink
    from mhealth.gateway.locator import CellDatabase
    from mhealth.gateway.runner import Gateway
    from mhealth.gateway.config import SensorRegistration

    policy = ForwardPolicy.from_mapping(_settings(args, "policy"))
    db = CellDatabase.from_csv(args.cells) if args.cells else CellDatabase()
    gw = Gateway(policy, db, HttpUplink(args.server, args.token, args.patient), _clock(args))
    gw.register(SensorRegistration(args.sensor_id, sampling_hz=args.hz))
    src = sys.stdin.buffer if args.frames == "-" else open(args.frames, "rb")
    with src:
        while chunk := src.read(args.chunk):
            for ev in gw.feed(chunk):
                print(json.dumps(ev.to_dict(), sort_keys=True), flush=True)
    for ev in gw.flush_backlog():
        print(json.dumps(ev.to_dict(), sort_keys=True), flush=True)
    st = gw.stats
    _emit({"frames": st.frames, "frame_errors": st.frame_errors, "forwards": st.forwards,
           "suppressed": st.suppressed, "delivered": len(st.acked), "dropped": st.dropped,
           "still_buffered": len(gw.outbox)}, None)
    return 0 if not len(gw.outbox) else 3


def cmd_serve(args) -> int:
    import uvicorn

    from mhealth.server.config import ServerConfig
    from mhealth.server.http import create_app

    m = _settings(args, "server")
    for key, val in (("tokens", args.tokens), ("data_dir", args.data_dir), ("model", args.model),
                     ("listen", args.listen)):
        if val is not None:
            m[key] = val
    try:
        cfg = ServerConfig.from_mapping(m)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    server = cfg.build(None if args.fixed_clock is None else _clock(args))
    try:
        uvicorn.run(create_app(server), host=cfg.host, port=cfg.port, log_level="info")
    finally:
        server.close()
    return 0


# --- parser -------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    # Global flags are accepted before or after the subcommand.
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--fixed-clock", type=int, metavar="MS", default=argparse.SUPPRESS,
                   help="freeze wall-clock fields at MS for reproducible output")
    p.add_argument("--config", type=Path, default=argparse.SUPPRESS,
                   help="flat TOML settings file")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def _train_flags(p):
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--init-scale", type=float)
    p.add_argument("--target-loss", type=float)
    p.add_argument("--hidden", type=int)


def _scenario_flags(p):
    p.add_argument("--duration", type=float, help="seconds of simulated time")
    p.add_argument("--episode", action="append", metavar="START:END:KIND",
                   help="hypoxia, tachycardia or fever; repeatable")
    p.add_argument("--link-down", action="append", metavar="START:END")
    p.add_argument("--link-script", type=Path, help="CSV start_s,end_s,state")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="mhealth", parents=[common],
                                 description="Wearable vitals monitoring toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", parents=[common], help="write a labelled synthetic set")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--size", type=int, default=540)
    p.add_argument("--anomaly-fraction", type=float, default=0.3)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", parents=[common], help="train a classifier on a dataset")
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--n-inputs", type=int, choices=(3, 4), default=4)
    p.add_argument("--model-out", required=True, type=Path)
    p.add_argument("--out", help="also write the JSON report here")
    p.add_argument("--curve", action="store_true", help="include the per-epoch loss curve")
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("study", parents=[common], help="compare 3- and 4-input networks")
    p.add_argument("--trials", type=int, default=11)
    p.add_argument("--size", type=int, default=540)
    p.add_argument("--anomaly-fraction", type=float, default=0.3)
    p.add_argument("--out", help="JSON report path")
    _train_flags(p)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("simulate", parents=[common], help="run sensor, gateway and server")
    _scenario_flags(p)
    p.add_argument("--model", type=Path, help="model file; default trains a reference model")
    p.add_argument("--server", help="base URL of a running server (default: in-process)")
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sensor", parents=[common], help="write a scripted frame stream to a file")
    _scenario_flags(p)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_sensor)

    p = sub.add_parser("gateway", parents=[common], help="forward a frame stream to a server")
    p.add_argument("--frames", default="-", help="frame file, or - for stdin")
    p.add_argument("--server", required=True)
    p.add_argument("--token", required=True)
    p.add_argument("--patient", required=True)
    p.add_argument("--cells", type=Path, help="CSV mcc,mnc,lac,ci,lat,lon,accuracy_m")
    p.add_argument("--sensor-id", default="oximeter-1")
    p.add_argument("--hz", type=float, default=1.0)
    p.add_argument("--chunk", type=int, default=4096)
    p.set_defaults(func=cmd_gateway)

    p = sub.add_parser("serve", parents=[common], help="run the medical server")
    p.add_argument("--tokens", type=Path)
    p.add_argument("--data-dir", type=Path)
    p.add_argument("--model", type=Path)
    p.add_argument("--listen", help="host:port")
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    for name, default in (("seed", 0), ("fixed_clock", None), ("config", None), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.flat_config = load_flat(args.config) if args.config else None
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"mhealth {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
