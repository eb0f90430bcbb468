"""Command-line entry point: mutate, compile, run, serve.

Exit codes are a stable contract: 0 attack confirmed (or command success),
1 attack rejected, 2 bad mutation point, 3 compile failure, 4 inconclusive
or infrastructure failure.

Relative input paths are resolved against the working directory, then
``$TRACEPLAY_CONFIG_DIR``, then the bundled data directory.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import socket
import sys
from dataclasses import replace
from pathlib import Path

from .agents import (
    connect_channel,
    listen_channel,
    run_role,
    run_tls_server,
)
from .compiler import CompileError, compile_trace, parse_scenario, parse_trace, render_scenario
from .data import data_path
from .engine import DataStore, execute
from .model import (
    ModelError,
    MutationError,
    ProtocolModel,
    apply_mutation,
    find_point,
    list_mutation_points,
    parse_model,
    render_model,
)
from .simulator import (
    AgentHandle,
    ConfigError,
    EnvironmentConfig,
    SimulatorError,
    load_config,
    open_channels,
    spawn_agent,
    validate,
)
from .suites import make_suite
from .terms import render_term

EXIT_CONFIRMED = 0
EXIT_REJECTED = 1
EXIT_BAD_POINT = 2
EXIT_COMPILE = 3
EXIT_INCONCLUSIVE = 4


def resolve_path(path: str) -> Path:
    candidate = Path(path)
    if candidate.exists():
        return candidate
    env_dir = os.environ.get("TRACEPLAY_CONFIG_DIR")
    if env_dir:
        alt = Path(env_dir) / path
        if alt.exists():
            return alt
    try:
        return data_path(path)
    except FileNotFoundError:
        pass
    raise FileNotFoundError(f"cannot find {path!r}")


def _load_model(path: str) -> ProtocolModel:
    return parse_model(resolve_path(path).read_text())


# ---------------------------------------------------------------------------
# mutate
# ---------------------------------------------------------------------------


def cmd_mutate(args) -> int:
    model = _load_model(args.model)
    points = list_mutation_points(model)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.point:
        try:
            selected = [find_point(model, args.point)]
        except MutationError:
            print(f"error: no mutation point {args.point!r}", file=sys.stderr)
            print("valid points:", file=sys.stderr)
            for p in points:
                print(f"  {p.point_id} ({p.kind})", file=sys.stderr)
            return EXIT_BAD_POINT
    else:
        selected = points
    for point in selected:
        mutant = apply_mutation(model, point)
        name = f"{model.name}-mutant-{point.point_id}.model"
        path = out_dir / name
        path.write_text(render_model(mutant))
        print(f"{point.point_id} ({point.kind}) -> {path}")
    return EXIT_CONFIRMED


# ---------------------------------------------------------------------------
# compile
# ---------------------------------------------------------------------------


def cmd_compile(args) -> int:
    model = _load_model(args.model)
    try:
        trace = parse_trace(
            resolve_path(args.trace).read_text(), model.sorts, intruder=args.intruder
        )
        scenario = compile_trace(trace, model)
    except CompileError as exc:
        print(f"compile error: {exc}", file=sys.stderr)
        if exc.missing:
            print(
                "missing atoms: " + ", ".join(render_term(t) for t in exc.missing),
                file=sys.stderr,
            )
        return EXIT_COMPILE
    text = render_scenario(scenario)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_CONFIRMED


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _scenario_sorts(cfg: EnvironmentConfig, model_arg: str | None):
    if model_arg:
        return _load_model(model_arg).sorts
    for spec in cfg.agents.values():
        if spec.kind == "honest" and spec.model:
            try:
                return _load_model(spec.model).sorts
            except (FileNotFoundError, ModelError):
                continue
    return None


def _execute_run(cfg: EnvironmentConfig, scenario, suite_kind: str, seed: int):
    """Spawn agents, open channels, run the scenario, judge the log.

    Returns (verdict, engine report, simulator handle with its final log).
    """
    limits = {
        "step-timeout": cfg.limit("step-timeout", 5.0),
        "renegotiation-window": cfg.limit("renegotiation-window", 1.0),
    }
    finish_grace = cfg.limit("finish-grace", 1.0)
    connect_timeout = cfg.limit("connect-timeout", 5.0)
    handles: list[AgentHandle] = []
    handle = None
    try:
        for spec in cfg.agents.values():
            if spec.kind == "honest" and spec.listen:
                agent = spawn_agent(
                    spec,
                    suite=suite_kind,
                    seed=seed,
                    limits=limits,
                    model_path=resolve_path(spec.model) if spec.model else None,
                )
                handles.append(agent)
                agent.wait_ready()
        handle = open_channels(cfg, connect_timeout=connect_timeout)
        for spec in cfg.agents.values():
            if spec.kind == "honest" and spec.connect:
                agent = spawn_agent(
                    spec,
                    suite=suite_kind,
                    seed=seed,
                    limits=limits,
                    model_path=resolve_path(spec.model) if spec.model else None,
                )
                handles.append(agent)
        handle.await_connections()
        suite = make_suite(suite_kind, seed, cfg.intruder)
        report = execute(
            scenario,
            DataStore(),
            suite,
            handle,
            step_timeout=limits["step-timeout"],
            finish_grace=finish_grace,
        )
        if report.status != "finished":
            handle.drain(min(finish_grace, 0.3))
        verdict = validate(handle.log, cfg)
        return verdict, report, handle, handles
    finally:
        for agent in handles:
            agent.stop()
        if handle is not None:
            handle.close()


def cmd_run(args) -> int:
    try:
        cfg = load_config(resolve_path(args.config))
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    if args.campaign:
        return _cmd_campaign(args, cfg)
    if not args.scenario:
        print("error: a scenario file is required (or use --campaign)", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    sorts = _scenario_sorts(cfg, args.model)
    scenario = parse_scenario(resolve_path(args.scenario).read_text(), sorts)
    try:
        verdict, report, handle, agent_handles = _execute_run(
            cfg, scenario, args.suite, args.seed
        )
    except (SimulatorError, ConfigError, FileNotFoundError) as exc:
        print(f"infrastructure failure: {exc}", file=sys.stderr)
        print("verdict: inconclusive")
        return EXIT_INCONCLUSIVE
    if args.log_out:
        Path(args.log_out).write_text(handle.log.export())
        print(f"traffic log: {args.log_out}")
    print(f"engine: {report.status}" + (f" ({report.reason})" if report.reason else ""))
    for agent in agent_handles:
        status = agent.status()
        if status:
            summary = " ".join(f"{k}={v}" for k, v in sorted(status.items()))
            print(f"agent {agent.spec.name}: {summary}")
    print(f"verdict: {verdict}")
    if verdict.kind == "confirmed":
        return EXIT_CONFIRMED
    if verdict.kind == "rejected":
        return EXIT_REJECTED
    return EXIT_INCONCLUSIVE


# ---------------------------------------------------------------------------
# campaign mode
# ---------------------------------------------------------------------------


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _rebind_ports(cfg: EnvironmentConfig, mutant_path: Path) -> EnvironmentConfig:
    """Fresh ports for one campaign run; honest agents get the mutant model."""
    addr_map: dict[str, str] = {}
    channels = []
    for ch in cfg.channels:
        old = f"{ch.host}:{ch.port}"
        port = _free_port()
        addr_map[old] = f"{ch.host}:{port}"
        channels.append(replace(ch, port=port))
    agents = {}
    for name, spec in cfg.agents.items():
        updated = spec
        if spec.listen in addr_map:
            updated = replace(updated, listen=addr_map[spec.listen])
        if spec.connect in addr_map:
            updated = replace(updated, connect=addr_map[spec.connect])
        if updated.kind == "honest":
            updated = replace(updated, model=str(mutant_path))
        agents[name] = updated
    return EnvironmentConfig(agents, channels, list(cfg.errors), dict(cfg.limits))


def _cmd_campaign(args, cfg: EnvironmentConfig) -> int:
    if not args.model or not args.traces:
        print("error: --campaign needs --model and --traces", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    model = _load_model(args.model)
    out_dir = Path(args.out or "campaign-out")
    (out_dir / "mutants").mkdir(parents=True, exist_ok=True)
    (out_dir / "logs").mkdir(parents=True, exist_ok=True)

    points = list_mutation_points(model)
    traces = {}
    for trace_path in args.traces:
        text = resolve_path(trace_path).read_text()
        traces[Path(trace_path).stem] = parse_trace(text, model.sorts, intruder=args.intruder)

    jobs: list[tuple] = []
    for point in points:
        mutant = apply_mutation(model, point)
        mutant_path = out_dir / "mutants" / f"{model.name}-mutant-{point.point_id}.model"
        mutant_path.write_text(render_model(mutant))
        for trace_name, trace in traces.items():
            jobs.append((point, mutant, mutant_path, trace_name, trace))

    def one(job):
        point, mutant, mutant_path, trace_name, trace = job
        log_path = out_dir / "logs" / f"{point.point_id}__{trace_name}.log"
        try:
            scenario = compile_trace(trace, mutant)
        except CompileError as exc:
            return (point.point_id, trace_name, "compile-error", str(exc), None)
        run_cfg = _rebind_ports(cfg, mutant_path)
        try:
            verdict, report, handle, _ = _execute_run(run_cfg, scenario, args.suite, args.seed)
        except (SimulatorError, ConfigError) as exc:
            return (point.point_id, trace_name, "inconclusive", str(exc), None)
        log_path.write_text(handle.log.export())
        return (point.point_id, trace_name, verdict.kind, str(verdict), log_path)

    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(job) for job in jobs]

    counts: dict[str, int] = {}
    lines = []
    for point_id, trace_name, kind, detail, log_path in results:
        counts[kind] = counts.get(kind, 0) + 1
        lines.append(f"{point_id}|{trace_name}|{kind}|{log_path or '-'}")
    summary = "\n".join(lines) + "\n# " + " ".join(
        f"{k}={v}" for k, v in sorted(counts.items())
    )
    (out_dir / "summary.txt").write_text(summary + "\n")
    print(summary)
    return EXIT_CONFIRMED


# ---------------------------------------------------------------------------
# honest agents (serve / agent)
# ---------------------------------------------------------------------------


def _emit(event: str) -> None:
    print(f"EVENT {event}", flush=True)


def cmd_agent(args) -> int:
    model = _load_model(args.model)
    suite = make_suite(args.suite, args.seed, args.party)
    if args.listen:
        host, _, port = args.listen.rpartition(":")
        channel = listen_channel(
            host,
            int(port),
            timeout=args.accept_timeout,
            on_bound=lambda addr: _emit(f"ready listening={addr[0]}:{addr[1]} transition=1"),
        )
    else:
        host, _, port = args.connect.rpartition(":")
        channel = connect_channel(host, int(port), timeout=args.accept_timeout)
        _emit(f"ready connected={host}:{port} transition=1")
    try:
        if args.tls_server:
            result = run_tls_server(
                model,
                channel,
                suite,
                allow_renegotiation=args.allow_renegotiation,
                role_name=args.role,
                step_timeout=args.step_timeout,
                renegotiation_window=args.renegotiation_window,
                on_event=_emit,
            )
        else:
            result = run_role(
                model,
                args.role,
                channel,
                suite,
                step_timeout=args.step_timeout,
                inject_start=args.inject_start,
                on_event=_emit,
            )
    finally:
        channel.close()
    if result.finished_value is not None:
        _emit(f"finished hex={result.finished_value.hex()}")
    _emit(f"status terminal={result.status} progress={result.progress}")
    return EXIT_CONFIRMED if result.status == "completed" else EXIT_REJECTED


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="traceplay",
        description="Compile abstract attack traces and play them against protocol implementations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mutate", help="generate mutants of a protocol model")
    p.add_argument("model")
    p.add_argument("--point", help="mutation point id ROLE.N.VAR (default: all)")
    p.add_argument("--all", action="store_true", help="write every mutant")
    p.add_argument("--out", default="mutants", help="output directory")
    p.set_defaults(func=cmd_mutate)

    p = sub.add_parser("compile", help="compile an attack trace into a scenario")
    p.add_argument("trace")
    p.add_argument("model")
    p.add_argument("--out", help="scenario output path (default: stdout)")
    p.add_argument("--intruder", default="i")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="execute a scenario against live agents")
    p.add_argument("config")
    p.add_argument("scenario", nargs="?")
    p.add_argument("--suite", choices=("transparent", "real"), default="transparent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", help="model supplying the scenario's sort table")
    p.add_argument("--log-out", help="write the traffic log export here")
    p.add_argument("--campaign", action="store_true", help="iterate mutants x traces")
    p.add_argument("--traces", nargs="*", help="trace files (campaign mode)")
    p.add_argument("--out", help="campaign output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--intruder", default="i")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="run a standalone honest target")
    p.add_argument("model")
    p.add_argument("--role", required=True)
    p.add_argument("--listen", required=True, metavar="HOST:PORT")
    _common_agent_flags(p)
    p.set_defaults(func=cmd_agent, connect=None, inject_start=False)

    p = sub.add_parser("agent", help="internal: honest agent process")
    p.add_argument("--model", required=True)
    p.add_argument("--role", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--listen", metavar="HOST:PORT")
    group.add_argument("--connect", metavar="HOST:PORT")
    p.add_argument("--inject-start", action="store_true")
    _common_agent_flags(p)
    p.set_defaults(func=cmd_agent)

    return parser


def _common_agent_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--party", default=None, help="suite party label (default: role name)")
    p.add_argument("--suite", choices=("transparent", "real"), default="transparent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step-timeout", type=float, default=5.0)
    p.add_argument("--accept-timeout", type=float, default=30.0)
    p.add_argument("--tls-server", action="store_true")
    p.add_argument("--allow-renegotiation", action="store_true")
    p.add_argument("--renegotiation-window", type=float, default=1.0)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "party", None) is None and hasattr(args, "role"):
        args.party = args.role
    try:
        return args.func(args)
    except (ModelError, MutationError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE


if __name__ == "__main__":
    sys.exit(main())
