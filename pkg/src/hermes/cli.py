"""hermes command line: budget, topo, sim, migrate, sweep.

Exit status: 0 success, 1 invalid input, 2 internal fault.
"""
import argparse
import json
import os
import sys
import tempfile

from . import __version__
from .config import apply_overrides, load_json, to_dict
from .errors import ConfigError, HermesError

USAGE_ERROR = 1
INTERNAL_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"arguments: {message}")


def _common(p):
    p.add_argument("--config", metavar="PATH", help="JSON config document")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    p.add_argument("--out", metavar="DIR", help="output directory (default: print to stdout)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable, dotted keys)")


def build_parser():
    parser = _Parser(prog="hermes", description="Hierarchical photonic network toolkit.")
    parser.add_argument("--version", action="version", version=f"hermes {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("budget", help="loss breakdown and laser power of an optical path")
    _common(p)
    p.add_argument("--path", required=True,
                   help="named path (linear-local-longest, broadcast-N-worst, linear-N-longest, "
                        "hierarchy-SRC-DST) or a segment list like 'waveguide:8,crossing:3'")
    p.add_argument("--process-variation", action="store_true", help="use the worst-case split corner")

    p = sub.add_parser("topo", help="build and export a topology")
    _common(p)
    p.add_argument("--kind", choices=("broadcast", "linear", "hierarchy"), default="broadcast")
    p.add_argument("--n", type=int, default=32, help="node count (total cores for a hierarchy)")
    p.add_argument("--domain-size", type=int, default=32)
    p.add_argument("--extra-levels", type=int, default=0)
    p.add_argument("--format", choices=("json", "dot"), default="json")

    p = sub.add_parser("sim", help="run the simulator and emit metrics")
    _common(p)

    p = sub.add_parser("migrate", help="place threads into domains from a communication matrix")
    _common(p)
    p.add_argument("--matrix", required=True, metavar="CSV")
    p.add_argument("--domains", type=int, required=True)
    p.add_argument("--minimize-intra", action="store_true",
                   help="exact solver minimizes co-located cost instead of maximizing it")

    p = sub.add_parser("sweep", help="emit scaling curves as CSV")
    _common(p)
    p.add_argument("--metric", default="all", help="power, bandwidth, latency, a comma list, or all")
    p.add_argument("--classes", default="all", help="comma list of classes (class/network allowed) or all")
    p.add_argument("--n", default="16,32,64,...,1024", help="N values; '...' continues the progression")
    return parser


def _doc(args):
    doc = load_json(args.config) if args.config else {}
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")
    return apply_overrides(doc, args.overrides)


def _write(out_dir, name, text):
    """Atomic write into ``out_dir``; returns the final path."""
    os.makedirs(out_dir, exist_ok=True)
    final = os.path.join(out_dir, name)
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, final)
    return final


def _emit(args, outputs):
    """``outputs``: list of (filename, text). Printed when no --out is given."""
    if args.out:
        for name, text in outputs:
            print(_write(args.out, name, text))
    else:
        for _, text in outputs:
            sys.stdout.write(text)


def _json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _csv_header(config):
    return f"# hermes {__version__}\n# config={json.dumps(config, sort_keys=True)}\n"


def cmd_budget(args):
    from .optics import DeviceCatalog, link_budget, required_laser_power
    doc = _doc(args)
    catalog = DeviceCatalog.from_dict(doc)
    path, description = named_path(args.path, catalog)
    breakdown = link_budget(path, catalog, process_variation=args.process_variation)
    result = {
        "version": __version__,
        "config": {"catalog": to_dict(catalog), "path": args.path,
                   "process_variation": args.process_variation, "seed": args.seed},
        "path": description,
        "breakdown": breakdown.as_dict(),
        "laser_power_mw": required_laser_power(breakdown.worst_span_db, catalog.rx_sensitivity),
        "regenerations": path.regenerations(),
    }
    _emit(args, [("budget.json", _json(result))])
    for w in breakdown.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def named_path(name, catalog):
    """Resolve a named or described path to (OpticalPath, description)."""
    from . import topology
    from .optics import OFF_RESONANCE, WAVEGUIDE, OpticalPath, Segment, link_budget
    parts = name.split("-")
    if name == "linear-local-longest":
        # design limit of a local serpentine span: 8 cm of waveguide at the off-resonance cap
        path = OpticalPath((Segment(WAVEGUIDE, 8.0), Segment(OFF_RESONANCE, catalog.off_resonance_cap)))
        return path, "8 cm local serpentine span at the off-resonance cap"
    if len(parts) == 3 and parts[0] == "broadcast" and parts[2] == "worst":
        topo = topology.build_broadcast(_int(parts[1], "path"))
        pairs = [(s, d) for s in range(topo.n_nodes) for d in range(topo.n_nodes)]
        s, d = max(pairs, key=lambda p: link_budget(topo.path(*p, catalog), catalog).worst_span_db)
        return topo.path(s, d, catalog), f"{topo.n_nodes}-node broadcast, worst route {s}->{d}"
    if len(parts) == 3 and parts[0] == "linear" and parts[2] == "longest":
        topo = topology.build_linear(_int(parts[1], "path"))
        routes = [r for s in range(topo.n_nodes) for d in range(topo.n_nodes) if s != d
                  for r in topo.routes(s, d)]
        r = max(routes, key=lambda r: link_budget(topo.path_for_route(r, catalog), catalog).worst_span_db)
        return topo.path_for_route(r, catalog), f"{topo.n_nodes}-node serpentine, route {r.src}->{r.dst}"
    if len(parts) == 3 and parts[0] == "hierarchy":
        h = topology.build_hierarchy(1024, 32)
        s, d = _int(parts[1], "path"), _int(parts[2], "path")
        return h.path(s, d, "linear", catalog), f"1024-core hierarchy, linear path {s}->{d}"
    if ":" in name or name in ("waveguide", "crossing", "regeneration"):
        return OpticalPath.parse(name), "described path"
    raise ConfigError(f"path: unknown named path {name!r}")


def _int(text, key):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def cmd_topo(args):
    from . import topology
    doc = _doc(args)
    extra = set(doc) - {"chip_side"}
    if extra:
        raise ConfigError([f"{k}: unknown key" for k in sorted(extra)])
    side = doc.get("chip_side", topology.DEFAULT_CHIP_SIDE)
    if args.kind == "broadcast":
        topo = topology.build_broadcast(args.n, args.extra_levels, side)
    elif args.kind == "linear":
        topo = topology.build_linear(args.n, side)
    else:
        topo = topology.build_hierarchy(args.n, args.domain_size, side)
    config = {"kind": args.kind, "n": args.n, "domain_size": args.domain_size,
              "extra_levels": args.extra_levels, "chip_side": side, "seed": args.seed}
    if args.format == "dot":
        text = f"// hermes {__version__} config={json.dumps(config, sort_keys=True)}\n" + topology.to_dot(topo)
        _emit(args, [("topology.dot", text)])
    else:
        _emit(args, [("topology.json", _json({"version": __version__, "config": config,
                                               "topology": topo.to_dict()}))])
    return 0


def cmd_sim(args):
    from .sim import SimConfig, Simulator
    doc = _doc(args)
    if args.seed is not None:
        doc["seed"] = args.seed
    config = SimConfig.from_dict(doc)
    sim = Simulator(config)
    metrics = sim.run()
    outputs = [("metrics.json", metrics.to_json())]
    if config.trace:
        outputs.append(("trace.csv", _csv_header(config.to_dict()) + sim.trace_csv()))
    _emit(args, outputs)
    return 0


def cmd_migrate(args):
    from . import migration
    doc = _doc(args)
    if doc:
        raise ConfigError([f"{k}: unknown key" for k in sorted(doc)])
    try:
        with open(args.matrix) as fh:
            comm = migration.read_matrix_csv(fh.read())
    except FileNotFoundError:
        raise ConfigError(f"matrix: file not found: {args.matrix}") from None
    n = comm.shape[0]
    config = {"matrix": os.path.basename(args.matrix), "domains": args.domains, "threads": n,
              "minimize_intra": args.minimize_intra, "seed": args.seed}
    if args.domains < 1 or n % args.domains:
        raise ConfigError(f"domains: {args.domains} must divide the thread count {n}")
    greedy = migration.greedy_migration(comm, args.domains).validate()
    result = {"version": __version__, "config": config, "total_cost": int(comm.sum() // 2)}
    intra, cut = migration.objective(greedy, comm)
    result["greedy"] = {"assignment": list(greedy.assignment), "intra_cost": intra, "cut_cost": cut}
    outputs = [("greedy_assignment.csv", _csv_header(config) + migration.write_assignment_csv(greedy))]
    if n <= migration.EXACT_LIMIT:
        exact = migration.solve_exact(comm, args.domains, minimize_intra=args.minimize_intra)
        intra, cut = migration.objective(exact, comm)
        result["exact"] = {"assignment": list(exact.assignment), "intra_cost": intra, "cut_cost": cut}
        outputs.append(("exact_assignment.csv", _csv_header(config) + migration.write_assignment_csv(exact)))
    outputs.insert(0, ("migration.json", _json(result)))
    if not args.out:
        outputs = outputs[:1]
    _emit(args, outputs)
    return 0


def cmd_sweep(args):
    from . import scalemodel
    doc = _doc(args)
    params = scalemodel.ScaleParams.from_dict(doc)
    metrics = list(scalemodel.METRICS) if args.metric == "all" else _split(args.metric)
    classes = list(scalemodel.CLASSES) if args.classes == "all" else _split(args.classes)
    n_list = scalemodel.parse_n_list(args.n)
    result = scalemodel.sweep(metrics, classes, n_list, params)
    meta = result.metadata()
    meta["config"] = {"metrics": metrics, "classes": classes, "n": n_list, "seed": args.seed,
                      "params": to_dict(params)}
    for note in result.notes:
        print(f"note: {note}", file=sys.stderr)
    outputs = [("sweep.csv", _csv_header(meta["config"]) + result.csv()), ("sweep_meta.json", _json(meta))]
    # stdout carries the plot-ready CSV alone
    _emit(args, outputs if args.out else outputs[:1])
    return 0


def _split(text):
    return [t.strip() for t in text.split(",") if t.strip()]


COMMANDS = {"budget": cmd_budget, "topo": cmd_topo, "sim": cmd_sim, "migrate": cmd_migrate,
            "sweep": cmd_sweep}


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return USAGE_ERROR
        if args.seed is not None and not 0 <= args.seed < 1 << 64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        return COMMANDS[args.command](args)
    except HermesError as exc:
        messages = exc.messages if isinstance(exc, ConfigError) else [str(exc)]
        for m in messages:
            print(f"error: {m}", file=sys.stderr)
        return USAGE_ERROR
    except Exception as exc:  # noqa: BLE001 - any other failure is a fault in the tool
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return INTERNAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
