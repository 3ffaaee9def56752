"""Command line entry point.

Every compute subcommand is a thin client of the HTTP service; without
--server the requests run in-process, so no daemon is needed. Exit codes:
0 success, 1 failed run (bad files, rejected requests, I/O), 2 usage.

The SPNPB_SEED environment variable supplies a default seed when --seed
is absent.
"""

from __future__ import annotations

import argparse
import os
import pathlib
import sys

from .client import ServiceClient, ServiceError
from .experiments import RunSettings, TESTED_REGIMES, VARIANTS
from .fileio import FormatError, parse_config_text
from .model import ModelError
from .scenarios import SCENARIO_BUILDERS, scenario_from_text, scenario_to_text, \
    scene_to_text
from .world import WorldError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _resolve_seed(args) -> int | None:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("SPNPB_SEED")
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"SPNPB_SEED must be an integer, got {env!r}")


def _settings_overrides(args) -> dict[str, str]:
    overrides: dict[str, str] = {}
    if getattr(args, "config", None):
        path = pathlib.Path(args.config)
        overrides.update(parse_config_text(path.read_text(), str(path)))
    seed = _resolve_seed(args)
    if seed is not None:
        overrides["seed"] = str(seed)
    return overrides


def _scenario_texts(args, overrides: dict[str, str]) -> tuple[str, str]:
    """A --scenario value is a built-in schedule name or a scenario file
    path; the file's scene reference resolves relative to the file."""
    name = args.scenario
    if name in SCENARIO_BUILDERS:
        base = RunSettings.paper() if args.paper_scale else RunSettings()
        settings = RunSettings.from_config(overrides, base)
        spec = SCENARIO_BUILDERS[name](n_v=settings.n_v, count=settings.count)
        return scenario_to_text(spec), scene_to_text(spec.scene)
    path = pathlib.Path(name)
    scenario_text = path.read_text()
    spec = scenario_from_text(scenario_text, str(path))
    scene_path = path.parent / spec.scene_ref
    return scenario_text, scene_path.read_text()


def _client(args) -> ServiceClient:
    return ServiceClient(server=getattr(args, "server", None))


def _write(path_text: str, content: str) -> pathlib.Path:
    path = pathlib.Path(path_text)
    if path.parent != pathlib.Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content)
    return path


# ------------------------------------------------------------- subcommands

def cmd_collect(args) -> int:
    overrides = _settings_overrides(args)
    scenario_text, scene_text = _scenario_texts(args, overrides)
    out_dir = pathlib.Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with _client(args) as client:
        datasets = client.collect(scenario_text, scene_text,
                                  labels=args.regime or None,
                                  settings=overrides,
                                  paper_scale=args.paper_scale)
    for label, text in datasets.items():
        path = out_dir / f"{label}.dat"
        path.write_text(text)
        records = text.count("\n") - text.count("=") - 2
        print(f"wrote {path} ({records} records)")
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = _settings_overrides(args)
    datasets = [pathlib.Path(p).read_text() for p in args.datasets]
    with _client(args) as client:
        result = client.train(datasets, variant=args.variant,
                              seed=_resolve_seed(args), settings=overrides,
                              paper_scale=args.paper_scale)
    path = _write(args.out, result["checkpoint"])
    losses = result["epoch_losses"]
    print(f"trained {args.variant} for {len(losses)} epochs in "
          f"{result['wall_clock_s']:.1f}s; final loss {losses[-1]:.6g}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_update_pb(args) -> int:
    overrides = _settings_overrides(args)
    checkpoint = pathlib.Path(args.model).read_text()
    dataset = pathlib.Path(args.dataset).read_text()
    with _client(args) as client:
        result = client.update_pb(checkpoint, dataset, settings=overrides,
                                  paper_scale=args.paper_scale)
    print("final bias: " + " ".join(f"{x:.6g}" for x in result["p"]))
    if args.out:
        print(f"wrote {_write(args.out, result['trajectory'])}")
    return EXIT_OK


def cmd_control(args) -> int:
    overrides = _settings_overrides(args)
    scenario_text, scene_text = _scenario_texts(args, overrides)
    checkpoint = pathlib.Path(args.model).read_text()
    with _client(args) as client:
        result = client.control(checkpoint, scene_text,
                                object_name=args.object,
                                template=args.template,
                                scenario_text=scenario_text,
                                regime=args.regime,
                                seed=_resolve_seed(args),
                                settings=overrides,
                                paper_scale=args.paper_scale)
    print(f"query: {result['label']}")
    print("command (rad): " + " ".join(f"{x:.6f}" for x in result["u"]))
    print(f"loss: {result['loss']:.6g} (best initial {result['initial_loss']:.6g})")
    return EXIT_OK


def cmd_eval(args) -> int:
    overrides = _settings_overrides(args)
    scenario_text, scene_text = _scenario_texts(args, overrides)
    checkpoint = pathlib.Path(args.model).read_text()
    with _client(args) as client:
        result = client.eval(checkpoint, scenario_text, scene_text,
                             regime=args.regime,
                             variant_name=args.variant or "",
                             seed=_resolve_seed(args), settings=overrides,
                             paper_scale=args.paper_scale)
    print(f"regime {args.regime}: mean distance {result['mean']:.4f} m, "
          f"variance {result['variance']:.6g}")
    if args.out:
        print(f"wrote {_write(args.out, result['report'])}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    overrides = _settings_overrides(args)
    scenario_text, scene_text = _scenario_texts(args, overrides)
    with _client(args) as client:
        result = client.ablate(scenario_text, scene_text,
                               seed=_resolve_seed(args),
                               regimes=args.regime or None,
                               variants=args.variant or None,
                               settings=overrides,
                               paper_scale=args.paper_scale)
    for line in result["table"].strip().split("\n")[1:-1]:
        print(line)
    if args.out:
        print(f"wrote {_write(args.out, result['table'])}")
    return EXIT_OK


def cmd_pca(args) -> int:
    checkpoint = pathlib.Path(args.model).read_text()
    with _client(args) as client:
        result = client.pca(checkpoint)
    fractions = result["explained"]
    print("explained variance: " +
          " ".join(f"{f:.4f}" for f in fractions))
    for line in result["table"].strip().split("\n")[2:-1]:
        print(line)
    if args.out:
        print(f"wrote {_write(args.out, result['table'])}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spnpb",
        description="Stochastic predictive-network view control: data "
                    "collection, training, online bias update, and "
                    "evaluation on a simulated arm.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--seed", type=int, help="base random seed "
                        "(default: SPNPB_SEED or 0)")
    common.add_argument("--paper-scale", action="store_true",
                        help="full-scale profile instead of desk defaults")
    common.add_argument("--server", help="base URL of a running service "
                        "(default: run in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", parents=[common],
                       help="simulate a scenario's regimes into dataset files")
    p.add_argument("--scenario", required=True,
                   help="built-in name (basic, advanced) or scenario file")
    p.add_argument("--regime", action="append",
                   help="collect only this regime (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", parents=[common],
                       help="train a model variant on dataset files")
    p.add_argument("datasets", nargs="+", help="dataset files")
    p.add_argument("--variant", choices=sorted(VARIANTS), default="PB+ST")
    p.add_argument("--out", required=True, help="checkpoint file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("update-pb", parents=[common],
                       help="stream a dataset through the online bias updater")
    p.add_argument("dataset", help="dataset file to stream")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--out", help="bias trajectory file to write")
    p.set_defaults(func=cmd_update_pb)

    p = sub.add_parser("control", parents=[common],
                       help="invert the model for one language query")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--scenario", required=True,
                   help="built-in name or scenario file (supplies the scene)")
    p.add_argument("--object", required=True, help="target object name")
    p.add_argument("--template", type=int, default=0,
                   help="phrasing template index")
    p.add_argument("--regime", help="regime label for bias and body lookup")
    p.set_defaults(func=cmd_control)

    p = sub.add_parser("eval", parents=[common],
                       help="score a model's view control on one regime")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--regime", required=True, help="regime label to score")
    p.add_argument("--variant", help="variant label for the report")
    p.add_argument("--out", help="evaluation report file to write")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common],
                       help="train and score every variant on tested regimes")
    p.add_argument("--scenario", required=True)
    p.add_argument("--regime", action="append",
                   help=f"tested regime (repeatable; default "
                        f"{' '.join(TESTED_REGIMES)})")
    p.add_argument("--variant", action="append", choices=sorted(VARIANTS),
                   help="variant subset (repeatable; default all)")
    p.add_argument("--out", help="ablation table file to write")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("pca", parents=[common],
                       help="project a checkpoint's biases onto two axes")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--out", help="projection table file to write")
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ServiceError, FormatError, ModelError, WorldError, OSError,
            ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
