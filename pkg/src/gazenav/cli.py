"""Command-line entry point.

Subcommands: synth (dataset generation), train, cv, run (single scenario),
bench (scenario pack), replay (re-derive metrics from a log), serve (live
session for the browser UI).  All randomness flows from explicit --seed
flags; identical flags produce byte-identical artifacts.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import artifacts, classify, gaze, packs, sim, world


class CliError(Exception):
    """User-facing error with a machine-readable payload."""

    def __init__(self, message: str, kind: str = "error"):
        super().__init__(message)
        self.kind = kind


def _fail(msg: str, kind: str = "error") -> "CliError":
    return CliError(msg, kind)


def _flags(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items())
            if k != "func" and v is not None}


# --- subcommand implementations ----------------------------------------------

def cmd_synth(args) -> int:
    objects = [o for o in args.objects.split(",") if o]
    params = None
    if args.params:
        params = _load_gen_params(args.params)
    records = gaze.synthesize_dataset(objects, seed=args.seed, params=params,
                                      trials=args.trials)
    n = artifacts.write_jsonl(args.out, "gaze-dataset",
                              (json.loads(r.to_json()) for r in records),
                              flags=_flags(args))
    print(f"wrote {n} gaze records for {len(objects)} objects to {args.out}")
    return 0


def _load_gen_params(path) -> dict[str, gaze.GazeGenParams]:
    doc = json.loads(Path(path).read_text())
    out = {}
    for label, p in doc.items():
        out[label] = gaze.GazeGenParams(
            functional_center=tuple(p.get("functional_center", (0.5, 0.5))),
            sigma_interactive=p.get("sigma_interactive", 0.08),
            spread_noninteractive=p.get("spread_noninteractive", 0.30),
            jitter_px=p.get("jitter_px", 2.0),
            samples_per_trial=p.get("samples_per_trial", 280))
    return out


def _load_dataset(path) -> dict[str, list[classify.LabeledPoint]]:
    _, records = artifacts.read_jsonl(path, expect_kind="gaze-dataset")
    by_object: dict[str, list[classify.LabeledPoint]] = {}
    for r in records:
        by_object.setdefault(r["object"], []).append(
            classify.LabeledPoint(r["u"], r["v"], gaze.TaskClass(r["label"])))
    if not by_object:
        raise _fail("dataset contains no records", "empty-dataset")
    return by_object


def cmd_train(args) -> int:
    by_object = _load_dataset(args.dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for label in sorted(by_object):
        data = by_object[label]
        if args.kind == "knn":
            model = classify.train_knn(data, k=args.k)
        else:
            model = classify.train_svm(data, C=args.C, kernel_scale=args.kernel_scale,
                                       tol=args.tol)
        path = out_dir / f"{label}.json"
        classify.save_model(model, path,
                            provenance={"object": label, "flags": _flags(args)})
        print(f"trained {args.kind} for {label!r}: {len(data)} points -> {path}")
    return 0


def cmd_cv(args) -> int:
    by_object = _load_dataset(args.dataset)
    params = {}
    if args.kind == "knn":
        params = {"k": args.k}
    else:
        params = {"C": args.C, "kernel_scale": args.kernel_scale, "tol": args.tol}
    reports = {}
    for label in sorted(by_object):
        rep = classify.cross_validate(by_object[label], args.kind, params,
                                      folds=args.folds, seed=args.seed)
        reports[label] = rep.to_dict()
        print(f"{label}: mean accuracy {rep.mean_accuracy:.4f} over {args.folds} folds")
    if args.out:
        artifacts.write_json(args.out, "cv-report", {"reports": reports},
                             flags=_flags(args))
    return 0


def load_models(models_dir) -> dict[str, classify.KnnModel | classify.SvmModel]:
    d = Path(models_dir)
    if not d.is_dir():
        raise _fail(f"model directory {models_dir} not found", "missing-file")
    models = {}
    for path in sorted(d.glob("*.json")):
        models[path.stem] = classify.load_model(path)
    if not models:
        raise _fail(f"no model files in {models_dir}", "missing-file")
    return models


def _load_scenario_arg(spec_arg: str) -> world.Scenario:
    p = Path(spec_arg)
    if p.exists():
        return world.load_scenario(p)
    if spec_arg in packs.FAMILIES:
        return packs.build_scenario(spec_arg, 0)
    raise _fail(f"scenario {spec_arg!r} is neither a file nor one of "
                f"{list(packs.FAMILIES)}", "missing-file")


def cmd_run(args) -> int:
    scenario = _load_scenario_arg(args.scenario)
    if args.script:
        script = sim.script_from_dict(json.loads(Path(args.script).read_text()))
    else:
        target = scenario.objects[0].label
        script = packs.interactive_script(target)
    models = load_models(args.models)
    metrics, events = sim.run_scenario(scenario, script, models, seed=args.seed)
    if args.log:
        artifacts.write_jsonl(args.log, "event-log", events, flags=_flags(args))
    payload = {"metrics": metrics.to_dict()}
    if args.out:
        artifacts.write_json(args.out, "run-metrics", payload, flags=_flags(args))
    print(artifacts.dumps(payload["metrics"]))
    return 0


def cmd_bench(args) -> int:
    if args.pack != "standard":
        raise _fail(f"unknown pack {args.pack!r}", "bad-flag")
    models = load_models(args.models)
    seeds = range(args.seeds)
    cases = packs.standard_cases(seeds)
    if not args.skip_negative:
        cases = cases + packs.negative_cases(seeds)
    report, per_run = sim.run_batch(cases, models)
    doc = {"report": report.to_dict(),
           "runs": [{"family": fam, **m.to_dict()} for fam, m in per_run]}
    artifacts.write_json(args.out, "aggregate-report", doc, flags=_flags(args))
    for fam, stats in report.families.items():
        print(f"{fam}: runs={stats['runs']} "
              f"collision_free={stats['collision_free_rate']:.2f} "
              f"reached={stats['reached_rate']:.2f}")
    print(f"wrote report to {args.out}")
    return 0


def cmd_replay(args) -> int:
    _, events = artifacts.read_jsonl(args.log, expect_kind="event-log")
    derived = sim.replay_metrics(events)
    stored = next((e for e in events if e.get("type") == "metrics"), None)
    if stored is None:
        raise _fail("log has no metrics record", "bad-log")
    stored = {k: v for k, v in stored.items() if k != "type"}
    same = stored == derived.to_dict()
    print(artifacts.dumps({"derived": derived.to_dict(), "consistent": same}))
    if args.out:
        artifacts.write_json(args.out, "run-metrics",
                             {"metrics": derived.to_dict()}, flags=_flags(args))
    return 0 if same else 1


def cmd_serve(args) -> int:
    from . import server  # deferred: pulls in fastapi/uvicorn
    scenario = _load_scenario_arg(args.scenario)
    models = load_models(args.models)
    return server.serve(scenario, models, host=args.host, port=args.port,
                        static_dir=args.static)


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gazenav",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic gaze dataset")
    p.add_argument("--objects", default="tv,laptop,chair")
    p.add_argument("--params", help="JSON file overriding generator params")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=gaze.DEFAULT_TRIALS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train per-object models from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--kind", choices=("knn", "svm"), required=True)
    p.add_argument("--out", required=True, help="output model directory")
    p.add_argument("--k", type=int, default=classify.DEFAULT_K)
    p.add_argument("--C", type=float, default=classify.DEFAULT_C)
    p.add_argument("--kernel-scale", dest="kernel_scale", type=float,
                   default=classify.DEFAULT_KERNEL_SCALE)
    p.add_argument("--tol", type=float, default=classify.DEFAULT_TOL)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="stratified cross-validation per object")
    p.add_argument("--dataset", required=True)
    p.add_argument("--kind", choices=("knn", "svm"), required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=classify.DEFAULT_K)
    p.add_argument("--C", type=float, default=classify.DEFAULT_C)
    p.add_argument("--kernel-scale", dest="kernel_scale", type=float,
                   default=classify.DEFAULT_KERNEL_SCALE)
    p.add_argument("--tol", type=float, default=classify.DEFAULT_TOL)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("run", help="run one scenario headless")
    p.add_argument("--scenario", required=True,
                   help="scenario JSON file or a pack family name")
    p.add_argument("--script", help="gaze script JSON file")
    p.add_argument("--models", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", help="write the JSONL event log here")
    p.add_argument("--out", help="write RunMetrics JSON here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="run the scenario pack and aggregate")
    p.add_argument("--pack", default="standard")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--models", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--skip-negative", action="store_true",
                   help="skip the no-wink control runs")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("replay", help="re-derive metrics from an event log")
    p.add_argument("--log", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="live session endpoint for the browser UI")
    p.add_argument("--scenario", default="empty-room")
    p.add_argument("--models", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static", help="directory with the built frontend")
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(json.dumps({"error": str(e), "kind": e.kind}), file=sys.stderr)
        return 2
    except (artifacts.ArtifactError, classify.ModelFormatError,
            world.ScenarioFormatError, ValueError) as e:
        print(json.dumps({"error": str(e), "kind": type(e).__name__}),
              file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(json.dumps({"error": str(e), "kind": "missing-file"}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
