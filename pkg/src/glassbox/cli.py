"""Command-line surface: train, explain, bench, diagnose.

Every run serializes its full configuration; the sha256 of that config
is the fingerprint embedded in each artifact, so any output file can be
traced back to the exact invocation that produced it. Exit codes are a
stable contract: 0 success, 2 usage or config error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoints import CheckpointStore
from .data import (Dataset, SyntheticSpec, gen_synthetic, load_csv, split,
                   standardize_pair, SYNTHETIC_KINDS)
from .diagnostics import (ProbeSuite, evaluate_snapshot, targeted_resample,
                          timeline_report)
from .explainers import (EXPLAINER_METHODS, SHAPLEY_EXACT_MAX_FEATURES,
                         ExplainerConfig, run_explainer)
from .gating import GateConfig
from .groups import FeatureGroupSpec, load_group_spec
from .metrics import (consistency_across_seeds, disagreement_matrix,
                      forward_latency, latency_profile, prediction_gap,
                      PGI, PGU)
from .models import (FeatureGatingModel, MLPClassifier, RoutedExpertsModel,
                     matched_hidden_width, train)
from .rng import Rng
from . import report

OUTPUT_ROOT_ENV = "GLASSBOX_OUT"


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    params: dict

    def to_dict(self) -> dict:
        return {"tool_version": __version__, "command": self.command,
                "params": self.params}

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _hidden(text: str) -> tuple:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise UsageError(f"bad hidden-layer list {text!r}; expected e.g. 16,16")


def _load_data(args) -> tuple[Dataset, Dataset]:
    """Resolve --data into standardized (train, test) splits."""
    src = args.data
    if src.startswith("synthetic:"):
        kind = src.split(":", 1)[1]
        if kind not in SYNTHETIC_KINDS:
            raise UsageError(f"unknown synthetic dataset {kind!r}; "
                             f"expected one of {', '.join(SYNTHETIC_KINDS)}")
        spec = SyntheticSpec(kind=kind, num_features=args.num_features,
                             num_groups=args.num_groups,
                             n_samples=args.n_samples,
                             noise_std=args.noise, seed=args.data_seed)
        ds = gen_synthetic(spec)
    else:
        path = Path(src)
        if not path.exists():
            raise UsageError(f"dataset file not found: {path}")
        ds = load_csv(path)
    tr, te = split(ds, (1.0 - args.test_fraction, args.test_fraction),
                   seed=args.data_seed)
    tr, te, _ = standardize_pair(tr, te)
    return tr, te


def _gate_config(args) -> GateConfig:
    try:
        return GateConfig(sparsity_coefficient=args.sparsity,
                          selection=args.selection, k=args.k)
    except ValueError as err:
        raise UsageError(str(err))


def _groups_for(args, num_features: int) -> FeatureGroupSpec:
    if args.groups is not None:
        path = Path(args.groups)
        if not path.exists():
            raise UsageError(f"groups file not found: {path}")
        return load_group_spec(path)
    return FeatureGroupSpec.contiguous(num_features, args.num_groups)


def _build_model(args, num_features: int, num_classes: int):
    rng = Rng(args.seed)
    if args.model == "mlp_blackbox":
        return MLPClassifier(num_features, num_classes, rng,
                             hidden=_hidden(args.hidden))
    if args.model == "interpretcc_moe":
        return RoutedExpertsModel(_groups_for(args, num_features), num_classes,
                                  rng, gate_config=_gate_config(args))
    if args.model == "feature_gating":
        return FeatureGatingModel(num_features, num_classes, rng,
                                  gate_config=_gate_config(args))
    raise UsageError(f"unknown model kind {args.model!r}")


def _out_dir(args, config: RunConfig) -> Path:
    if args.out is not None:
        out = Path(args.out)
    else:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "glassbox_runs"))
        out = root / f"{config.command}-{config.fingerprint()}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run_config(out: Path, config: RunConfig) -> None:
    report.write_json(out / "run.json", config.to_dict(), config.fingerprint())


# -- subcommands ---------------------------------------------------------------


def cmd_train(args) -> int:
    config = RunConfig("train", _public_args(args))
    out = _out_dir(args, config)
    fp = config.fingerprint()
    tr, te = _load_data(args)
    model = _build_model(args, tr.num_features, tr.num_classes)
    trace = train(model, tr, epochs=args.epochs, rng=Rng(args.train_seed),
                  learning_rate=args.lr)
    store = CheckpointStore(out / "checkpoints")
    ckpt = store.save(model, args.epochs)
    test_acc = float(np.mean(
        np.argmax(model.predict_proba(te.features), axis=1) == te.labels))
    report.write_json(out / "trace.json",
                      {"trace": trace.to_dict(), "test_accuracy": test_acc,
                       "checkpoint_id": ckpt.checkpoint_id}, fp)
    report.training_curves(trace, out / "trace.png", fp)
    _write_run_config(out, config)
    print(f"checkpoint {ckpt.checkpoint_id}")
    print(f"test_accuracy {test_acc:.4f}")
    print(f"artifacts {out}")
    return 0


def cmd_explain(args) -> int:
    config = RunConfig("explain", _public_args(args))
    out = _out_dir(args, config)
    fp = config.fingerprint()
    if args.method not in EXPLAINER_METHODS:
        raise UsageError(f"unknown method {args.method!r}; valid: "
                         f"{', '.join(EXPLAINER_METHODS)}")
    store = CheckpointStore(Path(args.checkpoint_store))
    cid = args.checkpoint or store.latest()["id"]
    model = store.load_model(cid)
    tr, te = _load_data(args)
    if (args.method == "shapley_exact"
            and tr.num_features > SHAPLEY_EXACT_MAX_FEATURES):
        raise UsageError(
            f"shapley_exact enumerates 2^d coalitions and is capped at "
            f"d={SHAPLEY_EXACT_MAX_FEATURES}; this data has "
            f"{tr.num_features} features. Use shapley_sampled.")
    f = model.blackbox()
    ecfg = ExplainerConfig(args.method, _method_params(args))
    rows = []
    n = min(args.n_instances, te.n)
    for i in range(n):
        expl = run_explainer(ecfg, f, te.features[i], seed=args.seed + i,
                             dataset=tr)
        rec = expl.to_record()
        rec["instance"] = i
        rec["fingerprint"] = fp
        rows.append(json.dumps(rec, sort_keys=True))
    (out / "explanations.jsonl").write_text("\n".join(rows) + "\n")
    _write_run_config(out, config)
    print(f"wrote {n} explanations to {out / 'explanations.jsonl'}")
    return 0


def _method_params(args) -> dict:
    params: dict = {}
    if args.method == "lime":
        params["n_samples"] = args.lime_samples
    if args.method == "shapley_sampled":
        params["n_permutations"] = args.permutations
    return params


def cmd_bench(args) -> int:
    config = RunConfig("bench", _public_args(args))
    out = _out_dir(args, config)
    fp = config.fingerprint()
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if len(methods) < 2:
        raise UsageError("bench needs at least two methods (--methods a,b)")
    for m in methods:
        if m not in EXPLAINER_METHODS:
            raise UsageError(f"unknown method {m!r}; valid: "
                             f"{', '.join(EXPLAINER_METHODS)}")
    store = CheckpointStore(Path(args.checkpoint_store))
    cid = args.checkpoint or store.latest()["id"]
    model = store.load_model(cid)
    tr, te = _load_data(args)
    f = model.blackbox()
    n = min(args.n_instances, te.n)
    instances = te.features[:n]
    baseline = np.zeros(tr.num_features)

    cfgs = {m: ExplainerConfig(m, {}) for m in methods}
    if "lime" in cfgs:
        cfgs["lime"] = ExplainerConfig("lime", {"n_samples": args.lime_samples})
    if "shapley_sampled" in cfgs:
        cfgs["shapley_sampled"] = ExplainerConfig(
            "shapley_sampled", {"n_permutations": args.permutations})

    # disagreement: deterministic merge over sorted (instance, method) cells
    agreements = []
    gap_rows = []
    for i in range(n):
        expls = [run_explainer(cfgs[m], f, instances[i], seed=args.seed + i,
                               baseline=baseline, dataset=tr)
                 for m in sorted(cfgs)]
        mat = disagreement_matrix(expls, k=args.top_k)
        agreements.append(mat)
        for e in expls:
            gap_rows.append({
                "instance": i, "method": e.method,
                "pgi": prediction_gap(f, instances[i], e, args.top_k, PGI,
                                      baseline=baseline),
                "pgu": prediction_gap(f, instances[i], e, args.top_k, PGU,
                                      baseline=baseline)})
    mean_vals = np.mean([m.values for m in agreements], axis=0)
    mean_matrix = type(agreements[0])(agreements[0].methods, mean_vals,
                                      agreements[0].metric_name, args.top_k)

    consistency = {}
    for m in sorted(cfgs):
        rep = consistency_across_seeds(cfgs[m], f, instances[0],
                                       n_seeds=args.n_seeds, k=args.top_k,
                                       baseline=baseline, dataset=tr)
        consistency[m] = rep.to_dict()

    lat = [latency_profile(cfgs[m], f, instances, seed=args.seed,
                           baseline=baseline, dataset=tr)
           for m in sorted(cfgs)]
    fwd_model = model
    if hasattr(model, "param_count") and model.kind != "mlp_blackbox":
        h = matched_hidden_width(tr.num_features, tr.num_classes,
                                 model.param_count(), depth=3)
        fwd_model = MLPClassifier(tr.num_features, tr.num_classes,
                                  Rng(args.seed), hidden=(h,) * 3)
    lat.append(forward_latency(fwd_model, instances))

    payload = {
        "checkpoint_id": cid,
        "n_instances": n,
        "mean_disagreement": mean_matrix.to_dict(),
        "mean_off_diagonal": mean_matrix.mean_off_diagonal(),
        "consistency": consistency,
        "latency": [s.to_dict() for s in lat],
    }
    report.write_json(out / "report.json", payload, fp)
    report.write_csv(out / "latency.csv", report.latency_table_csv(lat), fp)
    report.write_csv(out / "gaps.csv", report.gap_table_csv(gap_rows), fp)
    report.disagreement_heatmap(mean_matrix, out / "disagreement.png", fp)
    report.latency_bars(lat, out / "latency.png", fp)
    _write_run_config(out, config)
    print(f"mean pairwise agreement {mean_matrix.mean_off_diagonal():.3f}")
    for s in lat:
        print(f"latency {s.method}: median {s.median_ms:.4f} ms "
              f"p95 {s.p95_ms:.4f} ms")
    print(f"artifacts {out}")
    return 0


def cmd_diagnose(args) -> int:
    config = RunConfig("diagnose", _public_args(args))
    out = _out_dir(args, config)
    fp = config.fingerprint()
    tr, te = _load_data(args)
    if args.probes is not None:
        path = Path(args.probes)
        if not path.exists():
            raise UsageError(f"probe suite file not found: {path}")
        suite = ProbeSuite.load(path)
    else:
        if te.categories is None:
            raise UsageError("dataset has no category tags; pass --probes")
        suite = ProbeSuite.from_categories(te)
    model = _build_model(args, tr.num_features, tr.num_classes)
    store = CheckpointStore(out / "checkpoints")
    cadence = args.cadence
    reports = [evaluate_snapshot(model, suite, step=0)]
    store.save(model, 0)
    weights = None
    steps = list(range(cadence, args.epochs + 1, cadence))
    for step in steps:
        train(model, tr, epochs=cadence, rng=Rng(args.train_seed + step),
              learning_rate=args.lr, example_weights=weights)
        store.save(model, step)
        rep = evaluate_snapshot(model, suite, step=step)
        reports.append(rep)
        if (args.resample_boost > 1.0 and weights is None
                and step >= steps[len(steps) // 2]):
            weights = targeted_resample(tr, rep, args.resample_boost)
    tl = timeline_report(reports)
    report.write_json(out / "timeline.json", tl.to_dict(), fp)
    report.write_csv(out / "timeline.csv", tl.to_csv(), fp)
    report.timeline_figure(tl, out / "timeline.png", fp)
    _write_run_config(out, config)
    for name, acq in sorted(tl.acquisition.items()):
        print(f"probe {name}: final {tl.series[name][-1]:.3f} "
              f"acquired at {acq if acq is not None else 'never'}")
    print(f"artifacts {out}")
    return 0


# -- wiring --------------------------------------------------------------------


def _public_args(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", default="synthetic:switch_moe",
                   help="synthetic:<kind> or a CSV path")
    p.add_argument("--num-features", type=int, default=12)
    p.add_argument("--num-groups", type=int, default=2)
    p.add_argument("--n-samples", type=int, default=2000)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.3)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", default="interpretcc_moe",
                   choices=["mlp_blackbox", "feature_gating", "interpretcc_moe"])
    p.add_argument("--groups", default=None, help="feature-group JSON file")
    p.add_argument("--lambda", dest="sparsity", type=float, default=0.1,
                   help="sparsity penalty coefficient")
    p.add_argument("--selection", default="threshold",
                   choices=["threshold", "top_k"])
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--hidden", default="16,16",
                   help="hidden widths for mlp_blackbox, e.g. 16,16")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0, help="model init seed")
    p.add_argument("--train-seed", type=int, default=100)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glassbox",
        description="train interpretable models, explain predictions, "
                    "benchmark explainer disagreement, diagnose training")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    pt = sub.add_parser("train", help="train a model, write checkpoint + trace")
    _add_data_flags(pt)
    _add_model_flags(pt)
    pt.add_argument("--out", default=None)
    pt.set_defaults(func=cmd_train)

    pe = sub.add_parser("explain", help="emit explanation records for instances")
    _add_data_flags(pe)
    pe.add_argument("--checkpoint-store", required=True)
    pe.add_argument("--checkpoint", default=None, help="id; default latest")
    pe.add_argument("--method", default="interpretcc")
    pe.add_argument("--n-instances", type=int, default=10)
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--lime-samples", type=int, default=1000)
    pe.add_argument("--permutations", type=int, default=1000)
    pe.add_argument("--out", default=None)
    pe.set_defaults(func=cmd_explain)

    pb = sub.add_parser("bench", help="disagreement + latency + fidelity report")
    _add_data_flags(pb)
    pb.add_argument("--checkpoint-store", required=True)
    pb.add_argument("--checkpoint", default=None)
    pb.add_argument("--methods", default="lime,shapley_sampled,permutation")
    pb.add_argument("--n-instances", type=int, default=50)
    pb.add_argument("--n-seeds", type=int, default=10)
    pb.add_argument("--top-k", type=int, default=5)
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--lime-samples", type=int, default=1000)
    pb.add_argument("--permutations", type=int, default=200)
    pb.add_argument("--out", default=None)
    pb.set_defaults(func=cmd_bench)

    pd = sub.add_parser("diagnose", help="probe checkpoints over training")
    _add_data_flags(pd)
    _add_model_flags(pd)
    pd.add_argument("--probes", default=None, help="probe suite JSON")
    pd.add_argument("--cadence", type=int, default=10,
                    help="epochs between snapshots")
    pd.add_argument("--resample-boost", type=float, default=1.0,
                    help="apply targeted resampling after the midpoint "
                         "snapshot with this boost factor")
    pd.add_argument("--out", default=None)
    pd.set_defaults(func=cmd_diagnose)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - last-resort CLI boundary
        print(f"failure: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
