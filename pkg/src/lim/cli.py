"""``lim`` command line: synth, extract, train, eval, bench, predict."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from lim import dataset, gbt, metrics, synth
from lim.capture import CaptureError
from lim.extract import extract_paths, manifest_index

log = logging.getLogger("lim")


def _write_json(path, doc) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parent(path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def sidecar(path, suffix: str) -> Path:
    """``model.json`` -> ``model<suffix>``."""
    p = Path(path)
    return p.with_name(p.stem + suffix)


# -- commands --------------------------------------------------------------


def cmd_synth(args) -> int:
    profiles = synth.load_profiles(args.profiles)
    pcap, manifest = synth.generate_capture(profiles, args.sessions_per_class, args.seed)
    _parent(args.out_pcap).write_bytes(pcap)
    synth.write_manifest(manifest, _parent(args.out_manifest))
    print(f"wrote {len(manifest)} sessions to {args.out_pcap} and {args.out_manifest}")
    return 0


def cmd_extract(args) -> int:
    labels = manifest_index(synth.read_manifest(args.manifest)) if args.manifest else None
    out, stats = extract_paths(args.input, label_from_dirname=args.label_from_dirname, labels=labels)
    if stats.files == 0 or stats.files == stats.files_failed:
        log.error("no input capture could be read")
        return 1
    out_path = _parent(args.out)
    if args.binary:
        dataset.write_binary(out_path, out.X, out.labels)
    else:
        dataset.write_features_csv(out_path, out.X, out.labels)
    stats_doc = stats.to_dict()
    _write_json(sidecar(out_path, ".stats.json"), stats_doc)
    print(json.dumps(stats_doc, sort_keys=True))
    return 0


def cmd_train(args) -> int:
    X, y = dataset.read_features_csv(args.features)
    params = gbt.GbtHyperparams(
        num_rounds=args.rounds,
        max_depth=args.max_depth,
        learning_rate=args.eta,
        l2_lambda=args.lam,
        gamma=args.gamma,
        min_child_weight=args.min_child_weight,
        seed=args.seed,
    )
    train_idx, test_idx = metrics.stratified_split(y, args.train_fraction, args.seed)
    X_train, y_train = X[train_idx], [y[i] for i in train_idx]
    holder = {}
    report = metrics.measure_resources(
        lambda: holder.setdefault("model", gbt.fit(X_train, y_train, params)), None, train_count=len(train_idx)
    )
    model = holder["model"]
    model.save(_parent(args.model_out))
    dataset.write_features_csv(sidecar(args.model_out, ".test.csv"), X[test_idx], [y[i] for i in test_idx])
    doc = report.to_dict()
    doc["classes"] = len(model.label_map)
    _write_json(sidecar(args.model_out, ".train.json"), doc)
    print(f"model: {args.model_out} (K={len(model.label_map)}, {len(model.trees)} trees)")
    print(f"held-out split: {sidecar(args.model_out, '.test.csv')} ({len(test_idx)} rows)")
    print(f"training latency: {report.train_latency_s_per_sample:.6f} s/sample over {len(train_idx)} samples")
    return 0


def cmd_eval(args) -> int:
    model = gbt.GbtModel.load(args.model)
    X, y = dataset.read_features_csv(args.features)
    report = metrics.evaluate(model, X, y)
    print(report.format_table())
    if args.out:
        _write_json(args.out, report.to_dict())
    return 0


def cmd_bench(args) -> int:
    model = gbt.GbtModel.load(args.model)
    X, _ = dataset.read_features_csv(args.features)
    if not len(X):
        raise metrics.EmptyTestSet("no rows to benchmark")
    Xf = np.asarray(X, dtype=np.float64)
    model.predict_index(Xf[:1])  # build packed arrays outside the timed region
    report = metrics.benchmark_inference(lambda: model.predict_index(Xf), len(Xf), repeat=args.repeat)
    print(f"throughput: {report.inference_throughput_samples_per_s:,.2f} samples/s (median of {args.repeat})")
    print(f"peak memory: {report.peak_memory_mib} MiB")
    print(f"energy: {report.energy_watts}")
    if args.out:
        _write_json(args.out, report.to_dict())
    return 0


def cmd_predict(args) -> int:
    model = gbt.GbtModel.load(args.model)
    X, y = dataset.read_features_csv(args.features)
    proba = model.predict_proba(X)
    pred = [model.label_map[i] for i in np.argmax(proba, axis=1)]
    out = open(_parent(args.out), "w") if args.out else sys.stdout
    try:
        out.write("predicted,label,confidence\n")
        for p, t, row in zip(pred, y, proba):
            out.write(f'"{p}","{t}",{row.max():.6f}\n')
    finally:
        if args.out:
            out.close()
    return 0


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="pcap files -> NetMatrix feature CSV")
    p.add_argument("--input", nargs="+", required=True, help="capture files or directories")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--label-from-dirname", action="store_true", help="class = parent directory name")
    src.add_argument("--manifest", help="CSV src_ip,src_port,dst_ip,dst_port,label")
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true", help="write packed 30-byte rows plus OUT.labels")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="fit the boosted-tree classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--eta", type=float, default=0.3)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--min-child-weight", type=float, default=1.0)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy / macro precision, recall, F1")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="inference throughput and peak memory")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("predict", help="per-row predictions")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="generate a labeled synthetic capture")
    p.add_argument("--profiles", required=True, help="JSON list of class profiles")
    p.add_argument("--sessions-per-class", type=int, required=True)
    p.add_argument("--out-pcap", required=True)
    p.add_argument("--out-manifest", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, CaptureError) as e:
        print(f"lim {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
