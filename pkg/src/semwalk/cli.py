"""Single executable exposing the pipeline.

Subcommands::

    encode         train an encoder (codebook or mixture) on a manifest
    build-graph    encode a manifest and build the semantic-visual graph
    classify       classify query videos against a prebuilt graph
    evaluate       leave-one-person-out evaluation, one report file
    sweep          grid of evaluations over z / t / m / gamma / k
    gen-synthetic  write a planted synthetic dataset + taxonomy

Options may also come from a ``--config`` file of ``key=value`` lines;
explicit flags win.  All randomness is controlled by ``--seed``.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import encoding, evaluation, graph, inference, semantics
from .dataset import annotation_for, atomic_write_text, parse_manifest, sample_segments

_DEFAULTS: dict[str, object] = {
    "mode": semantics.VERB,
    "encoding": encoding.FV,
    "method": evaluation.SEMBED,
    "m": 240,
    "z": 4,
    "t": 8,
    "k": 5,
    "lambda": 0.5,
    "fraction": 0.25,
    "seed": 0,
    "workers": 1,
    "epochs": 100,
    "step": 0.1,
    "clusters": 4,
    "points": 40,
    "dim": 16,
    "separation": 10.0,
    "sigma": 1.0,
    "persons": 3,
    "rows_per_video": 10,
    "synonym_clusters": 2,
    "hyponym_clusters": 0,
}

_CONVERTERS: dict[str, type] = {
    "gamma": int, "m": int, "z": int, "t": int, "k": int, "seed": int,
    "workers": int, "sample": int, "epochs": int, "clusters": int,
    "points": int, "dim": int, "persons": int, "rows_per_video": int,
    "synonym_clusters": int, "hyponym_clusters": int,
    "lambda": float, "fraction": float, "separation": float,
    "sigma": float, "step": float,
}

# argparse destinations that differ from the option name
_DEST = {"lambda": "lam"}


class CliError(Exception):
    """Usage-level failure; message is printed as a one-line diagnostic."""


def _load_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


class _Options:
    """Flag / config-file / default resolution; flags win."""

    def __init__(self, ns: argparse.Namespace) -> None:
        self.ns = vars(ns)
        config = self.ns.get("config")
        self.file = _load_config_file(config) if config else {}

    def get(self, key: str, required: bool = False):
        value = self.ns.get(_DEST.get(key, key.replace("-", "_")))
        if value is None and key in self.file:
            converter = _CONVERTERS.get(key, str)
            value = converter(self.file[key])
        if value is None:
            value = _DEFAULTS.get(key)
        if value is None and required:
            raise CliError(f"missing required --{key}")
        return value

    def gamma(self) -> int:
        value = self.get("gamma")
        if value is not None:
            return value
        return 10 if self.get("encoding") == encoding.FV else 256


def _taxonomy_for(opts: _Options, mode: str) -> semantics.Taxonomy | None:
    path = opts.get("taxonomy")
    if path is None:
        if mode in semantics.MEANING_MODES:
            raise CliError(f"missing required --taxonomy (mode {mode!r} needs one)")
        return None
    return semantics.parse_taxonomy(path)


def _check_mode(mode: str) -> str:
    if mode not in semantics.MODES:
        raise CliError(f"unknown --mode {mode!r}; choose from {'|'.join(semantics.MODES)}")
    return mode


def _encode_manifest(manifest_path: str, model) -> tuple:
    ds = parse_manifest(manifest_path)
    encoded = {
        seg.segment_id: encoding.encode(model, ds.load_descriptors(seg).values)
        for seg in ds.segments
    }
    return ds, encoded


def _eval_config(opts: _Options) -> evaluation.EvalConfig:
    return evaluation.EvalConfig(
        encoding=opts.get("encoding"),
        gamma=opts.gamma(),
        m=opts.get("m"),
        z=opts.get("z"),
        t=opts.get("t"),
        k=opts.get("k"),
        lam=opts.get("lambda"),
        fraction=opts.get("fraction"),
        seed=opts.get("seed"),
        epochs=opts.get("epochs"),
        step=opts.get("step"),
        workers=opts.get("workers"),
    )


def cmd_encode(ns: argparse.Namespace) -> int:
    opts = _Options(ns)
    ds = parse_manifest(opts.get("manifest", required=True))
    sets = [ds.load_descriptors(seg).values for seg in ds.segments]
    pool = encoding.subsample(sets, opts.get("fraction"), opts.get("seed"))
    kind = opts.get("encoding")
    gamma = opts.gamma()
    if kind == encoding.BOW:
        model = encoding.train_kmeans(pool, gamma, opts.get("seed"))
    elif kind == encoding.FV:
        model = encoding.train_gmm(pool, gamma, opts.get("seed"))
    else:
        raise CliError(f"unknown --encoding {kind!r}")
    out = opts.get("out", required=True)
    encoding.save_model(model, out)
    print(f"saved {kind} model (gamma={gamma}, dim={pool.shape[1]}) to {out}")
    return 0


def cmd_build_graph(ns: argparse.Namespace) -> int:
    opts = _Options(ns)
    mode = _check_mode(opts.get("mode"))
    taxonomy = _taxonomy_for(opts, mode)
    model = encoding.load_model(opts.get("model", required=True))
    ds, encoded = _encode_manifest(opts.get("manifest", required=True), model)
    nodes = [
        graph.SvgNode(
            segment_id=seg.segment_id,
            annotation=annotation_for(seg, mode),
            vector=encoded[seg.segment_id],
        )
        for seg in ds.segments
    ]
    svg = graph.build_svg(nodes, taxonomy, mode, opts.get("m"))
    out = opts.get("out", required=True)
    graph.save_graph(svg, out)
    print(f"built graph: {len(svg)} nodes, {len(svg.undirected_pairs())} edges -> {out}")
    return 0


def cmd_classify(ns: argparse.Namespace) -> int:
    opts = _Options(ns)
    structure = graph.load_graph(opts.get("graph", required=True))
    # The graph dump records its relation mode; an explicit --mode (or
    # config value) must agree with it.
    explicit = vars(ns).get("mode") or opts.file.get("mode")
    mode = explicit or structure.mode
    if mode != structure.mode:
        raise CliError(
            f"--mode {mode!r} conflicts with graph mode {structure.mode!r}"
        )
    taxonomy = _taxonomy_for(opts, mode)
    model = encoding.load_model(opts.get("model", required=True))
    _train_ds, encoded = _encode_manifest(opts.get("manifest", required=True), model)
    svg = graph.with_vectors(structure, encoded)
    transitions = graph.normalize_transitions(svg)
    queries = parse_manifest(opts.get("queries", required=True))

    annotations = {node.annotation for node in svg.nodes}
    query_annotations: dict[str, str | None] = {}
    for seg in queries.segments:
        try:
            ann = annotation_for(seg, mode)
        except ValueError:
            ann = None
        if ann is not None and taxonomy is not None and ann not in taxonomy:
            ann = None  # unknown meaning: report truth as "-"
        query_annotations[seg.segment_id] = ann
    known = {a for a in query_annotations.values() if a is not None}
    classes = semantics.semantic_classes(taxonomy, annotations | known, mode)
    cmap = semantics.class_map(classes)

    walk = inference.WalkConfig(z=opts.get("z"), t=opts.get("t"))
    lines = []
    for seg in queries.segments:
        vector = encoding.encode(model, queries.load_descriptors(seg).values)
        label, dist = inference.classify(
            svg, transitions, taxonomy, mode, vector, walk, classes=classes
        )
        ann = query_annotations[seg.segment_id]
        true_class = cmap[ann] if ann is not None else "-"
        line = f"{seg.segment_id}\t{label}\t{true_class}\t{dist[label]!r}"
        if ns.distributions:
            line += "\t" + evaluation.format_distribution(dist)
        lines.append(line)
    text = "\n".join(lines) + "\n"
    out = opts.get("out")
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)
    return 0


def cmd_evaluate(ns: argparse.Namespace) -> int:
    opts = _Options(ns)
    mode = _check_mode(opts.get("mode"))
    method = opts.get("method")
    if method not in evaluation.METHODS:
        raise CliError(
            f"unknown --method {method!r}; choose from {'|'.join(evaluation.METHODS)}"
        )
    taxonomy = _taxonomy_for(opts, mode)
    ds = parse_manifest(opts.get("manifest", required=True))
    sample = opts.get("sample")
    if sample is not None:
        ds = sample_segments(ds, sample, opts.get("seed"))
    report = evaluation.run_lopo(ds, taxonomy, mode, method, _eval_config(opts))
    out = opts.get("out", required=True)
    evaluation.write_report(report, out)
    print(f"accuracy={report.accuracy!r}")
    return 0


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise CliError(f"expected a comma-separated integer list, got {text!r}") from None


def cmd_sweep(ns: argparse.Namespace) -> int:
    opts = _Options(ns)
    mode = _check_mode(opts.get("mode"))
    method = opts.get("method")
    taxonomy = _taxonomy_for(opts, mode)
    ds = parse_manifest(opts.get("manifest", required=True))
    sample = opts.get("sample")
    if sample is not None:
        ds = sample_segments(ds, sample, opts.get("seed"))
    grid: dict[str, list] = {}
    for key in ("z", "t", "m", "gamma", "k"):
        raw = vars(ns).get(key)
        if raw is None and key in opts.file:
            raw = opts.file[key]
        if raw is not None:
            grid[key] = _int_list(raw)
    if not grid:
        raise CliError("sweep needs at least one of --z/--t/--m/--gamma/--k")
    base = evaluation.EvalConfig(
        encoding=opts.get("encoding"),
        gamma=10 if opts.get("encoding") == encoding.FV else 256,
        m=_DEFAULTS["m"],
        z=_DEFAULTS["z"],
        t=_DEFAULTS["t"],
        k=_DEFAULTS["k"],
        lam=opts.get("lambda"),
        fraction=opts.get("fraction"),
        seed=opts.get("seed"),
        epochs=opts.get("epochs"),
        step=opts.get("step"),
        workers=opts.get("workers"),
    )
    points = evaluation.sweep(ds, taxonomy, mode, method, grid, base)
    text = evaluation.format_sweep(points)
    out = opts.get("out")
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)
    return 0


def cmd_gen_synthetic(ns: argparse.Namespace) -> int:
    opts = _Options(ns)
    spec = evaluation.SyntheticSpec(
        clusters=opts.get("clusters"),
        points_per_cluster=opts.get("points"),
        dim=opts.get("dim"),
        separation=opts.get("separation"),
        sigma=opts.get("sigma"),
        persons=opts.get("persons"),
        seed=opts.get("seed"),
        rows_per_video=opts.get("rows_per_video"),
        synonym_clusters=opts.get("synonym_clusters"),
        hyponym_clusters=opts.get("hyponym_clusters"),
    )
    out = opts.get("out", required=True)
    manifest_path, taxonomy_path = evaluation.gen_synthetic(spec, out)
    print(f"wrote {manifest_path} and {taxonomy_path}")
    return 0


def _add_flags(parser: argparse.ArgumentParser, *names: str) -> None:
    for name in names:
        key = name.replace("-", "_")
        kwargs: dict = {"dest": _DEST.get(name, key)}
        if key in _CONVERTERS:
            kwargs["type"] = _CONVERTERS[key]
        parser.add_argument(f"--{name}", **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semwalk",
        description="Semantic-visual graph embedding and walk-based label inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="train a bow/fv encoder on a manifest")
    _add_flags(p, "manifest", "encoding", "gamma", "fraction", "seed", "out", "config")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("build-graph", help="build the semantic-visual graph")
    _add_flags(p, "manifest", "taxonomy", "mode", "model", "m", "out", "config")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("classify", help="classify query videos against a graph")
    _add_flags(
        p, "graph", "manifest", "queries", "model", "taxonomy",
        "mode", "z", "t", "out", "config",
    )
    p.add_argument("--distributions", action="store_true",
                   help="append the per-class distribution to each line")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="leave-one-person-out evaluation")
    _add_flags(
        p, "manifest", "taxonomy", "mode", "method", "encoding", "gamma",
        "m", "z", "t", "k", "lambda", "fraction", "seed", "sample",
        "epochs", "step", "workers", "out", "config",
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="grid of evaluations over z/t/m/gamma/k")
    for key in ("z", "t", "m", "gamma", "k"):
        p.add_argument(f"--{key}", dest=key, type=str,
                       help=f"comma-separated {key} values")
    _add_flags(
        p, "manifest", "taxonomy", "mode", "method", "encoding", "lambda",
        "fraction", "seed", "sample", "epochs", "step", "workers", "out", "config",
    )
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-synthetic", help="write a planted synthetic dataset")
    _add_flags(
        p, "clusters", "points", "dim", "separation", "sigma", "persons",
        "seed", "rows-per-video", "synonym-clusters", "hyponym-clusters",
        "out", "config",
    )
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def dispatch(argv: list[str]) -> int:
    """Run one subcommand; returns the process exit status."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return ns.func(ns)
    except CliError as exc:
        print(f"semwalk: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"semwalk: error: {exc}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    return dispatch(sys.argv[1:] if argv is None else list(argv))


if __name__ == "__main__":
    sys.exit(main())
