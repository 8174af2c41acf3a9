"""Command-line entry point.

Subcommands: train-lm, embed, detect, select-key, radioactivity, sweep,
serve, serve-check.  Every flag has a config-file equivalent (flat JSON with
the flag name, dashes as underscores); precedence is defaults < config file
< explicit flags, and --dump-config prints the effective settings without
running.  The secret key may come from the INKWELL_KEY environment variable
instead of the command line.  Exit codes: 0 success, 1 operational error,
2 invalid configuration.
"""

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .data import corpus_documents
from .decode import decoder_from_dict
from .detect import detector_for, entropy_filtered_detect
from .errors import (
    ConfigurationError,
    InkwellError,
    InvalidParameterError,
    TooShortError,
)
from .evaluation import (
    load_quality_scores,
    sweep as run_sweep,
    table_to_csv,
    table_to_json,
)
from .keyselect import select_key
from .lm import NgramModel, Vocabulary, train_ngram
from .pipeline import document_to_json_dict, load_documents, rephrase_document
from .prf import WatermarkKey
from .provider import connect, run_conformance, serve_model, serve_tcp
from .radioactivity import radioactivity_pvalue
from .schemes import scheme_from_dict

DEFAULTS = {
    "window_size": 2,
    "gamma": 0.5,
    "delta": 2.0,
    "alpha": 0.3,
    "kappa": 10.0,
    "p0": 0.1,
    "depth": 10,
    "weighted": False,
    "sweet_tau": None,
    "decoder": "sampling",
    "temperature": 1.0,
    "top_p": 1.0,
    "seed": 0,
    "stop_at_eos": True,
    "beams": 3,
    "beam_candidates": 3,
    "beam_scoring": "biased",
    "beam_expansion": "deterministic",
    "watermax_len": 8,
    "watermax_drafts": 4,
    "chunk_mode": "context_aware",
    "chunk_len": 500,
    "ctx_len": 1000,
    "entropy_tau": None,
    "order": 3,
    "smoothing": 0.1,
    "doc_chars": 1000,
    "candidates": 50,
    "jobs": 1,
    "dedup": "pair",
}

_SCHEME_FLAGS = {
    "greenred": ["gamma", "delta", "sweet_tau"],
    "dipmark": ["alpha", "sweet_tau"],
    "morphmark": ["gamma", "kappa", "p0", "sweet_tau"],
    "gumbel": ["sweet_tau"],
    "synthid": ["depth", "weighted", "sweet_tau"],
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--dump-config", action="store_true",
                   help="print effective settings and exit")
    p.add_argument("--out", help="output path (default: stdout)")


def _add_scheme_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", choices=sorted(_SCHEME_FLAGS))
    p.add_argument("--key", type=int, help="secret key (or set INKWELL_KEY)")
    p.add_argument("--window-size", type=int, dest="window_size")
    p.add_argument("--gamma", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--p0", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--weighted", action="store_const", const=True, default=None)
    p.add_argument("--sweet-tau", type=float, dest="sweet_tau")
    p.add_argument("--dedup", choices=["pair", "window"])


def _add_decoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--decoder", choices=["sampling", "beam", "watermax"])
    p.add_argument("--temperature", type=float)
    p.add_argument("--top-p", type=float, dest="top_p")
    p.add_argument("--seed", type=int)
    p.add_argument("--beams", type=int)
    p.add_argument("--beam-candidates", type=int, dest="beam_candidates")
    p.add_argument("--beam-scoring", choices=["biased", "unbiased"], dest="beam_scoring")
    p.add_argument("--beam-expansion", choices=["deterministic", "stochastic"],
                   dest="beam_expansion")
    p.add_argument("--watermax-len", type=int, dest="watermax_len")
    p.add_argument("--watermax-drafts", type=int, dest="watermax_drafts")


def _add_chunk_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--chunk-mode", choices=["full_context", "context_aware"],
                   dest="chunk_mode")
    p.add_argument("--chunk-len", type=int, dest="chunk_len")
    p.add_argument("--ctx-len", type=int, dest="ctx_len")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inkwell",
        description="Keyed statistical watermarks with calibrated detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-lm", help="train the char n-gram model")
    p.add_argument("--corpus", help="UTF-8 text file (default: bundled corpus)")
    p.add_argument("--order", type=int)
    p.add_argument("--smoothing", type=float)
    p.add_argument("--doc-chars", type=int, dest="doc_chars",
                   help="paragraphs are merged into documents of about this size")
    _add_common(p)

    p = sub.add_parser("embed", help="rephrase documents under a watermark")
    p.add_argument("--model", required=False)
    p.add_argument("--in", dest="input", help="documents (.jsonl or blank-line text)")
    p.add_argument("--max-docs", type=int, dest="max_docs")
    p.add_argument("--with-detection", action="store_const", const=True, default=None,
                   dest="with_detection")
    _add_scheme_flags(p)
    _add_decoder_flags(p)
    _add_chunk_flags(p)
    _add_common(p)

    p = sub.add_parser("detect", help="score documents for a watermark")
    p.add_argument("--model", help="needed only for --entropy-tau")
    p.add_argument("--in", dest="input")
    p.add_argument("--entropy-tau", type=float, dest="entropy_tau")
    p.add_argument("--trace", action="store_const", const=True, default=None)
    _add_scheme_flags(p)
    _add_common(p)

    p = sub.add_parser("select-key", help="pick the key with the most uniform null")
    p.add_argument("--model")
    p.add_argument("--in", dest="input", help="unwatermarked corpus (default: generate)")
    p.add_argument("--candidates", type=int, help="number of candidate keys")
    p.add_argument("--key-list", dest="key_list",
                   help="comma-separated explicit candidates")
    p.add_argument("--n-texts", type=int, dest="n_texts", default=None)
    p.add_argument("--seed", type=int)
    _add_scheme_flags(p)
    _add_common(p)

    p = sub.add_parser("radioactivity", help="test a suspect model for exposure")
    p.add_argument("--suspect", required=False,
                   help="suspect model file, or a provider address "
                        "(stdio:CMD / tcp:HOST:PORT; needs --model to tokenize)")
    p.add_argument("--model", help="tokenizer model when --suspect is a provider")
    p.add_argument("--in", dest="input", help="watermarked corpus")
    _add_scheme_flags(p)
    _add_common(p)

    p = sub.add_parser("sweep", help="hyperparameter grid over a corpus")
    p.add_argument("--model")
    p.add_argument("--in", dest="input")
    p.add_argument("--grid", help="JSON list of {scheme:{...}, decoder:{...}}")
    p.add_argument("--max-docs", type=int, dest="max_docs")
    p.add_argument("--quality", help="per-document similarity CSV (id,similarity)")
    p.add_argument("--format", choices=["csv", "json"], dest="fmt")
    p.add_argument("--jobs", type=int)
    _add_scheme_flags(p)
    _add_decoder_flags(p)
    _add_chunk_flags(p)
    _add_common(p)

    p = sub.add_parser("serve", help="serve a model over the logit protocol")
    p.add_argument("--model", required=True)
    p.add_argument("--tcp", type=int, help="TCP port (default: stdio)")
    _add_common(p)

    p = sub.add_parser("serve-check", help="provider protocol conformance test")
    p.add_argument("--provider", required=True,
                   help='"stdio:CMD ARGS..." or "tcp:HOST:PORT"')
    _add_common(p)

    return parser


def _effective_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigurationError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS) - {
            "scheme", "key", "model", "input", "grid", "suspect", "provider",
            "corpus", "key_list", "n_texts", "max_docs", "quality", "fmt",
            "trace", "with_detection", "tcp",
        }
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for name, value in vars(args).items():
        if name in ("command", "config", "dump_config", "out"):
            continue
        if value is not None:
            cfg[name] = value
    return cfg


def _require_key(cfg: dict) -> WatermarkKey:
    key = cfg.get("key")
    if key is None:
        env = os.environ.get("INKWELL_KEY")
        if env is not None:
            try:
                key = int(env)
            except ValueError:
                raise ConfigurationError(
                    f"INKWELL_KEY must be a decimal integer, got {env!r}"
                ) from None
    if key is None:
        raise ConfigurationError("missing secret key: pass --key or set INKWELL_KEY")
    return WatermarkKey(s=int(key), k=int(cfg["window_size"]))


def _build_scheme(cfg: dict):
    name = cfg.get("scheme")
    if not name:
        raise ConfigurationError("missing --scheme")
    if name not in _SCHEME_FLAGS:
        raise ConfigurationError(
            f"unknown scheme {name!r}; expected one of {sorted(_SCHEME_FLAGS)}"
        )
    doc = {"scheme": name}
    for field in _SCHEME_FLAGS[name]:
        if cfg.get(field) is not None:
            doc[field] = cfg[field]
    return scheme_from_dict(doc)


def _build_decoder(cfg: dict):
    name = cfg.get("decoder") or "sampling"
    shared = {
        "temperature": cfg["temperature"],
        "top_p": cfg["top_p"],
        "seed": cfg["seed"],
        "stop_at_eos": cfg["stop_at_eos"],
    }
    if name == "sampling":
        return decoder_from_dict({"decoder": "sampling", **shared})
    if name == "beam":
        return decoder_from_dict({
            "decoder": "beam", **shared,
            "beams": cfg["beams"], "candidates": cfg["beam_candidates"],
            "scoring": cfg["beam_scoring"], "expansion": cfg["beam_expansion"],
        })
    if name == "watermax":
        return decoder_from_dict({
            "decoder": "watermax", **shared,
            "chunk_len": cfg["watermax_len"], "drafts": cfg["watermax_drafts"],
        })
    raise ConfigurationError(f"unknown decoder {name!r}")


def _load_model(path) -> NgramModel:
    if not path:
        raise ConfigurationError("missing --model")
    try:
        return NgramModel.load(path)
    except FileNotFoundError as exc:
        raise InkwellError(f"model file not found: {path}") from exc


def _read_corpus(cfg: dict, vocab: Vocabulary, max_docs=None) -> list[tuple[str, list[int]]]:
    path = cfg.get("input")
    if not path:
        raise ConfigurationError("missing --in")
    docs = load_documents(path)
    if max_docs:
        docs = docs[:max_docs]
    return [(doc_id, vocab.encode(text)) for doc_id, text in docs]


def _emit(text: str, out_path) -> None:
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dump(cfg: dict, args) -> int:
    _emit(json.dumps(cfg, indent=2, sort_keys=True) + "\n", args.out)
    return 0


# --- command bodies --------------------------------------------------------------


def _cmd_train_lm(args) -> int:
    cfg = _effective_config(args)
    if args.dump_config:
        return _dump(cfg, args)
    if cfg.get("corpus"):
        raw = Path(cfg["corpus"]).read_text("utf-8")
        paragraphs = [p.strip() for p in raw.split("\n\n") if p.strip()]
        docs, cur = [], ""
        for para in paragraphs:
            cur = para if not cur else cur + "\n" + para
            if len(cur) >= int(cfg["doc_chars"]):
                docs.append(cur)
                cur = ""
        if cur:
            docs.append(cur)
    else:
        docs = corpus_documents(int(cfg["doc_chars"]))
    vocab = Vocabulary.from_text("".join(docs))
    model = train_ngram([vocab.encode(d) for d in docs], int(cfg["order"]),
                        float(cfg["smoothing"]), vocab)
    if not args.out:
        raise ConfigurationError("train-lm needs --out for the model file")
    model.save(args.out)
    sys.stderr.write(
        f"trained order-{model.order} model over {len(docs)} documents, "
        f"vocab {model.vocab_size}, saved to {args.out}\n"
    )
    return 0


def _cmd_embed(args) -> int:
    cfg = _effective_config(args)
    if args.dump_config:
        return _dump(cfg, args)
    model = _load_model(cfg.get("model"))
    scheme = _build_scheme(cfg)
    key = _require_key(cfg)
    decoder = _build_decoder(cfg)
    corpus = _read_corpus(cfg, model.vocab, cfg.get("max_docs"))
    detector = detector_for(scheme, key, dedup=cfg["dedup"]) \
        if cfg.get("with_detection") else None
    lines = []
    for idx, (doc_id, tokens) in enumerate(corpus):
        doc_decoder = dataclasses.replace(
            decoder,
            seed=int(np.random.SeedSequence(
                [decoder.seed & 0xFFFFFFFF, idx]).generate_state(1)[0]),
        )
        doc = rephrase_document(doc_id, tokens, model, scheme, key, doc_decoder,
                                mode=cfg["chunk_mode"], chunk_len=int(cfg["chunk_len"]),
                                ctx_len=int(cfg["ctx_len"]))
        report = None
        if detector is not None and doc.regenerated_tokens:
            report = detector(doc.regenerated_tokens)
        lines.append(json.dumps(
            document_to_json_dict(doc, vocab=model.vocab, report=report),
            sort_keys=True))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_detect(args) -> int:
    cfg = _effective_config(args)
    if args.dump_config:
        return _dump(cfg, args)
    scheme = _build_scheme(cfg)
    key = _require_key(cfg)
    with_trace = bool(cfg.get("trace"))
    detector = detector_for(scheme, key, dedup=cfg["dedup"], with_trace=with_trace)
    tau = cfg.get("entropy_tau")
    model = _load_model(cfg.get("model"))  # tokenizes input; entropy source for tau
    corpus = _read_corpus(cfg, model.vocab)
    lines = []
    for doc_id, tokens in corpus:
        try:
            if tau is not None:
                report = entropy_filtered_detect(tokens, model, float(tau), detector)
            else:
                report = detector(tokens)
            doc = {"id": doc_id, **report.to_json_dict(include_trace=with_trace)}
        except TooShortError as exc:
            doc = {"id": doc_id, "error": str(exc)}
        lines.append(json.dumps(doc, sort_keys=True))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_select_key(args) -> int:
    cfg = _effective_config(args)
    if args.dump_config:
        return _dump(cfg, args)
    model = _load_model(cfg.get("model"))
    scheme = _build_scheme(cfg)
    if cfg.get("key_list"):
        candidates = [int(x) for x in str(cfg["key_list"]).split(",") if x.strip()]
    else:
        rng = np.random.default_rng(int(cfg["seed"]))
        candidates = sorted(
            int(x) for x in rng.choice(2**31, size=int(cfg["candidates"]), replace=False)
        )
    if cfg.get("input"):
        corpus = [tokens for _, tokens in _read_corpus(cfg, model.vocab)]
    else:
        from .evaluation import sample_h0_texts
        corpus = sample_h0_texts(model, int(cfg.get("n_texts") or 100),
                                 seed=int(cfg["seed"]))
    report = select_key(candidates, corpus, scheme,
                        window_size=int(cfg["window_size"]), dedup=cfg["dedup"])
    _emit(json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n", args.out)
    return 0


def _cmd_radioactivity(args) -> int:
    cfg = _effective_config(args)
    if args.dump_config:
        return _dump(cfg, args)
    key = _require_key(cfg)
    suspect_ref = cfg.get("suspect") or ""
    client = None
    if str(suspect_ref).startswith(("stdio:", "tcp:")):
        # suspect behind the logit-provider protocol; the corpus must then be
        # tokenized by a local model file sharing the suspect's tokenizer
        client = connect(str(suspect_ref))
        suspect = client
        tokenizer_model = _load_model(cfg.get("model"))
        vocab = tokenizer_model.vocab
    else:
        suspect = _load_model(suspect_ref)
        vocab = suspect.vocab
    try:
        corpus = [tokens for _, tokens in _read_corpus(cfg, vocab)]
        report = radioactivity_pvalue(suspect, corpus, key, gamma=float(cfg["gamma"]))
    finally:
        if client is not None:
            client.close()
    _emit(json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n", args.out)
    return 0


def _cmd_sweep(args) -> int:
    cfg = _effective_config(args)
    if args.dump_config:
        return _dump(cfg, args)
    model = _load_model(cfg.get("model"))
    key = _require_key(cfg)
    if cfg.get("grid"):
        try:
            entries = json.loads(Path(cfg["grid"]).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read grid {cfg['grid']}: {exc}") from exc
        grid = [(scheme_from_dict(e["scheme"]), decoder_from_dict(e["decoder"]))
                for e in entries]
    else:
        grid = [(_build_scheme(cfg), _build_decoder(cfg))]
    corpus = _read_corpus(cfg, model.vocab, cfg.get("max_docs"))
    quality = load_quality_scores(cfg["quality"]) if cfg.get("quality") else None
    rows = run_sweep(model, key, grid, corpus, chunk_mode=cfg["chunk_mode"],
                     chunk_len=int(cfg["chunk_len"]), ctx_len=int(cfg["ctx_len"]),
                     quality_scores=quality, jobs=int(cfg["jobs"]))
    fmt = cfg.get("fmt") or ("csv" if str(args.out or "").endswith(".csv") else "json")
    _emit(table_to_csv(rows) if fmt == "csv" else table_to_json(rows), args.out)
    return 0


def _cmd_serve(args) -> int:
    model = _load_model(args.model)
    if args.tcp:
        serve_tcp(model, int(args.tcp))
    else:
        serve_model(model, sys.stdin.buffer, sys.stdout.buffer)
    return 0


def _cmd_serve_check(args) -> int:
    results = run_conformance(args.provider)
    lines = [
        f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else "")
        for name, ok, detail in results
    ]
    _emit("\n".join(lines) + "\n", args.out)
    return 0 if all(ok for _, ok, _ in results) else 1


_COMMANDS = {
    "train-lm": _cmd_train_lm,
    "embed": _cmd_embed,
    "detect": _cmd_detect,
    "select-key": _cmd_select_key,
    "radioactivity": _cmd_radioactivity,
    "sweep": _cmd_sweep,
    "serve": _cmd_serve,
    "serve-check": _cmd_serve_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigurationError, InvalidParameterError) as exc:
        sys.stderr.write(f"inkwell: invalid configuration: {exc}\n")
        return 2
    except InkwellError as exc:
        sys.stderr.write(f"inkwell: error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"inkwell: i/o error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
