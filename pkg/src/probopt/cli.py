"""Command-line entry point: ``probopt <subcommand> [options]``.

Every run prints exactly one JSON report (sorted keys) to stdout, or writes it
to ``--report``. Parameters come from defaults, then an optional ``--config``
key=value file, then flags. Exit codes: 0 success, 1 domain error, 2 usage
error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import cehpo, posenc, prflash, saq, tokenizer
from .corpus import build_count_table, read_corpus
from .errors import ArtifactError, UsageError
from .rng import substream

SCHEMA_VERSION = "1.0"
REQUIRED = object()


def _ints(text):
    return tuple(int(x) for x in str(text).split(","))


def _floats(text):
    return tuple(float(x) for x in str(text).split(","))


# name -> (converter, default, help); REQUIRED marks mandatory values
PARAMS: dict[str, dict[str, tuple]] = {
    "vocab": {
        "corpus": (str, REQUIRED, "UTF-8 corpus file"),
        "algo": (str, "swe", "swe | ebpe | bpe"),
        "k": (int, REQUIRED, "exact number of tokens"),
        "eow": (str, "_", "end-of-word mark"),
        "out": (str, None, "vocabulary file to write"),
        "merges": (str, None, "merge file to write (ebpe/bpe)"),
    },
    "tokenize": {
        "input": (str, REQUIRED, "UTF-8 text file to tokenize"),
        "merges": (str, REQUIRED, "merge file"),
        "eow": (str, "_", "end-of-word mark"),
        "out": (str, None, "token file to write, one token per line"),
    },
    "cehpo": {
        "objective": (str, "planted", "planted | skipgram"),
        "corpus": (str, None, "corpus for the skip-gram objective"),
        "optimum": (_ints, (3, 9, 1, 2), "planted optimum c,d,s_f-bin,m_c"),
        "c_range": (_ints, (1, 5), "lo,hi"),
        "d_range": (_ints, (2, 16), "lo,hi"),
        "sf_range": (_floats, (1e-3, 1e-1), "lo,hi"),
        "mc_range": (_ints, (1, 5), "lo,hi"),
        "M": (int, 100, "samples per round"),
        "rho": (float, 0.01, "elite fraction"),
        "alpha": (float, 0.7, "smoothing weight"),
        "s": (float, 10.0, "favoured-sample multiplier"),
        "l": (int, 5, "rounds of unchanged gamma before stopping"),
        "max_rounds": (int, 200, "hard round limit"),
        "epochs": (int, 40, "skip-gram training epochs"),
        "out": (str, None, "report path"),
    },
    "posenc": {
        "n": (int, 8, "sequence length"),
        "dim": (int, 16, "head dimension (even)"),
        "heads": (int, 8, "number of heads"),
        "head": (int, 0, "head whose weights are reported"),
        "bias": (str, "harmonic", "harmonic | alibi | none"),
        "csv": (str, None, "attention-weight CSV to write"),
        "out": (str, None, "report path"),
    },
    "prflash": {
        "n": (int, 256, "sequence length"),
        "block": (int, 32, "block size (rows and columns)"),
        "k": (int, 2, "full-probability distance cutoff"),
        "w": (float, 0.5, "probability weight"),
        "s": (float, 30.0, "target dropping percentage"),
        "dim": (int, 16, "head dimension"),
        "keep_csv": (str, None, "keep-matrix CSV to write"),
        "out": (str, None, "report path"),
    },
    "saq": {
        "seq_len": (int, 64, "decode steps"),
        "prompt_len": (int, 0, "prompt tokens before decoding"),
        "segment_size": (int, 2, "segment size S"),
        "bits": (_ints, (16, 8, 4, 2), "bit schedule"),
        "group_size": (int, 2, "group size G"),
        "dim": (int, 8, "head dimension"),
        "out": (str, None, "report path"),
    },
}
POSITIONAL = {"vocab": "corpus", "tokenize": "input", "cehpo": "corpus"}
COMMON = {"seed": (int, 0, "run seed"), "report": (str, None, "report path")}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="probopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd, table in PARAMS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--config", default=None, help="key=value file; flags win")
        for name, (_, default, help_) in {**table, **COMMON}.items():
            if POSITIONAL.get(cmd) == name:
                p.add_argument(name, nargs="?", default=None, help=help_)
            else:
                # None means "not given" so file values can fill in
                p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, help=help_)
    return parser


def read_config_file(path) -> dict[str, str]:
    values, problems = {}, []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            problems.append(f"line {n}: expected key=value")
            continue
        key, val = (x.strip() for x in line.split("=", 1))
        values[key.replace("-", "_")] = val
    if problems:
        raise UsageError("; ".join(problems))
    return values


def parse_config(argv) -> dict:
    """Merged, converted parameters for one run, including ``command``."""
    ns = build_parser().parse_args(argv)
    cmd = ns.command
    table = {**PARAMS[cmd], **COMMON}
    file_values = read_config_file(ns.config) if ns.config else {}
    problems = [f"unknown key {k!r}" for k in file_values if k not in table]
    cfg = {"command": cmd}
    for name, (conv, default, _) in table.items():
        raw = getattr(ns, name)
        if raw is None:
            raw = file_values.get(name)
        if raw is None:
            if default is REQUIRED:
                problems.append(f"missing required value {name!r}")
            cfg[name] = None if default is REQUIRED else default
            continue
        try:
            cfg[name] = conv(raw)
        except ValueError:
            problems.append(f"bad value for {name!r}: {raw!r}")
    if problems:
        raise UsageError("; ".join(problems))
    return cfg


# subcommands -----------------------------------------------------------------


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, np.generic):
        return _json_safe(x.item())
    return x


def run_vocab(cfg):
    corpus = read_corpus(cfg["corpus"], cfg["eow"])
    table = build_count_table(corpus)
    algo = cfg["algo"]
    merges = None
    if algo == "swe":
        seg = tokenizer.swe_optimal(corpus, table, cfg["k"])
    elif algo == "ebpe":
        seg, merges = tokenizer.ebpe_train(corpus, table, cfg["k"])
    else:
        seg, merges = tokenizer.bpe_train(corpus, cfg["k"], table)
    rows = tokenizer.vocab_rows(seg, table)
    if cfg["out"]:
        tokenizer.write_vocab(cfg["out"], rows)
    if cfg["merges"]:
        if merges is None:
            raise UsageError("--merges needs --algo ebpe or bpe")
        tokenizer.write_merges(cfg["merges"], merges)
    metrics = {
        "algo": algo,
        "k": seg.k,
        "path_cost": float(seg.path_cost),
        "path_cost_exact": str(seg.path_cost),
        "unique_tokens": len(rows),
        "word_count": corpus.word_count,
        "total_chars": corpus.total_chars,
    }
    if merges is not None:
        metrics["merges"] = len(merges.merges)
    return metrics, [{"token": t, "count": c, "rank": r} for t, c, r in rows]


def run_tokenize(cfg):
    text = Path(cfg["input"]).read_bytes().decode("utf-8")
    tokens = tokenizer.tokenize(text, tokenizer.read_merges(cfg["merges"]), cfg["eow"])
    if cfg["out"]:
        Path(cfg["out"]).write_text("".join(t + "\n" for t in tokens), encoding="utf-8")
    return {"n_tokens": len(tokens), "unique_tokens": len(set(tokens))}, [{"token": t} for t in tokens]


def run_cehpo(cfg):
    ranges = cehpo.Ranges(cfg["c_range"], cfg["d_range"], cfg["sf_range"], cfg["mc_range"])
    config = cehpo.CEConfig(
        M=cfg["M"], rho=cfg["rho"], alpha=cfg["alpha"], s=cfg["s"], l=cfg["l"],
        max_rounds=cfg["max_rounds"], seed=cfg["seed"],
    )
    config.validate()
    metrics = {}
    if cfg["objective"] == "planted":
        objective = cehpo.PlantedObjective(ranges, cfg["optimum"])
        metrics["grid_size"] = objective.grid_size()
    elif cfg["objective"] == "skipgram":
        from .skipgram import make_objective

        if not cfg["corpus"]:
            raise UsageError("the skipgram objective needs a corpus")
        objective = make_objective(read_corpus(cfg["corpus"]), epochs=cfg["epochs"])
    else:
        raise UsageError(f"unknown objective {cfg['objective']!r}")
    best, state = cehpo.run_cehpo(objective, ranges, config)
    metrics.update(
        rounds=state.round,
        best_F=state.log[-1]["best_F"],
        final_gamma=state.gamma_history[-1],
        **{f"best_{k}": v for k, v in asdict(best).items()},
    )
    if cfg["objective"] == "planted":
        metrics["recovered"] = objective.cell(best) == tuple(cfg["optimum"])
    return metrics, state.log


def _write_csv(path, matrix):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in matrix:
        w.writerow([repr(float(x)) if not isinstance(x, (bool, np.bool_)) else int(x) for x in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def run_posenc(cfg):
    n, d = cfg["n"], cfg["dim"]
    if n < 1 or cfg["heads"] < 1:
        raise UsageError("--n and --heads must be positive")
    if cfg["bias"] not in ("harmonic", "alibi", "none"):
        raise UsageError(f"unknown bias {cfg['bias']!r}")
    rng = substream(cfg["seed"], "posenc.inputs")
    inputs = posenc.AttentionInputs(rng.normal(size=(n, d)), rng.normal(size=(n, d)), rng.normal(size=(n, d)))
    slopes = posenc.alibi_slopes(cfg["heads"])
    W = posenc.factored_scores(inputs, slopes, cfg["head"], bias=cfg["bias"])
    if cfg["csv"]:
        _write_csv(cfg["csv"], W)
    identity_err = max(abs(posenc.harmonic_factor_sum(i) - i / (i + 1)) for i in range(1, n + 1))
    metrics = {
        "slopes": list(slopes.slopes),
        "harmonic_identity_max_error": identity_err,
        "weights_row_sum_max_error": float(np.abs(W.sum(axis=1) - 1).max()),
    }
    return metrics, [{"query": i, "weights": W[i, : i + 1].tolist()} for i in range(n)]


def run_prflash(cfg):
    try:
        model = prflash.BlockProbModel(cfg["n"], cfg["block"], cfg["block"], cfg["k"])
        params = prflash.SelectionParams(cfg["w"], cfg["s"], cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    mask = prflash.build_mask(model, params)
    rng = substream(cfg["seed"], "prflash.inputs")
    Q, K, V = (rng.normal(size=(cfg["n"], cfg["dim"])) for _ in range(3))
    _, stats = prflash.masked_attention(Q, K, V, mask)
    if cfg["keep_csv"]:
        _write_csv(cfg["keep_csv"], mask.keep)
    metrics = {
        **asdict(stats),
        "density": float(mask.keep.sum() / np.tril(np.ones_like(mask.keep)).sum()),
        "threshold": mask.threshold,
        "dropped_rows": list(mask.dropped_rows),
        "dropped_cols": list(mask.dropped_cols),
        "M_blocks": model.M_blocks,
    }
    rows = [
        {"block": i, "row_prob": prflash.row_prob(model, i), "col_prob": prflash.col_prob(model, i)}
        for i in range(model.M_blocks)
    ]
    return metrics, rows


def run_saq(cfg):
    try:
        params = saq.SAQParams(cfg["segment_size"], cfg["group_size"], cfg["dim"], cfg["bits"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if cfg["seq_len"] < 0 or cfg["prompt_len"] < 0:
        raise UsageError("--seq-len and --prompt-len must be non-negative")
    rows = saq.run_decode(params, cfg["prompt_len"], cfg["seq_len"], cfg["seed"])
    metrics = {
        "steps": len(rows),
        "max_abs_error": max((r["max_abs_error"] for r in rows), default=0.0),
        "mean_abs_error": float(np.mean([r["mean_abs_error"] for r in rows])) if rows else 0.0,
        "final_footprint_bits": rows[-1]["footprint_bits"] if rows else 0,
        "final_fp_bits": rows[-1]["fp_bits"] if rows else 0,
    }
    return metrics, rows


RUNNERS = {
    "vocab": run_vocab,
    "tokenize": run_tokenize,
    "cehpo": run_cehpo,
    "posenc": run_posenc,
    "prflash": run_prflash,
    "saq": run_saq,
}


def _report_path(cfg):
    if cfg.get("report"):
        return cfg["report"]
    if cfg["command"] in ("cehpo", "posenc", "prflash", "saq"):
        return cfg.get("out")
    return None


def render(report: dict) -> str:
    return json.dumps(_json_safe(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    cfg = None
    try:
        cfg = parse_config(argv)
        metrics, rows = RUNNERS[cfg["command"]](cfg)
        code = 0
    except UsageError as exc:
        metrics, rows, code = {"error": "UsageError", "message": str(exc)}, [], 2
    except ArtifactError as exc:
        metrics, rows, code = {"error": type(exc).__name__, "message": str(exc)}, [], 1
    except OSError as exc:
        metrics, rows, code = {"error": type(exc).__name__, "message": str(exc)}, [], 1

    command = {k: v for k, v in cfg.items()} if cfg else {"argv": list(argv)}
    report = {"schema_version": SCHEMA_VERSION, "command": command, "metrics": metrics, "rows": rows}
    text = render(report)
    path = _report_path(cfg) if cfg else None
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if code == 2:
        print(f"probopt: error: {metrics['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
