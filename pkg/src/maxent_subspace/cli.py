"""Command-line pipeline: generate -> solve/train -> cluster -> eval.

Every subcommand takes ``--config FILE`` (``key = value`` lines, ``#``
comments) and ``--set key=value`` overrides; dedicated flags win over both.
Results go to a ``key: value`` report that starts with the fully resolved
configuration, so a run can be repeated from its report alone.

Exit codes: 0 success, 2 bad arguments or configuration, 1 runtime failure.
"""

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .affinity import SHORT_NAMES, RegularizerSpec, SolverConfig, canonical_kind, solve_affinity
from .data import (
    SyntheticSpec,
    Dataset,
    export_heatmap,
    gen_images,
    gen_subspaces,
    load_dataset,
    load_labels,
    load_matrix,
    save_dataset,
    save_labels,
    save_matrix,
)
from .errors import DivergenceError, FormatError
from .metrics import block_diagnostics, evaluate
from .network import TABLE_SPECS, TrainConfig, fit, save_checkpoint, table_spec
from .spectral import spectral_cluster

logger = logging.getLogger(__name__)

COMMANDS = ("generate", "solve", "train", "cluster", "eval", "compare", "heatmap")


class ConfigError(ValueError):
    """Bad configuration value; maps to exit code 2."""

    def __init__(self, key, message, line=None):
        self.key = key
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{key}: {message}")


def _positive_real(key, text):
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(key, f"expected a positive real, got {text!r}") from None
    if not (np.isfinite(v) and v > 0):
        raise ConfigError(key, f"must be a positive real, got {text!r}")
    return v


def _nonneg_real(key, text):
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(key, f"expected a non-negative real, got {text!r}") from None
    if not (np.isfinite(v) and v >= 0):
        raise ConfigError(key, f"must be a non-negative real, got {text!r}")
    return v


def _int_at_least(lo):
    def parse(key, text):
        try:
            v = int(text, 10)
        except ValueError:
            raise ConfigError(key, f"expected an integer, got {text!r}") from None
        if v < lo:
            raise ConfigError(key, f"must be >= {lo}, got {v}")
        return v

    return parse


def _int_list(key, text):
    try:
        vals = tuple(int(t, 10) for t in text.split(","))
    except ValueError:
        raise ConfigError(key, f"expected integers separated by commas, got {text!r}") from None
    if any(v < 1 for v in vals):
        raise ConfigError(key, f"entries must be >= 1, got {text!r}")
    return vals


def _bool(key, text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected true or false, got {text!r}")


def _tri_bool(key, text):
    if text.strip().lower() == "auto":
        return None
    return _bool(key, text)


def _regularizer(key, text):
    try:
        return canonical_kind(text)
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def _reg_list(key, text):
    return tuple(_regularizer(key, t) for t in text.split(",") if t.strip())


def _choice(*options):
    def parse(key, text):
        t = text.strip().lower()
        if t not in options:
            raise ConfigError(key, f"must be one of {', '.join(options)}, got {text!r}")
        return t

    return parse


def _text(key, text):
    if not text:
        raise ConfigError(key, "must not be empty")
    return text


# key -> (parser, default)
SCHEMA = {
    "regularizer": (_regularizer, "me"),
    "regularizers": (_reg_list, "me,l1,fro,nuc"),
    "lambda1": (_positive_real, "1"),
    "lambda2": (_positive_real, "10"),
    "learning_rate": (_positive_real, "1e-4"),
    "epsilon": (_positive_real, "1e-12"),
    "steps": (_int_at_least(1), "20000"),
    "tolerance": (_nonneg_real, "1e-8"),
    "zero_diagonal": (_tri_bool, "auto"),
    "mode": (_choice("decoupled", "coupled"), "decoupled"),
    "pretrain": (_bool, "true"),
    "pretrain_steps": (_int_at_least(0), "300"),
    "finetune_steps": (_int_at_least(0), "300"),
    "network": (_choice(*TABLE_SPECS), "toy"),
    "k": (_int_at_least(2), "3"),
    "restarts": (_int_at_least(1), "10"),
    "seed": (_int_at_least(0), "0"),
    "dims": (_int_list, "3"),
    "samples": (_int_list, "40"),
    "ambient": (_int_at_least(1), "30"),
    "noise": (_nonneg_real, "0"),
    "images": (_bool, "false"),
    "side": (_int_at_least(1), "16"),
    "data": (_text, "data/"),
    "affinity": (_text, "C.mescmat"),
    "pred": (_text, "pred_labels.txt"),
    "labels": (_text, "auto"),
    "heatmap": (_text, "C.pgm"),
    "checkpoint": (_text, "none"),
    "report": (_text, "auto"),
}


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings: ``values`` holds parsed values, ``raw`` their text."""

    values: dict
    raw: dict

    def __getitem__(self, key):
        return self.values[key]

    def lines(self):
        return [f"config.{k}: {self.raw[k]}" for k in sorted(self.raw)]


def read_config_file(path):
    """Parse a ``key = value`` file into raw strings, keyed by name."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, "expected 'key = value'", lineno)
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key", lineno)
        if key in out:
            raise ConfigError(key, "duplicate key", lineno)
        try:
            SCHEMA[key][0](key, value)
        except ConfigError as exc:
            raise ConfigError(key, str(exc).split(": ", 1)[1], lineno) from None
        out[key] = value
    return out


def parse_config(path=None, overrides=None):
    """Defaults, then the config file, then ``overrides`` (raw strings)."""
    raw = {k: default for k, (_, default) in SCHEMA.items()}
    if path is not None:
        raw.update(read_config_file(path))
    for key, value in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        raw[key] = str(value)
    values = {k: SCHEMA[k][0](k, raw[k]) for k in SCHEMA}
    if values["regularizer"] is not None:
        raw["regularizer"] = SHORT_NAMES[values["regularizer"]]
    return RunConfig(values, raw)


# -- subcommands ----------------------------------------------------------------


def _labels_path(cfg):
    if cfg["labels"] != "auto":
        return Path(cfg["labels"])
    return Path(cfg["data"]) / "labels.txt"


def _synthetic_spec(cfg):
    k = cfg["k"]

    def per_block(key):
        v = cfg[key]
        if len(v) == 1:
            return v * k
        if len(v) != k:
            raise ConfigError(key, f"needs 1 or k={k} entries, got {len(v)}")
        return v

    try:
        return SyntheticSpec(per_block("dims"), per_block("samples"), cfg["ambient"], cfg["noise"], cfg["seed"])
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("dims", str(exc)) from None


def cmd_generate(cfg):
    spec = _synthetic_spec(cfg)
    if cfg["images"]:
        if cfg["side"] ** 2 < spec.ambient:
            raise ConfigError("side", f"side^2 must be >= ambient={spec.ambient}")
        ds = gen_images(spec, cfg["side"])
    else:
        Z, labels = gen_subspaces(spec)
        ds = Dataset(Z, labels, {"source": "synthetic-subspaces", "seed": spec.seed})
    ds.metadata.update(
        dims=",".join(map(str, spec.dims)),
        samples=",".join(map(str, spec.samples)),
        ambient=spec.ambient,
        noise_sigma=spec.noise_sigma,
    )
    save_dataset(cfg["data"], ds)
    n = ds.labels.size
    return {"samples": n, "clusters": spec.k, "data": cfg["data"]}, f"wrote {n} samples to {cfg['data']}"


def _solver_config(cfg):
    return SolverConfig(
        learning_rate=cfg["learning_rate"],
        max_iterations=cfg["steps"],
        relative_tolerance=cfg["tolerance"],
        epsilon=cfg["epsilon"],
        seed=cfg["seed"],
        zero_diagonal=cfg["zero_diagonal"],
    )


def _features(cfg):
    return load_dataset(cfg["data"], "features").X


def cmd_solve(cfg):
    Z = _features(cfg)
    reg = RegularizerSpec(cfg["regularizer"], cfg["lambda1"], cfg["lambda2"])
    rep = solve_affinity(Z, reg, _solver_config(cfg))
    save_matrix(cfg["affinity"], rep.C)
    out = {
        "iterations": rep.iterations,
        "converged": rep.converged,
        "final_objective": repr(float(rep.objective_trace[-1])),
        "affinity": cfg["affinity"],
    }
    return out, f"{SHORT_NAMES[reg.kind]}: {rep.iterations} iterations, objective {rep.objective_trace[-1]:.6g}"


def cmd_train(cfg):
    ds = load_dataset(cfg["data"], "images")
    spec = table_spec(cfg["network"], ds.X.shape[2:])
    tc = TrainConfig(
        learning_rate=cfg["learning_rate"],
        pretrain_steps=cfg["pretrain_steps"],
        finetune_steps=cfg["finetune_steps"],
        lambda1=cfg["lambda1"],
        lambda2=cfg["lambda2"],
        mode=cfg["mode"],
        pretrain=cfg["pretrain"],
        seed=cfg["seed"],
        regularizer=cfg["regularizer"],
        epsilon=cfg["epsilon"],
        zero_diagonal=cfg["zero_diagonal"],
    )
    res = fit(ds.X, spec, tc)
    save_matrix(cfg["affinity"], res.C)
    if cfg["checkpoint"] != "none":
        save_checkpoint(cfg["checkpoint"], res.params)
    out = {"affinity": cfg["affinity"], "latent_dim": spec.latent_dim}
    if len(res.pretrain_history):
        out["pretrain_initial_loss"] = repr(res.pretrain_history.total[0])
        out["pretrain_final_loss"] = repr(res.pretrain_history.total[-1])
    h = res.finetune_history
    if len(h):
        out["finetune_initial_loss"] = repr(h.total[0])
        out["finetune_final_loss"] = repr(h.total[-1])
        out["final_reconstruction"] = repr(h.reconstruction[-1])
        out["final_self_expressive"] = repr(h.self_expressive[-1])
        out["final_regularizer"] = repr(h.regularizer[-1])
    return out, f"trained {cfg['network']} ({cfg['mode']}), wrote {cfg['affinity']}"


def cmd_cluster(cfg):
    C = load_matrix(cfg["affinity"])
    res = spectral_cluster(C, cfg["k"], cfg["seed"], cfg["restarts"])
    save_labels(cfg["pred"], res.labels)
    out = {
        "k": cfg["k"],
        "inertia": repr(res.inertia),
        "isolated_vertices": ",".join(map(str, res.isolated)) or "none",
        "pred": cfg["pred"],
    }
    return out, f"clustered {res.labels.size} samples into {cfg['k']} groups"


def cmd_eval(cfg):
    y = load_labels(_labels_path(cfg))
    y_pred = load_labels(cfg["pred"])
    m = evaluate(y, y_pred)
    out = {
        "acc": f"{m.acc_percent:.6f}",
        "nmi": f"{m.nmi_percent:.6f}",
        "homogeneity": f"{m.homogeneity:.6f}",
        "completeness": f"{m.completeness:.6f}",
    }
    if Path(cfg["affinity"]).exists():
        d = block_diagnostics(load_matrix(cfg["affinity"]), y)
        out.update(_diag_fields(d))
    return out, f"ACC {m.acc_percent:.2f}  NMI {m.nmi_percent:.2f}"


def _diag_fields(d):
    return {
        "mean_block_variance": f"{d.mean_variance:.6e}",
        "block_variances": ",".join(f"{v:.6e}" for v in d.block_variances),
        "off_block_mass": f"{d.off_block_mass:.6f}",
        "cosine_to_ideal": f"{d.cosine_to_ideal:.6f}",
    }


def cmd_compare(cfg):
    Z = _features(cfg)
    y = load_labels(_labels_path(cfg))
    header = ["reg", "iterations", "mean_var", "block_vars", "off_block", "cosine", "acc", "nmi"]
    rows = []
    for kind in cfg["regularizers"]:
        reg = RegularizerSpec(kind, cfg["lambda1"], cfg["lambda2"])
        rep = solve_affinity(Z, reg, _solver_config(cfg))
        d = block_diagnostics(rep.C, y)
        m = evaluate(y, spectral_cluster(rep.C, cfg["k"], cfg["seed"], cfg["restarts"]).labels)
        rows.append([
            SHORT_NAMES[kind],
            str(rep.iterations),
            f"{d.mean_variance:.6e}",
            ",".join(f"{v:.4e}" for v in d.block_variances),
            f"{d.off_block_mass:.6f}",
            f"{d.cosine_to_ideal:.6f}",
            f"{m.acc_percent:.2f}",
            f"{m.nmi_percent:.2f}",
        ])
    widths = [max(len(r[i]) for r in rows + [header]) for i in range(len(header))]
    table = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header] + rows]
    return {"regularizers": len(rows), "table": table}, "\n".join(table)


def cmd_heatmap(cfg):
    export_heatmap(load_matrix(cfg["affinity"]), cfg["heatmap"])
    return {"heatmap": cfg["heatmap"]}, f"wrote {cfg['heatmap']}"


HANDLERS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "train": cmd_train,
    "cluster": cmd_cluster,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "heatmap": cmd_heatmap,
}

# per-command meaning of --in / --out
IN_OUT = {
    "generate": (None, "data"),
    "solve": ("data", "affinity"),
    "train": ("data", "affinity"),
    "cluster": ("affinity", "pred"),
    "eval": ("pred", None),
    "compare": ("data", None),
    "heatmap": ("affinity", "heatmap"),
}

FLAG_KEYS = {
    "reg": "regularizer",
    "regs": "regularizers",
    "lambda1": "lambda1",
    "lambda2": "lambda2",
    "lr": "learning_rate",
    "epsilon": "epsilon",
    "steps": "steps",
    "tol": "tolerance",
    "mode": "mode",
    "pretrain_steps": "pretrain_steps",
    "finetune_steps": "finetune_steps",
    "network": "network",
    "k": "k",
    "seed": "seed",
    "labels": "labels",
    "pred": "pred",
    "affinity": "affinity",
    "checkpoint": "checkpoint",
    "report": "report",
}


def write_report(path, command, cfg, results):
    lines = [f"command: {command}", f"version: {__version__}"] + cfg.lines()
    for key, value in results.items():
        if isinstance(value, list):
            lines.append(f"{key}:")
            lines += [f"  {row}" for row in value]
        else:
            lines.append(f"{key}: {value}")
    Path(path).write_text("\n".join(lines) + "\n")


def build_parser():
    parser = argparse.ArgumentParser(prog="maxent-subspace", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", "--spec", dest="config", help="key = value settings file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        if IN_OUT[name][0]:
            p.add_argument("--in", dest="in_path")
        if IN_OUT[name][1]:
            p.add_argument("--out", dest="out_path")
        for flag in FLAG_KEYS:
            p.add_argument("--" + flag.replace("_", "-"), dest=flag)
        p.add_argument("--no-pretrain", dest="no_pretrain", action="store_true")
    return parser


def _overrides(args):
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "--set expects KEY=VALUE")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    src, dst = IN_OUT[args.command]
    if src and args.in_path is not None:
        out[src] = args.in_path
    if dst and getattr(args, "out_path", None) is not None:
        out[dst] = args.out_path
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag)
        if value is not None:
            out[key] = value
    if args.no_pretrain:
        out["pretrain"] = "false"
    return out


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        cfg = parse_config(args.config, _overrides(args))
        results, summary = HANDLERS[args.command](cfg)
        report = cfg["report"]
        if report == "auto":
            report = f"{args.command}_report.txt"
        write_report(report, args.command, cfg, results)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, FormatError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


def main():
    sys.exit(run())
