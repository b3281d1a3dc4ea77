"""Command-line entry point.

Subcommands: ingest, train, generate, eval, audit, make-synthetic.
Configuration is a flat INI file (one section per area) and every key
can be overridden on the command line as ``--section.key value``. Each
run writes a reproducibility manifest (resolved config, seed, digests)
next to its outputs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import AtomVocab, GraphShape, TrainConfig
from .datasets import load_pairs, make_synthetic_pairs, save_pairs
from .errors import (
    NonFiniteLossError,
    ParameterRangeError,
    TargetFlowError,
)
from .metrics import MetricsReport, evaluate
from .model import build_model
from .sampling import GenerationRequest, generate, validity_correction
from .smiles import parse_smiles, write_smiles
from .training import audit_gradients, load_checkpoint, prepare_records, save_checkpoint, train
from .metrics import check_valence, circular_fingerprint, tanimoto


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_CONFIG_SCHEMA = {
    "graph": {"max_atoms": int, "vocab": str, "bond_channels": int},
    "train": {
        "learning_rate": float, "batch_size": int, "epochs": int, "seed": int,
        "space_lambda": float, "kernel_t": float, "coupling_blocks": int,
        "noise_scale": float, "align_weight": float, "unif_weight": float,
        "logdet_weight": float, "grad_clip": float, "kmer_size": int,
        "encoder_hidden": int, "conditioner_hidden": int,
        "adam_beta1": float, "adam_beta2": float, "adam_eps": float,
        "max_seq_len": int,
    },
    "generate": {"samples": int, "seed": int, "space_lambda": str},
    "eval": {"radius": int, "width": int},
}

_DEFAULTS = {
    "graph": {"max_atoms": 9,
              "vocab": ",".join(AtomVocab().symbols),
              "bond_channels": 3},
    "generate": {"samples": 10, "seed": 0, "space_lambda": ""},
    "eval": {"radius": 2, "width": 2048},
}


@dataclass
class RunConfig:
    """Fully resolved configuration, echoed into every manifest."""

    values: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def resolve(cls, config_path: str | None, overrides: list[str]) -> "RunConfig":
        values = {section: dict(defaults) for section, defaults in _DEFAULTS.items()}
        values["train"] = TrainConfig().as_dict()
        if config_path:
            ini = configparser.ConfigParser()
            read = ini.read(config_path)
            if not read:
                raise ParameterRangeError(f"config file {config_path} not readable")
            for section in ini.sections():
                if section not in _CONFIG_SCHEMA:
                    raise UsageError(f"unknown config section [{section}]")
                for key, raw in ini[section].items():
                    values.setdefault(section, {})[key] = raw
        i = 0
        while i < len(overrides):
            flag = overrides[i]
            if not flag.startswith("--") or "." not in flag:
                raise UsageError(f"unrecognized argument {flag!r} "
                                 "(overrides look like --section.key value)")
            if i + 1 >= len(overrides):
                raise UsageError(f"missing value for {flag!r}")
            section, key = flag[2:].split(".", 1)
            values.setdefault(section, {})[key] = overrides[i + 1]
            i += 2
        # Coerce strings from INI/flags to their schema types.
        for section, keys in list(values.items()):
            schema = _CONFIG_SCHEMA.get(section, {})
            for key, raw in list(keys.items()):
                if key not in schema:
                    raise UsageError(f"unknown config key {section}.{key}")
                if isinstance(raw, str) and schema[key] is not str:
                    try:
                        keys[key] = schema[key](raw)
                    except ValueError as exc:
                        raise UsageError(f"bad value for {section}.{key}: {raw!r}") from exc
        return cls(values)

    def graph_shape(self) -> GraphShape:
        g = self.values["graph"]
        return GraphShape(max_atoms=g["max_atoms"],
                          vocab=AtomVocab(tuple(s.strip() for s in g["vocab"].split(","))),
                          bond_channels=g["bond_channels"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.values["train"])

    def section(self, name: str) -> dict:
        return self.values[name]


def write_manifest(out_dir: Path, command: str, cfg: RunConfig,
                   outputs: list[str], extra: dict | None = None):
    payload = {
        "command": command,
        "argv": sys.argv[1:],
        "config": cfg.values,
        "seed": cfg.values["train"]["seed"],
        "outputs": sorted(outputs),
    }
    if extra:
        payload.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def emit_density_data(report: MetricsReport, path):
    """Two-column CSV (metric_name, value) of per-molecule rows, for
    external density plotting. Values are emitted at full precision."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("metric_name,value\n")
        for row in report.rows:
            if row.valid:
                fh.write(f"nn_tanimoto,{row.nn_tanimoto:.17g}\n")


def _read_molecules(path, shape):
    """SMILES-per-line file, or a 3-column TSV pair file."""
    text = Path(path).read_text(encoding="utf-8")
    mols, smiles = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        smi = line.split("\t")[2] if line.count("\t") >= 2 else line
        smiles.append(smi)
        mols.append(parse_smiles(smi, shape))
    return mols, smiles


def cmd_ingest(args, cfg: RunConfig) -> int:
    shape = cfg.graph_shape()
    ds = load_pairs(args.data, shape)
    sizes = ds.split_sizes()
    print(f"records: {len(ds)}")
    print(f"unique targets: {len(ds.unique_targets())}")
    for name, count in sizes.items():
        print(f"split {name}: {count}")
    if args.out_dir:
        write_manifest(Path(args.out_dir), "ingest", cfg, [],
                       extra={"records": len(ds), "splits": sizes})
    return 0


def cmd_make_synthetic(args, cfg: RunConfig) -> int:
    shape = cfg.graph_shape()
    ds = make_synthetic_pairs(args.pairs, args.seed, shape)
    save_pairs(ds, args.out)
    print(f"wrote {len(ds)} pairs ({len(ds.unique_targets())} targets) to {args.out}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    shape = cfg.graph_shape()
    tcfg = cfg.train_config()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = load_pairs(args.data, shape)
    records = ds.split("train")
    if not records:
        records = ds.records
    model = build_model(shape, tcfg)
    data = prepare_records(records, shape, model)
    print(f"training on {len(data)} pairs "
          f"({len(set(data.target_ids))} targets), {model.n_parameters} parameters")

    loss_rows = []

    def on_epoch(epoch, report):
        loss_rows.append((epoch, report.align, report.unif, report.total))
        if (epoch + 1) % max(1, tcfg.epochs // 10) == 0:
            print(f"epoch {epoch + 1:4d}  align {report.align:.4f}  "
                  f"unif {report.unif:.4f}  total {report.total:.4f}")

    train(model, data, tcfg, on_epoch=on_epoch)

    ckpt_path = out_dir / "model.sflw"
    digest = save_checkpoint(model, ckpt_path)
    loss_csv = out_dir / "loss.csv"
    with open(loss_csv, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,align,unif,total\n")
        for row in loss_rows:
            fh.write(f"{row[0]},{row[1]:.17g},{row[2]:.17g},{row[3]:.17g}\n")
    write_manifest(out_dir, "train", cfg, [ckpt_path.name, loss_csv.name],
                   extra={"checkpoint_digest": digest})
    print(f"checkpoint {ckpt_path} (sha256 {digest[:16]}...)")
    return 0


def cmd_generate(args, cfg: RunConfig) -> int:
    if not args.target and not args.data:
        raise UsageError("generate needs --target SEQ or --data FILE")
    model = load_checkpoint(args.checkpoint)
    gset = cfg.section("generate")
    n = args.samples if args.samples is not None else gset["samples"]
    lam = None
    if args.space_lambda is not None:
        lam = args.space_lambda
    elif gset["space_lambda"] != "":
        lam = float(gset["space_lambda"])

    targets: list[tuple[str, str]] = []
    if args.target:
        targets.append(("cli-target", args.target))
    if args.data:
        ds = load_pairs(args.data, model.shape)
        split = args.split or "train"
        seen = {}
        for r in (ds.split(split) if split != "all" else ds.records):
            seen.setdefault(r.sequence, r.target_id)
        targets.extend((tid, seq) for seq, tid in seen.items())
    if not targets:
        raise UsageError(f"no targets found in the requested split")

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    seed0 = args.seed if args.seed is not None else gset["seed"]
    n_written = 0
    raw_valid = 0
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for ti, (tid, seq) in enumerate(targets):
            req = GenerationRequest(sequence=seq, n_samples=n, lam=lam,
                                    seed=seed0 + ti)
            raw = generate(model, req, correct=False)
            raw_valid += sum(check_valence(g) for g in raw)
            for si, g in enumerate(raw):
                fixed = validity_correction(g)
                smi = write_smiles(fixed) if fixed.n_heavy else ""
                if args.tsv:
                    fh.write(f"{tid}\t{si}\t{smi}\n")
                else:
                    fh.write(smi + "\n")
                n_written += 1
    print(f"wrote {n_written} molecules to {out_path} "
          f"(validity before correction: {100.0 * raw_valid / max(n_written, 1):.1f}%)")
    ck = hashlib.sha256(Path(args.checkpoint).read_bytes()).hexdigest()
    write_manifest(out_path.parent, "generate", cfg, [out_path.name],
                   extra={"checkpoint_digest": ck,
                          "raw_validity_pct": 100.0 * raw_valid / max(n_written, 1)})
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    shape = cfg.graph_shape()
    eset = cfg.section("eval")
    generated, gen_smiles = _read_molecules(args.generated, shape)
    train_mols, train_smiles = _read_molecules(args.train, shape)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    report = evaluate(generated, train_mols, radius=eset["radius"],
                      width=eset["width"],
                      smiles_of=lambda g: write_smiles(g) if g.is_connected() else "")
    (out_dir / "metrics.json").write_text(report.to_json() + "\n", encoding="utf-8")
    report.write_rows_csv(out_dir / "molecules.csv")
    emit_density_data(report, out_dir / "density.csv")
    outputs = ["metrics.json", "molecules.csv", "density.csv"]

    if args.pairwise:
        # Same-index comparison against the reference file; the
        # cross-validation oracle consumes this CSV.
        with open(out_dir / "pairwise.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("index,smiles,reference_smiles,primary_valid,primary_tanimoto\n")
            for i, g in enumerate(generated):
                if i >= len(train_mols):
                    break
                fp_a = circular_fingerprint(g, eset["radius"], eset["width"])
                fp_b = circular_fingerprint(train_mols[i], eset["radius"], eset["width"])
                fh.write(f"{i},{gen_smiles[i]},{train_smiles[i]},"
                         f"{int(check_valence(g))},{tanimoto(fp_a, fp_b):.17g}\n")
        outputs.append("pairwise.csv")

    write_manifest(out_dir, "eval", cfg, outputs)
    print(report.to_json())
    return 0


def cmd_audit(args, cfg: RunConfig) -> int:
    shape = cfg.graph_shape()
    tcfg = cfg.train_config()
    model = build_model(shape, tcfg)
    if model.n_parameters > 5000:
        print(f"warning: auditing {model.n_parameters} parameters will be slow "
              "(intended for tiny configurations)", file=sys.stderr)
    ds = make_synthetic_pairs(args.pairs, tcfg.seed, shape)
    data = prepare_records(ds.records, shape, model)
    idx = np.arange(min(tcfg.batch_size, len(data)))
    report = audit_gradients(model, data.take(idx), tcfg,
                             tolerance=args.tolerance)
    print(report.summary())
    if args.out_dir:
        write_manifest(Path(args.out_dir), "audit", cfg, [],
                       extra={"passed": report.passed,
                              "max_rel_err": report.max_rel_err,
                              "n_checked": report.n_checked})
    return 0 if report.passed else 3


def build_parser() -> _Parser:
    p = _Parser(prog="targetflow",
                description="conditional molecular graph generation toolkit")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads (only 1 is supported; kept for "
                        "manifest reproducibility)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="validate and summarize a TSV pair dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--out-dir")

    s = sub.add_parser("make-synthetic", help="write the deterministic synthetic dataset")
    s.add_argument("--pairs", type=int, default=64)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--out", required=True)

    s = sub.add_parser("train", help="train a model and write a checkpoint")
    s.add_argument("--data", required=True)
    s.add_argument("--out-dir", required=True)

    s = sub.add_parser("generate", help="generate molecules from a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--target", help="amino-acid sequence")
    s.add_argument("--data", help="TSV dataset; generates per unique target")
    s.add_argument("--split", choices=["train", "valid", "test", "all"])
    s.add_argument("--samples", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--space-lambda", type=float)
    s.add_argument("--tsv", action="store_true",
                   help="write target_id/sample_index/SMILES TSV")
    s.add_argument("--out", required=True)

    s = sub.add_parser("eval", help="compute generative metrics")
    s.add_argument("--generated", required=True)
    s.add_argument("--train", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--pairwise", action="store_true",
                   help="also emit same-index Tanimoto vs the reference file")

    s = sub.add_parser("audit", help="finite-difference gradient audit")
    s.add_argument("--tolerance", type=float, default=1e-3)
    s.add_argument("--pairs", type=int, default=16)
    s.add_argument("--out-dir")
    return p


_COMMANDS = {
    "ingest": cmd_ingest,
    "make-synthetic": cmd_make_synthetic,
    "train": cmd_train,
    "generate": cmd_generate,
    "eval": cmd_eval,
    "audit": cmd_audit,
}


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args, unknown = parser.parse_known_args(argv)
        cfg = RunConfig.resolve(args.config, unknown)
        return _COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NonFiniteLossError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except TargetFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
