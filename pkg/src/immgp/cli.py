"""Command-line interface: generate | fit | predict | eval.

Also owns all file formats:

* datasets: CSV with header ``x0..x{D-1},y0..y{M-1}``, 17 significant
  digits per value (lossless for 64-bit floats)
* chains: line-delimited JSON, a schema header line followed by one
  self-describing record per retained sample
* diagnostics: CSV, one row per sweep
* metrics and manifests: JSON

Exit codes: 0 success, 2 invalid configuration, 3 I/O or schema problems,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import datagen
from .errors import (
    BadSplit,
    ImmgpError,
    InvalidConfig,
    LengthMismatch,
    ParseError,
    SchemaMismatch,
)
from .gibbs import Chain, SamplerConfig, SweepDiagnostics, run
from .model import Component, Dataset, Hyperparams, MixtureState
from .predict import MODES, predict_many

CHAIN_SCHEMA_VERSION = 1
_FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class RunConfig:
    """Flat run configuration; file values are overridden by CLI flags."""

    sweeps: int = 4000
    burn_in: int = 2000
    seed: int = 0
    hmc_step: float = 0.1
    hmc_leapfrog: int = 10
    mh_tries: int = 5
    alpha_scale: float = 0.5
    mode: str = "immgp1"
    mc_draws: int = 100
    preset: str = "data"

    def validate(self) -> None:
        if self.sweeps < 1 or not 0 <= self.burn_in < self.sweeps:
            raise InvalidConfig(
                f"need 0 <= burn_in < sweeps, got burn_in={self.burn_in}, sweeps={self.sweeps}"
            )
        if self.hmc_step <= 0 or self.hmc_leapfrog < 1:
            raise InvalidConfig("hmc_step must be > 0 and hmc_leapfrog >= 1")
        if self.mh_tries < 1:
            raise InvalidConfig("mh_tries must be >= 1")
        if self.alpha_scale <= 0:
            raise InvalidConfig("alpha_scale must be > 0")
        if self.mode not in MODES:
            raise InvalidConfig(f"mode must be one of {MODES}")
        if self.mc_draws < 1:
            raise InvalidConfig("mc_draws must be >= 1")
        if self.preset not in ("data", "synthetic"):
            raise InvalidConfig("preset must be 'data' or 'synthetic'")

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            n_sweeps=self.sweeps,
            burn_in=self.burn_in,
            hmc_step=self.hmc_step,
            hmc_leapfrog=self.hmc_leapfrog,
            mh_tries_per_param=self.mh_tries,
            alpha_proposal_scale=self.alpha_scale,
            seed=self.seed,
        )


def load_config_file(path: str | Path) -> dict:
    """Parse a flat KEY=VALUE config file; unknown keys are rejected."""
    fields = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"{path}:{lineno}: expected KEY=VALUE, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in fields:
            raise InvalidConfig(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if fields[key] in (int, "int"):
                out[key] = int(value)
            elif fields[key] in (float, "float"):
                out[key] = float(value)
            else:
                out[key] = value
        except ValueError as exc:
            raise InvalidConfig(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return out


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, config file, and CLI flags (flags win)."""
    values: dict = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for key in (f.name for f in dataclasses.fields(RunConfig)):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Dataset CSV
# ---------------------------------------------------------------------------


def write_dataset_csv(path: str | Path, ds: Dataset) -> None:
    D, M = ds.input_dim, ds.output_dim
    header = [f"x{d}" for d in range(D)] + [f"y{m}" for m in range(M)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n):
            row = [_FLOAT_FMT % v for v in ds.X[i]] + [_FLOAT_FMT % v for v in ds.Y[i]]
            writer.writerow(row)


def read_dataset_csv(path: str | Path) -> Dataset:
    """Parse a dataset CSV; NaN/Inf and malformed cells raise ParseError
    with the offending row and column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        D = sum(1 for h in header if h.startswith("x"))
        M = sum(1 for h in header if h.startswith("y"))
        expected = [f"x{d}" for d in range(D)] + [f"y{m}" for m in range(M)]
        if header != expected or M == 0 or D == 0:
            raise ParseError(f"{path}: bad header {header!r}, expected x0..y{{M-1}}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != D + M:
                raise ParseError(
                    f"{path}: row {lineno}: expected {D + M} fields, got {len(row)}"
                )
            vals = []
            for col, cell in zip(expected, row):
                try:
                    v = float(cell)
                except ValueError as exc:
                    raise ParseError(
                        f"{path}: row {lineno}, column {col}: {cell!r} is not a number"
                    ) from exc
                if not math.isfinite(v):
                    raise ParseError(
                        f"{path}: row {lineno}, column {col}: non-finite value {cell!r}"
                    )
                vals.append(v)
            rows.append(vals)
    if not rows:
        return Dataset(X=np.zeros((0, D)), Y=np.zeros((0, M)))
    arr = np.array(rows)
    return Dataset(X=arr[:, :D], Y=arr[:, D:])


def write_predictions_csv(path: str | Path, preds: np.ndarray) -> None:
    M = preds.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{m}" for m in range(M)])
        for row in preds:
            writer.writerow([_FLOAT_FMT % v for v in row])


def read_predictions_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        M = len(header)
        if header != [f"f{m}" for m in range(M)]:
            raise ParseError(f"{path}: bad header {header!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(f"{path}: row {lineno}: {exc}") from exc
            if len(vals) != M or not all(math.isfinite(v) for v in vals):
                raise ParseError(f"{path}: row {lineno}: bad row")
            rows.append(vals)
    return np.array(rows) if rows else np.zeros((0, M))


# ---------------------------------------------------------------------------
# Chain persistence (line-delimited JSON)
# ---------------------------------------------------------------------------


def _component_to_json(c: Component) -> dict:
    return {
        "mu": c.mu.tolist(),
        "R": c.R.tolist(),
        "sigma0": c.sigma0,
        "K": c.K.tolist(),
        "w": c.w.tolist(),
        "noise": c.noise.tolist(),
    }


def _component_from_json(d: dict) -> Component:
    return Component(
        mu=np.array(d["mu"], dtype=float),
        R=np.array(d["R"], dtype=float),
        sigma0=float(d["sigma0"]),
        K=np.array(d["K"], dtype=float),
        w=np.array(d["w"], dtype=float),
        noise=np.array(d["noise"], dtype=float),
    )


def write_chain(path: str | Path, chain: Chain, meta: dict) -> None:
    """One header line plus one JSON record per retained sample; outputs of
    each component follow the package-wide output-major stacking."""
    header = {"schema_version": CHAIN_SCHEMA_VERSION, "kind": "immgp-chain"}
    header.update(meta)
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for state in chain.samples:
            rec = {
                "alpha": state.alpha,
                "assignments": state.assignments.tolist(),
                "components": {
                    str(r): _component_to_json(c) for r, c in state.components.items()
                },
            }
            fh.write(json.dumps(rec) + "\n")


def read_chain(path: str | Path) -> tuple[dict, list[MixtureState]]:
    with open(path) as fh:
        first = fh.readline()
        if not first:
            raise ParseError(f"{path}: empty chain file")
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line 1: {exc}") from exc
        if header.get("kind") != "immgp-chain":
            raise SchemaMismatch(f"{path}: not a chain file (kind={header.get('kind')!r})")
        if header.get("schema_version") != CHAIN_SCHEMA_VERSION:
            raise SchemaMismatch(
                f"{path}: schema_version {header.get('schema_version')} unsupported"
            )
        samples = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            samples.append(
                MixtureState(
                    alpha=float(rec["alpha"]),
                    assignments=np.array(rec["assignments"], dtype=int),
                    components={
                        int(r): _component_from_json(c)
                        for r, c in rec["components"].items()
                    },
                )
            )
    return header, samples


def write_diagnostics_csv(path: str | Path, diags: list[SweepDiagnostics]) -> None:
    fields = [f.name for f in dataclasses.fields(SweepDiagnostics)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for d in diags:
            writer.writerow([getattr(d, name) for name in fields])


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def rmse_pooled(pred: np.ndarray, truth: np.ndarray) -> float:
    """Square root of the mean squared error across all rows and outputs."""
    if pred.shape != truth.shape:
        raise LengthMismatch(f"predictions {pred.shape} vs truth {truth.shape}")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def rmse_per_output(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    if pred.shape != truth.shape:
        raise LengthMismatch(f"predictions {pred.shape} vs truth {truth.shape}")
    return np.sqrt(np.mean((pred - truth) ** 2, axis=0))


def mean_baseline(train: Dataset, test_X: np.ndarray) -> np.ndarray:
    """Predict the training mean of each output for every test row."""
    return np.tile(train.Y.mean(axis=0), (test_X.shape[0], 1))


def linear_baseline(train: Dataset, test_X: np.ndarray) -> np.ndarray:
    """Per-output least squares with intercept, fit on the training split."""
    A = np.hstack([np.ones((train.n, 1)), train.X])
    coef, *_ = np.linalg.lstsq(A, train.Y, rcond=None)
    B = np.hstack([np.ones((test_X.shape[0], 1)), test_X])
    return B @ coef


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    out = _outdir(args)
    hp = datagen.generation_preset(args.d, args.m)
    gs = datagen.generate(args.n, args.d, args.m, hp, seed=args.seed)
    train, test, test_truth = datagen.split(gs, args.train_size, seed=args.seed + 1)
    write_dataset_csv(out / "train.csv", train)
    write_dataset_csv(out / "test.csv", test)
    truth = {
        "seed": args.seed,
        "alpha": gs.true_state.alpha,
        "assignments": gs.true_assignments.tolist(),
        "test_assignments": test_truth.tolist(),
        "components": {
            str(r): _component_to_json(c) for r, c in gs.true_state.components.items()
        },
    }
    (out / "truth.json").write_text(json.dumps(truth, indent=2) + "\n")
    manifest = {
        "command": "generate",
        "n": args.n,
        "d": args.d,
        "m": args.m,
        "train_size": args.train_size,
        "seed": args.seed,
        "preset": "synthetic",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {out / 'train.csv'} ({train.n} rows), {out / 'test.csv'} ({test.n} rows)")
    return 0


def _hyperparams_for(cfg: RunConfig, train: Dataset) -> Hyperparams:
    if cfg.preset == "synthetic":
        return datagen.generation_preset(train.input_dim, train.output_dim)
    return datagen.inference_preset(train.X, train.output_dim)


def cmd_fit(args) -> int:
    cfg = build_run_config(args)
    train = read_dataset_csv(args.train)
    if train.n == 0:
        raise InvalidConfig(f"{args.train}: cannot fit an empty dataset")
    hp = _hyperparams_for(cfg, train)
    out = _outdir(args)
    n_chains = args.chains
    for j in range(n_chains):
        scfg = cfg.sampler_config()
        scfg.seed = cfg.seed + j
        chain = run(train, hp, scfg)
        suffix = "" if n_chains == 1 else f"_{j}"
        meta = {
            "n": train.n,
            "d": train.input_dim,
            "m": train.output_dim,
            "n_sweeps": scfg.n_sweeps,
            "burn_in": scfg.burn_in,
            "seed": scfg.seed,
            "preset": cfg.preset,
        }
        write_chain(out / f"chain{suffix}.jsonl", chain, meta)
        write_diagnostics_csv(out / f"diagnostics{suffix}.csv", chain.diagnostics)
        print(
            f"chain{suffix}: {len(chain.samples)} retained samples, "
            f"final components={chain.diagnostics[-1].n_components}"
        )
    return 0


def cmd_predict(args) -> int:
    cfg = build_run_config(args)
    header, samples = read_chain(args.chain)
    train = read_dataset_csv(args.train)
    test = read_dataset_csv(args.test)
    if (header["d"], header["m"]) != (train.input_dim, train.output_dim):
        raise SchemaMismatch(
            f"chain was fit on d={header['d']}, m={header['m']} but training data "
            f"has d={train.input_dim}, m={train.output_dim}"
        )
    if header["n"] != train.n:
        raise SchemaMismatch(
            f"chain was fit on {header['n']} rows but training data has {train.n}"
        )
    if test.input_dim != train.input_dim:
        raise SchemaMismatch(
            f"test data has d={test.input_dim}, expected {train.input_dim}"
        )
    out = _outdir(args)
    if test.n == 0:
        preds = np.zeros((0, train.output_dim))
    else:
        hp = _hyperparams_for(cfg, train)
        from .distributions import make_rng

        preds = predict_many(
            test.X,
            Chain(samples=samples, diagnostics=[]),
            train,
            hp,
            mode=cfg.mode,
            mc_draws=cfg.mc_draws,
            rng=make_rng(cfg.seed),
        )
    write_predictions_csv(out / "predictions.csv", preds)
    print(f"wrote {out / 'predictions.csv'} ({preds.shape[0]} rows, mode={cfg.mode})")
    return 0


def cmd_eval(args) -> int:
    preds = read_predictions_csv(args.predictions)
    test = read_dataset_csv(args.test)
    train = read_dataset_csv(args.train)
    if preds.shape[0] != test.n:
        raise LengthMismatch(
            f"{preds.shape[0]} predictions for {test.n} test rows"
        )
    metrics = {
        "n_test": test.n,
        "rmse": rmse_pooled(preds, test.Y),
        "rmse_per_output": rmse_per_output(preds, test.Y).tolist(),
        "baselines": {},
    }
    for name, fn in (("global_mean", mean_baseline), ("linear", linear_baseline)):
        base = fn(train, test.X)
        metrics["baselines"][name] = {
            "rmse": rmse_pooled(base, test.Y),
            "rmse_per_output": rmse_per_output(base, test.Y).tolist(),
        }
    out = _outdir(args)
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    print(json.dumps(metrics, indent=2))
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="immgp",
        description="Mixture-of-GP regression: generate, fit, predict, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a synthetic dataset and split it")
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--d", type=int, default=2)
    g.add_argument("--m", type=int, default=2)
    g.add_argument("--train-size", dest="train_size", type=int, default=400)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=".")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="run the sampler on a training CSV")
    f.add_argument("--train", required=True)
    f.add_argument("--out", default=".")
    f.add_argument("--config", default=None)
    f.add_argument("--sweeps", dest="sweeps", type=int, default=None)
    f.add_argument("--burn-in", dest="burn_in", type=int, default=None)
    f.add_argument("--seed", type=int, default=None)
    f.add_argument("--hmc-step", dest="hmc_step", type=float, default=None)
    f.add_argument("--hmc-leapfrog", dest="hmc_leapfrog", type=int, default=None)
    f.add_argument("--mh-tries", dest="mh_tries", type=int, default=None)
    f.add_argument("--alpha-scale", dest="alpha_scale", type=float, default=None)
    f.add_argument("--preset", choices=("data", "synthetic"), default=None)
    f.add_argument("--chains", type=int, default=1)
    f.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict test outputs from a chain file")
    p.add_argument("--chain", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--config", default=None)
    p.add_argument("--mode", choices=MODES, default=None)
    p.add_argument("--mc-draws", dest="mc_draws", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--preset", choices=("data", "synthetic"), default=None)
    p.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="score predictions against test truth")
    e.add_argument("--predictions", required=True)
    e.add_argument("--test", required=True)
    e.add_argument("--train", required=True)
    e.add_argument("--out", default=".")
    e.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidConfig, BadSplit) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, SchemaMismatch, LengthMismatch, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ImmgpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
