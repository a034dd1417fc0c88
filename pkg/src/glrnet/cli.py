"""Experiment driver: ``glrnet {train,eval,gradcheck,attack,corrupt,report}``.

Configuration is a flat JSON object whose keys are the fields of
:class:`ExperimentConfig`; every key can also be given on the command line
as ``--key value`` (list-valued keys take comma-separated values), and
flags win over the file. All randomness derives from ``seed`` through
:func:`glrnet.seeding.derive`:

=====================  ===========================================
stream address         consumer
=====================  ===========================================
``(DATA,)``            pool selection and train/test split
``(INIT,)``            initial weights
``(SHUFFLE, epoch)``   per-epoch mini-batch order
``(STEP, iteration)``  noise of one training iteration
``(EVAL,)``            noisy evaluation votes
``(ATTACK,)``          choice of images to attack
``(CORRUPT, k, s)``    corruption ``k`` (table order) at severity ``s``
``(GRADCHECK, ...)``   gradient-check problems and samples
=====================  ===========================================

Every output file embeds a manifest of SHA-256 digests of its input files
and of the configuration, and contains no timestamps, so reruns are
byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import gradcheck, seeding
from .attacks import AttackConfig, AttackMethod, generate, load_adversarial, save_adversarial
from .corruptions import Corruption, corrupt, parameter_table, severity_averaged_accuracy
from .data import Dataset, SampleSet, default_mnist_paths, load_mnist
from .errors import ConfigurationError
from .io import load_samples, manifest, read_csv, save_samples, write_csv
from .network import (
    ActivationSpec,
    NetworkSpec,
    NoiseSpec,
    load_params,
    save_params,
)
from .training import TrainConfig, evaluate, train

N_PIXELS = 196
N_CLASSES = 10
ATTACK_COLUMNS = ("model", "Orig", "Adv_L_BFGS", "Adv_FGSM")
CORRUPTION_COLUMNS = ("model", "corruption", "severity", "accuracy")
EVAL_COLUMNS = ("model", "set", "accuracy")


@dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "runs"
    # data
    images: str | None = None
    labels: str | None = None
    pool_size: int = 10_000
    train_fraction: float = 0.6
    n_train: int | None = None
    n_test: int | None = None
    # network
    hidden: list[int] = field(default_factory=lambda: [20])
    activation: str = "sigmoid"
    slope: float = 1.0
    sigma2: float = 4.0            # 0 means a noise-free network
    # training
    name: str = "model"
    estimator: str = "glr"
    loss: str = "cross_entropy"
    learning_rate: float = 0.1
    batch_size: int = 25
    replicates: int = 10_000
    epochs: int = 12
    max_iterations: int | None = None
    eval_every: int | None = None
    block_size: int = 1000
    workers: int = 1
    # evaluation
    models: list[str] = field(default_factory=list)
    sets: list[str] = field(default_factory=list)
    votes: int = 0
    # attacks
    surrogate: str | None = None
    attack_methods: list[str] = field(default_factory=lambda: ["lbfgs", "fgsm"])
    attack_count: int = 500
    epsilon: float = 0.25
    c_min: float = 1e-3
    c_max: float = 10.0
    bisection_steps: int = 6
    max_inner_iters: int = 100
    attack_objective: str = "pre_activation"
    png: bool = False
    # corruptions
    corruptions: list[str] = field(default_factory=lambda: [c.value for c in Corruption])
    severities: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    corrupt_count: int | None = None
    # gradient check
    gc_widths: list[int] = field(default_factory=lambda: [4, 3, 2])
    gc_cases: list[str] = field(default_factory=lambda: [
        "sigmoid:cross_entropy", "threshold:cross_entropy",
        "sigmoid:zero_one", "threshold:zero_one",
    ])
    gc_draws: int = 5
    gc_samples: int = 1_000_000
    gc_oracle_samples: int = 200_000
    gc_h: float = 0.05
    gc_bp_samples: int = 100_000

    # --- conversion -------------------------------------------------------

    @classmethod
    def field_types(cls) -> dict[str, str]:
        return {f.name: str(f.type) for f in fields(cls)}

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = cls.field_types()
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
        values = {k: _coerce(known[k], v) for k, v in raw.items()}
        values = {k: _normalise_name(v) if k in NAME_KEYS else v for k, v in values.items()}
        return cls(**values)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    # --- derived objects --------------------------------------------------

    def network_spec(self) -> NetworkSpec:
        noise = NoiseSpec(self.sigma2) if self.sigma2 > 0 else None
        widths = (N_PIXELS, *self.hidden, N_CLASSES)
        return NetworkSpec(widths, ActivationSpec(self.activation, self.slope), noise)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            estimator=self.estimator, learning_rate=self.learning_rate,
            batch_size=self.batch_size, replicates=self.replicates, epochs=self.epochs,
            seed=self.seed, loss=self.loss, max_iterations=self.max_iterations,
            eval_every=self.eval_every, block_size=self.block_size, workers=self.workers,
        )

    def attack_config(self, method: str) -> AttackConfig:
        return AttackConfig(
            method=AttackMethod(method), epsilon=self.epsilon, c_min=self.c_min,
            c_max=self.c_max, bisection_steps=self.bisection_steps,
            max_inner_iters=self.max_inner_iters, objective=self.attack_objective,
        )

    def data_paths(self) -> tuple[Path, Path]:
        img, lab = default_mnist_paths()
        return Path(self.images or img), Path(self.labels or lab)

    def dataset(self) -> Dataset:
        img, lab = self.data_paths()
        for p in (img, lab):
            if not p.exists():
                raise ConfigurationError(f"data file not found: {p}")
        ds = load_mnist(img, lab, self.seed, self.pool_size, self.train_fraction)
        n_train = self.n_train if self.n_train is not None else len(ds.train)
        n_test = self.n_test if self.n_test is not None else len(ds.test)
        return ds.reduced(n_train, n_test)


# keys naming a registered choice; "zero-one" and "zero_one" are the same loss
NAME_KEYS = {"activation", "estimator", "loss", "attack_methods", "attack_objective",
             "corruptions", "gc_cases"}


def _normalise_name(v):
    if isinstance(v, list):
        return [_normalise_name(x) for x in v]
    return v.replace("-", "_") if isinstance(v, str) else v


def _coerce(type_name: str, value):
    """Turn a JSON value or a command-line string into the field's type."""
    optional = "None" in type_name
    if value is None or (optional and isinstance(value, str) and value.lower() in ("none", "null", "")):
        if not optional:
            raise ConfigurationError(f"value required for a {type_name} field")
        return None
    base = type_name.replace(" | None", "")
    if base.startswith("list["):
        inner = base[5:-1]
        if isinstance(value, str):
            value = [v for v in value.split(",") if v]
        return [_coerce(inner, v) for v in value]
    try:
        if base == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if base == "float":
            return float(value)
        if base == "bool":
            if isinstance(value, str):
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(value)
                return value.lower() in ("true", "1", "yes")
            return bool(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"cannot read {value!r} as {base}") from None
    return str(value)


def load_config(path: str | None, overrides: dict) -> ExperimentConfig:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {path}") from None
        except ValueError as exc:
            raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigurationError("config file must hold a JSON object")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(raw)


# --- helpers ---------------------------------------------------------------

def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(paths) -> list[Path]:
    paths = [Path(p) for p in paths]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise ConfigurationError(f"missing input file(s): {', '.join(missing)}")
    return paths


def _manifest_lines(m: dict) -> list[str]:
    return [f"manifest {json.dumps(m, sort_keys=True, separators=(',', ':'))}"]


def _model_name(path: Path) -> str:
    return path.name.removesuffix(".params")


def _load_models(cfg: ExperimentConfig):
    return [(p, *load_params(p)[:2]) for p in _require(cfg.models)]


def _fmt(v: float) -> str:
    return f"{v:.4f}"


# --- subcommands ------------------------------------------------------------

def cmd_train(cfg: ExperimentConfig) -> int:
    spec = cfg.network_spec()
    tc = cfg.train_config()
    tc.validate(spec)            # before touching any data
    data_files = list(cfg.data_paths())
    ds = cfg.dataset()
    out = _out(cfg)
    m = manifest(data_files, cfg.to_dict())
    meta = {"manifest": m, "name": cfg.name, "seed": cfg.seed, "estimator": cfg.estimator,
            "loss": cfg.loss, "provenance": {k: v for k, v in ds.provenance.items()
                                             if k not in ("images", "labels")}}

    def checkpoint(epoch, params):
        save_params(out / f"{cfg.name}.epoch{epoch + 1:02d}.params", spec, params,
                    dict(meta, epoch=epoch + 1))

    params, log = train(spec, ds.train, tc, validation=ds.test, on_epoch=checkpoint)
    final_acc = evaluate(spec, params, ds.test)
    save_params(out / f"{cfg.name}.params", spec, params, dict(meta, test_accuracy=final_acc))
    log.write_csv(out / f"{cfg.name}.log.csv", _manifest_lines(m))
    print(f"{cfg.name}: {len(log.records)} iterations, test accuracy {_fmt(final_acc)}")
    return 0


def cmd_eval(cfg: ExperimentConfig) -> int:
    models = _load_models(cfg)
    set_files = _require(cfg.sets)
    if not models:
        raise ConfigurationError("eval needs at least one model (--models)")
    ds = cfg.dataset()
    sets = [("test", ds.test)] + [(p.name, load_samples(p).samples()) for p in set_files]
    rng_root = seeding.derive(cfg.seed, seeding.EVAL)
    rows = []
    for path, spec, params in models:
        for set_name, samples in sets:
            rng = rng_root if cfg.votes > 0 else None
            rows.append((_model_name(path), set_name, evaluate(spec, params, samples, cfg.votes, rng)))
    m = manifest([p for p, *_ in models] + set_files + list(cfg.data_paths()), cfg.to_dict())
    write_csv(_out(cfg) / "eval.csv", EVAL_COLUMNS, rows, _manifest_lines(m))
    for r in rows:
        print(f"{r[0]:<24} {r[1]:<32} {_fmt(r[2])}")
    return 0


def cmd_gradcheck(cfg: ExperimentConfig, estimator=None) -> int:
    """Run the gradient suites; ``estimator`` swaps in a replacement GLR statistic (tests only)."""
    out = _out(cfg)
    m = manifest([], cfg.to_dict())
    rows = []
    for case in cfg.gc_cases:
        act, _, loss = case.partition(":")
        rows += gradcheck.glr_vs_oracle(
            cfg.gc_widths, act, loss or "cross_entropy", cfg.sigma2, cfg.gc_draws,
            cfg.gc_samples, cfg.gc_oracle_samples, cfg.gc_h, cfg.seed, estimator,
        )
    rows += gradcheck.bp_vs_glr(cfg.gc_widths, cfg.sigma2, cfg.gc_draws, cfg.gc_bp_samples, cfg.seed)
    bp_rows = gradcheck.bp_vs_fd(cfg.gc_widths, cfg.gc_draws, seed=cfg.seed)
    gradcheck.write_z_report(out / "gradcheck.csv", rows, _manifest_lines(m))
    gradcheck.write_bp_report(out / "gradcheck_bp.csv", bp_rows, _manifest_lines(m))

    z = np.abs([r[-1] for r in rows])
    rel = max(r[-1] for r in bp_rows)
    print(f"z-scores: {len(z)} entries, max |z| {z.max():.3f}, {int(np.sum(z > 3))} above 3")
    print(f"BP vs FD: max relative error {rel:.3e}")
    return 0 if np.all(z <= 3) and rel <= 1e-5 else 1


def _attack_images(cfg: ExperimentConfig, test: SampleSet) -> SampleSet:
    n = min(cfg.attack_count, len(test))
    idx = np.sort(seeding.derive(cfg.seed, seeding.ATTACK).choice(len(test), n, replace=False))
    return test.take(idx)


def cmd_attack(cfg: ExperimentConfig) -> int:
    if cfg.surrogate is None:
        raise ConfigurationError("attack needs a surrogate checkpoint (--surrogate)")
    sur_path, = _require([cfg.surrogate])
    models = _load_models(cfg)
    methods = [AttackMethod(m) for m in cfg.attack_methods]
    configs = [cfg.attack_config(m.value) for m in methods]
    spec, params, _ = load_params(sur_path)
    ds = cfg.dataset()
    images = _attack_images(cfg, ds.test)
    out = _out(cfg)
    m = manifest([sur_path, *cfg.data_paths()], cfg.to_dict())

    adv_sets = {}
    for method, ac in zip(methods, configs):
        adv = generate(spec, params, images, ac)
        save_adversarial(out / f"adv_{method.value}.samples", adv, m)
        if cfg.png:
            from .attacks import save_pairs_png
            save_pairs_png(out / f"adv_{method.value}.png", adv)
        adv_sets[method] = adv
        print(f"{method.value}: {len(adv)} images, surrogate fooled on "
              f"{_fmt(float(np.mean(adv.success)))}, surrogate accuracy "
              f"{_fmt(evaluate(spec, params, adv.samples()))}")

    if models:
        rows = [_attack_row(path, vs, vp, images, adv_sets) for path, vs, vp in models]
        rm = manifest([sur_path, *[p for p, *_ in models], *cfg.data_paths()], cfg.to_dict())
        write_csv(out / "attack_report.csv", ATTACK_COLUMNS, rows, _manifest_lines(rm))
        for r in rows:
            print("  ".join(str(v) if isinstance(v, str) else _fmt(v) for v in r))
    return 0


def _attack_row(path, spec, params, images, adv_sets):
    def acc(method):
        adv = adv_sets.get(method)
        return evaluate(spec, params, adv.samples()) if adv is not None else float("nan")
    return (_model_name(path), evaluate(spec, params, images),
            acc(AttackMethod.LBFGS), acc(AttackMethod.FGSM))


def _corrupt_images(cfg: ExperimentConfig, test: SampleSet) -> SampleSet:
    if cfg.corrupt_count is None or cfg.corrupt_count >= len(test):
        return test
    idx = np.sort(seeding.derive(cfg.seed, seeding.CORRUPT).choice(
        len(test), cfg.corrupt_count, replace=False))
    return test.take(idx)


def cmd_corrupt(cfg: ExperimentConfig) -> int:
    kinds = [Corruption(k) for k in cfg.corruptions]
    for s in cfg.severities:
        if s not in (1, 2, 3, 4, 5):
            raise ConfigurationError(f"severity must be 1..5, got {s}")
    models = _load_models(cfg)
    ds = cfg.dataset()
    images = _corrupt_images(cfg, ds.test)
    out = _out(cfg)
    m = manifest(list(cfg.data_paths()), cfg.to_dict())
    order = list(Corruption)

    corrupted = {}
    for kind in kinds:
        for s in cfg.severities:
            rng = seeding.derive(cfg.seed, seeding.CORRUPT, order.index(kind) + 1, s)
            x = corrupt(images.x, kind, s, rng)
            save_samples(out / f"corrupt_{kind.value}_s{s}.samples", x, images.labels,
                         originals=images.x, method=kind.value,
                         params={"severity": s, "table": parameter_table()[kind.value]},
                         manifest=m)
            corrupted[kind, s] = SampleSet(x, images.labels)

    if models:
        rows = []
        for path, spec, params in models:
            name = _model_name(path)
            rows.append((name, "original", "", evaluate(spec, params, images)))
            per_kind = []
            for kind in kinds:
                accs = [evaluate(spec, params, corrupted[kind, s]) for s in cfg.severities]
                rows += [(name, kind.value, s, a) for s, a in zip(cfg.severities, accs)]
                avg = (severity_averaged_accuracy(accs) if len(accs) == 5
                       else float(np.mean(accs)))
                rows.append((name, kind.value, "average", avg))
                per_kind.append(avg)
            rows.append((name, "average", "average", float(np.mean(per_kind))))
        rm = manifest([*[p for p, *_ in models], *cfg.data_paths()], cfg.to_dict())
        header = _manifest_lines(rm) + [
            f"parameters {json.dumps(parameter_table(), sort_keys=True)}",
            "glass_blur parameter is the number of swap rounds; a 3x3 box blur is added from severity 3",
        ]
        write_csv(out / "corruption_report.csv", CORRUPTION_COLUMNS, rows, header)
        for r in rows:
            if r[2] in ("", "average"):
                print(f"{r[0]:<24} {r[1]:<16} {_fmt(r[3])}")
    return 0


def _markdown(columns, rows) -> list[str]:
    lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    lines += ["| " + " | ".join(rows_) + " |" for rows_ in rows]
    return lines


def cmd_report(cfg: ExperimentConfig) -> int:
    """Assemble the attack and corruption reports in ``output_dir`` into ``report.md``."""
    out = Path(cfg.output_dir)
    att_path, cor_path = out / "attack_report.csv", out / "corruption_report.csv"
    present = [p for p in (att_path, cor_path) if p.exists()]
    if not present:
        raise ConfigurationError(f"no attack_report.csv or corruption_report.csv in {out}")
    lines = ["# Robustness report", ""]
    m = manifest(present)
    lines += [f"Inputs: `{json.dumps(m['inputs'], sort_keys=True)}`", ""]
    if att_path.exists():
        rows = read_csv(att_path)
        lines += ["## Transfer attacks", ""]
        lines += _markdown(ATTACK_COLUMNS, [[r["model"]] + [_fmt(float(r[c])) for c in ATTACK_COLUMNS[1:]]
                                            for r in rows])
        lines.append("")
    if cor_path.exists():
        rows = read_csv(cor_path)
        models = list(dict.fromkeys(r["model"] for r in rows))
        conditions = list(dict.fromkeys(
            (r["corruption"], r["severity"]) for r in rows
            if r["severity"] in ("", "average")
        ))
        acc = {(r["model"], r["corruption"], r["severity"]): float(r["accuracy"]) for r in rows}
        table = [[c.replace("_", " ") if s != "" or c != "original" else "Original"]
                 + [_fmt(acc[mo, c, s]) for mo in models] for c, s in conditions]
        lines += ["## Natural corruptions (severity-averaged accuracy)", ""]
        lines += _markdown(["corruption", *models], table)
        lines.append("")
    (out / "report.md").write_text("\n".join(lines))
    print("\n".join(lines))
    return 0


HELP = {
    "train": "train a network and write checkpoints and a training log",
    "eval": "accuracy of checkpoints on the test split and on sample-set files",
    "gradcheck": "compare GLR and BP against the finite-difference oracle",
    "attack": "craft transfer attacks on a surrogate and score victim models",
    "corrupt": "write corrupted test sets and score models on them",
    "report": "assemble attack and corruption reports into report.md",
}

COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "attack": cmd_attack,
    "corrupt": cmd_corrupt,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glrnet", description="Train noisy networks with GLR and test their robustness.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--dump-config", action="store_true",
                       help="print the effective configuration and exit")
        for key, type_name in ExperimentConfig.field_types().items():
            p.add_argument(f"--{key.replace('_', '-')}", f"--{key}", dest=key, default=None,
                           metavar=type_name.replace(" | None", "").upper())
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "dump_config")}
    try:
        cfg = load_config(args.config, overrides)
        if args.dump_config:
            sys.stdout.write(cfg.dumps())
            return 0
        return COMMANDS[args.command](cfg)
    except (ValueError, OSError) as exc:     # module errors all derive from ValueError
        print(f"glrnet {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
