"""Experiment configuration and the pipeline stages behind the command line.

A config is a JSON document; every stage reads its inputs from, and writes
its outputs to, the experiment's output directory, so stages compose
through files only.  Seeds are explicit: ``seed`` drives teacher training,
memory synthesis, decay and distillation; dataset sections carry their own.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import ir
from .carver import recover
from .distill import DistillConfig, Teacher, correct, initial_correction, layer_norm_profile, retrain_scratch
from .errors import ConfigError, EmptyResults, SchemaError
from .memory import (CorrelationMode, DecayParams, MemoryImage, apply_decay, bit_error_rate,
                     decay_trials, error_cross_correlation, majority_vote, synthesize_dump)
from .metrics import RecoveryScore, fidelity, rad, rows_to_csv, weight_value_error_rate
from .nn import data as datasets
from .nn import zoo
from .nn.network import Network
from .nn.train import TrainConfig, accuracy, train

RESULTS = "results.csv"


def _section(cls, raw, where):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass
class DataSpec:
    generator: str | None = "patterns"
    params: dict = field(default_factory=lambda: {"side": 12})
    n_train: int = 3000
    n_test: int = 1000
    train_seed: int = 1
    test_seed: int = 2
    path: str | None = None  # CSV file or IDX image file (train)
    labels_path: str | None = None
    test_path: str | None = None
    test_labels_path: str | None = None
    shape: list | None = None  # per-sample shape for CSV rows

    def __post_init__(self) -> None:
        if self.path is None and self.generator not in datasets.GENERATORS:
            raise ConfigError(f"unknown generator {self.generator!r}")


@dataclass
class DecaySpec:
    rho0: float = 1e-2
    rho1: float = 1e-3
    trials: int = 1
    correlation: str = "Independent"
    vote: bool = False

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        try:
            CorrelationMode(self.correlation)
        except ValueError:
            raise ConfigError(f"correlation must be one of {[m.value for m in CorrelationMode]}") from None


@dataclass
class DumpSpec:
    total_size: int = 1 << 17
    filler: str = "ascii_text"


@dataclass
class CarveSpec:
    max_distance: int = 2
    mode: str = "tolerant"
    correction: str = "sanitize"
    lo: float = -5.0
    hi: float = 5.0
    eps: float = 1e-5


@dataclass
class CorrectSpec:
    mode: str = "D2"  # D1, D2 or retrain
    rate: float = 0.5
    fraction: float = 0.1
    source: str = "shifted"  # shifted generator, same generator (held out) or training slice
    shift: float = 0.2
    data_seed: int = 7
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    retrain_epochs: int = 100
    lr_schedule: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("D1", "D2", "retrain"):
            raise ConfigError(f"unknown correction mode {self.mode!r}")
        if self.source not in ("shifted", "same", "train"):
            raise ConfigError(f"unknown recovery source {self.source!r}")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    model: str = "base"
    seed: int = 0
    out: str = "run"
    epsilons: list = field(default_factory=lambda: [0.01, 0.1])
    train: dict = field(default_factory=dict)
    data: DataSpec = field(default_factory=DataSpec)
    decay: DecaySpec = field(default_factory=DecaySpec)
    dump: DumpSpec = field(default_factory=DumpSpec)
    carve: CarveSpec = field(default_factory=CarveSpec)
    correct: CorrectSpec = field(default_factory=CorrectSpec)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        sections = {"data": DataSpec, "decay": DecaySpec, "dump": DumpSpec,
                    "carve": CarveSpec, "correct": CorrectSpec}
        unknown = sorted(set(raw) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        kw = {k: v for k, v in raw.items() if k not in sections}
        kw.update({k: _section(c, raw.get(k), k) for k, c in sections.items()})
        cfg = cls(**kw)
        if cfg.model not in zoo.ARCHITECTURES:
            raise ConfigError(f"unknown model {cfg.model!r}")
        cfg.train_config()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as f:
                raw = json.load(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(**{"seed": self.seed, **self.train})
        except TypeError as exc:
            raise ConfigError(f"train: {exc}") from None

    def path(self, *parts) -> str:
        return os.path.join(self.out, *parts)


# --------------------------------------------------------------------------
# data


def _check_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"dataset file not found: {path}")
    return path


def _load_file(path, labels_path, split, shape) -> datasets.Dataset:
    _check_file(path)
    if path.endswith(".csv"):
        return datasets.read_csv(path, split=split, shape=shape)
    if labels_path is not None:
        _check_file(labels_path)
    return datasets.load_idx(path, labels_path, split=split)


def load_data(cfg: ExperimentConfig) -> tuple[datasets.Dataset, datasets.Dataset]:
    d = cfg.data
    if d.path is not None:
        tr = _load_file(d.path, d.labels_path, "train", d.shape)
        if d.test_path is None:
            raise ConfigError("data.test_path is required with data.path")
        te = _load_file(d.test_path, d.test_labels_path, "test", d.shape)
        return tr, te
    gen = datasets.GENERATORS[d.generator]
    tr = gen(d.n_train, seed=d.train_seed, **d.params)
    te = gen(d.n_test, seed=d.test_seed, split="test", **d.params)
    return tr, te


def recovery_data(cfg: ExperimentConfig, train_set: datasets.Dataset) -> datasets.Dataset:
    c, d = cfg.correct, cfg.data
    n = max(1, int(round(c.fraction * len(train_set))))
    if c.source == "train":
        return train_set.fraction(c.fraction, seed=c.data_seed)
    if d.path is not None:
        raise ConfigError("generated recovery sets need a generator-based dataset")
    gen = datasets.GENERATORS[d.generator]
    extra = {"shift": c.shift} if c.source == "shifted" else {}
    if c.source == "shifted" and d.generator not in ("patterns", "blobs"):
        raise ConfigError(f"generator {d.generator!r} has no shifted variant")
    return gen(n, seed=c.data_seed, split="recovery", **d.params, **extra)


def build_model(cfg: ExperimentConfig, train_set: datasets.Dataset) -> ir.IRModel:
    kw = {"input_shape": train_set.inputs.shape[1:]}
    if train_set.num_classes:
        kw["n_classes"] = train_set.num_classes
    return zoo.build(cfg.model, **kw)


# --------------------------------------------------------------------------
# stages


def stage_train(cfg: ExperimentConfig) -> dict:
    tr, te = load_data(cfg)
    net = Network(build_model(cfg, tr), seed=cfg.seed)
    train(net, tr, cfg.train_config())
    os.makedirs(cfg.out, exist_ok=True)
    net.save(cfg.path("teacher"))
    acc = accuracy(net, te)
    _write_json(cfg.path("teacher.json"), {"test_accuracy": acc})
    return {"test_accuracy": acc}


def _decay_params(cfg: ExperimentConfig, trial: int) -> DecayParams:
    return DecayParams(cfg.decay.rho0, cfg.decay.rho1, cfg.seed + trial)


def _one_trial(args):
    image, params = args
    return apply_decay(image, params)


def _recover_into(cfg: ExperimentConfig, image: MemoryImage, stem: str):
    c = cfg.carve
    r = recover(image, correction=c.correction, mode=c.mode, max_distance=c.max_distance,
                lo=c.lo, hi=c.hi, eps=c.eps)
    with open(stem + ".xml", "w", encoding="utf-8", newline="") as f:
        f.write(r.xml if r.xml.endswith("\n") else r.xml + "\n")
    with open(stem + ".bin", "wb") as f:
        f.write(r.values.astype("<f4").tobytes())
    with open(stem + ".report.txt", "w", encoding="utf-8") as f:
        f.write(r.report.to_text())
    return r


def stage_attack(cfg: ExperimentConfig, parallel: bool = False) -> dict:
    """Dump, decay (per trial), optionally vote, then recover."""
    spec, blob = ir.read_ir(cfg.path("teacher"))
    for ext in (".xml", ".bin", ".report.txt"):
        if os.path.exists(cfg.path("recovered" + ext)):
            os.remove(cfg.path("recovered" + ext))
    with open(cfg.path("teacher.xml"), encoding="utf-8") as f:
        xml = f.read()
    image = synthesize_dump(xml, blob, cfg.dump.filler, cfg.dump.total_size, seed=cfg.seed)
    image.save(cfg.path("image.raw"))
    n = cfg.decay.trials
    mode = CorrelationMode(cfg.decay.correlation)
    if mode is CorrelationMode.FIXED_POSITIONS:
        trials = decay_trials(image, _decay_params(cfg, 0), n, mode).trials
    else:
        jobs = [(image, _decay_params(cfg, i)) for i in range(n)]
        if parallel and n > 1:
            with ProcessPoolExecutor() as pool:
                trials = list(pool.map(_one_trial, jobs))
        else:
            trials = [_one_trial(j) for j in jobs]
    stats = {"trials": n, "correlation": mode.value,
             "trial_bit_error": [bit_error_rate(image, t) for t in trials]}
    if n > 1:
        stats["correlation_matrix"] = error_cross_correlation(trials, image).tolist()
    if cfg.decay.vote and n > 1:
        target = majority_vote(trials)
        stats["voted_bit_error"] = bit_error_rate(image, target)
    else:
        target = trials[0]
    target.save(cfg.path("decayed.raw"))
    _write_json(cfg.path("attack.json"), stats)
    rec = _recover_into(cfg, target, cfg.path("recovered"))
    stats["xml_repairs"] = len(rec.report.xml_repairs)
    stats["weights_sanitized"] = len(rec.report.weights_sanitized)
    stats["scan_restarts"] = rec.report.scan_restarts
    _write_json(cfg.path("attack.json"), stats)
    return stats


def _teacher(cfg):
    return Network.load(cfg.path("teacher"))


def stage_correct(cfg: ExperimentConfig) -> dict:
    tr, te = load_data(cfg)
    teacher = _teacher(cfg)
    acc_t = accuracy(teacher, te)
    recovered = Network.load(cfg.path("recovered"))
    c = cfg.correct
    tcfg = TrainConfig(lr=c.lr, batch_size=c.batch_size, epochs=c.epochs,
                       lr_schedule=c.lr_schedule, seed=cfg.seed)
    rad_before = rad(acc_t, accuracy(recovered, te))
    if c.mode == "retrain":
        labeled = tr.fraction(c.fraction, seed=c.data_seed)
        rcfg = TrainConfig(lr=c.lr, batch_size=c.batch_size, epochs=c.retrain_epochs,
                           lr_schedule=c.lr_schedule, seed=cfg.seed)
        net, hist = retrain_scratch(recovered.spec, labeled, rcfg)
        text = (f"mode\tretrain\nepochs\t{hist.epochs}\nrad_before\t{rad_before:.6f}\n"
                f"rad_after\t{rad(acc_t, accuracy(net, te)):.6f}\n")
        epochs, losses = hist.epochs, hist.loss
    else:
        student = initial_correction(recovered, cfg.carve.lo, cfg.carve.hi, cfg.carve.eps)
        dcfg = DistillConfig(recovery_data(cfg, tr).unlabeled(), Teacher(teacher), c.mode,
                             c.rate, tcfg)
        net, report = correct(student, dcfg, te, acc_t)
        report.rad_before = rad_before
        text, epochs, losses = report.to_text(), report.epochs, report.epoch_loss
    net.save(cfg.path("corrected"))
    rad_after = rad(acc_t, accuracy(net, te))
    with open(cfg.path("distill_report.txt"), "w", encoding="utf-8") as f:
        f.write(text)
    out = {"mode": c.mode, "epochs": epochs, "rad_before": rad_before, "rad_after": rad_after,
           "final_loss": losses[-1] if losses else None}
    _write_json(cfg.path("correct.json"), out)
    return out


def score(cfg: ExperimentConfig, teacher: Network, other: Network, te, stage: str,
          image=None, decayed=None) -> dict[str, str]:
    acc_t = accuracy(teacher, te)
    fid = {}
    rng = np.random.default_rng([cfg.seed, 5])
    idx = rng.permutation(len(te))[:min(len(te), 500)]
    for eps in cfg.epsilons:
        fid[float(eps)] = fidelity(teacher, other, te.inputs[idx], te.labels[idx], float(eps))
    bit = bit_error_rate(image, decayed) if image is not None else (0.0, 0.0)
    same = teacher.spec.same_architecture(other.spec)
    s = RecoveryScore(
        rad=rad(acc_t, accuracy(other, te)), fidelity=fid, bit_error=bit,
        weight_value_error_rate=(weight_value_error_rate(teacher.parameter_vector(),
                                                         other.parameter_vector()) if same else 1.0),
        layer_norms=layer_norm_profile(teacher, other) if same else [])
    c = cfg.correct
    return s.to_row(experiment=cfg.name, model=cfg.model, stage=stage, seed=cfg.seed,
                    rho0=cfg.decay.rho0, rho1=cfg.decay.rho1, trials=cfg.decay.trials,
                    correlation=cfg.decay.correlation, vote=cfg.decay.vote,
                    mode=c.mode if stage == "corrected" else "",
                    data_fraction=c.fraction if stage == "corrected" else "")


def stage_evaluate(cfg: ExperimentConfig) -> list[dict[str, str]]:
    _, te = load_data(cfg)
    teacher = _teacher(cfg)
    rows = []
    image = decayed = None
    if os.path.exists(cfg.path("image.raw")) and os.path.exists(cfg.path("decayed.raw")):
        image = MemoryImage.load(cfg.path("image.raw"), with_manifest=False)
        decayed = MemoryImage.load(cfg.path("decayed.raw"), with_manifest=False)
    for stage in ("recovered", "corrected"):
        if os.path.exists(cfg.path(stage + ".xml")):
            net = Network.load(cfg.path(stage))
            rows.append(score(cfg, teacher, net, te, stage, image, decayed))
    if not rows:
        raise FileNotFoundError(f"no recovered or corrected model in {cfg.out}")
    with open(cfg.path(RESULTS), "w", encoding="utf-8", newline="") as f:
        f.write(rows_to_csv(rows))
    return rows


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


# --------------------------------------------------------------------------
# report

REQUIRED_COLUMNS = ("experiment", "model", "stage", "seed", "rho0", "rho1", "mode",
                    "data_fraction", "rad", "fidelity", "layer_norms")


def _result_files(root) -> list[str]:
    found = []
    for dirpath, _, files in os.walk(root):
        if RESULTS in files:
            found.append(os.path.join(dirpath, RESULTS))
    return sorted(found)


def collect_results(roots) -> list[tuple[str, dict[str, str]]]:
    """All result rows under ``roots``, tagged with their file."""
    rows, header = [], None
    for root in roots:
        for path in _result_files(root):
            with open(path, encoding="utf-8", newline="") as f:
                reader = csv.DictReader(f)
                cols = tuple(reader.fieldnames or ())
                missing = [c for c in REQUIRED_COLUMNS if c not in cols]
                if missing:
                    raise SchemaError(f"{path}: missing columns {missing}")
                if header is None:
                    header = (path, cols)
                elif set(cols) != set(header[1]):
                    raise SchemaError(f"{path}: columns differ from {header[0]}")
                rows += [(path, r) for r in reader]
    if not rows:
        raise EmptyResults(f"no result rows under {', '.join(map(str, roots))}")
    return rows


def _mean_rows(rows, keys):
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(float(r["rad"]))
    out = []
    for key in sorted(groups):
        vals = groups[key]
        out.append({**dict(zip(keys, key)), "n": str(len(vals)),
                    "rad_mean": f"{np.mean(vals):.6f}", "rad_std": f"{np.std(vals):.6f}"})
    return out


def stage_report(roots, out_dir) -> dict[str, str]:
    tagged = collect_results(roots)
    rows = [r for _, r in tagged]
    os.makedirs(out_dir, exist_ok=True)
    tables = {
        "rad_vs_model.csv": _mean_rows(rows, ("model", "stage", "rho0", "rho1")),
        "rad_vs_datafraction.csv": _mean_rows([r for r in rows if r["stage"] == "corrected"],
                                              ("model", "mode", "data_fraction")),
    }
    norms = []
    for r in rows:
        for i, v in enumerate(json.loads(r["layer_norms"])):
            norms.append({"experiment": r["experiment"], "stage": r["stage"], "seed": r["seed"],
                          "layer": str(i), "norm": f"{v:.6g}"})
    tables["layer_norms.csv"] = norms
    corr = []
    for path in sorted({os.path.dirname(p) for p, _ in tagged}):
        attack = os.path.join(path, "attack.json")
        if not os.path.exists(attack):
            continue
        with open(attack, encoding="utf-8") as f:
            stats = json.load(f)
        for i, line in enumerate(stats.get("correlation_matrix", [])):
            for j, v in enumerate(line):
                corr.append({"run": path,
                             "correlation": stats["correlation"], "i": str(i), "j": str(j),
                             "r": f"{v:.6f}"})
    tables["correlation_matrix.csv"] = corr
    fields_for = {
        "layer_norms.csv": ["experiment", "stage", "seed", "layer", "norm"],
        "correlation_matrix.csv": ["run", "correlation", "i", "j", "r"],
        "rad_vs_model.csv": ["model", "stage", "rho0", "rho1", "n", "rad_mean", "rad_std"],
        "rad_vs_datafraction.csv": ["model", "mode", "data_fraction", "n", "rad_mean", "rad_std"],
    }
    written = {}
    for name, table in tables.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(rows_to_csv(table, fields_for[name]))
        written[name] = path
    return written
