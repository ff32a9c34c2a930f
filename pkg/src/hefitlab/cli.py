"""Command-line entry point: ``hefitlab <command> [options]``.

Results go to stdout and to files under ``--out``; errors go to stderr as a
single JSON object and the process exits nonzero.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import compilation as comp
from .data import LANGUAGES, TRAINING_LANGUAGES, Dataset, load_dataset, save_dataset
from .ensemble import SUBMISSION_PRESET, EnsembleMember, EnsembleSpec, build_submission, submission_spec
from .errors import ConfigError, LabError, ResourceError, ValidationError
from .evaluation import (
    ABLATION_MODES,
    SWEEP_GRID,
    EvalReport,
    PredictionSet,
    ablation_csv,
    ablation_run,
    evaluate,
    report_table,
    sample_size_sweep,
    sweep_csv,
)
from .fixtures import write_fixture_tree
from .model import ModelConfig, init_model, load_checkpoint, predict_batch, pretrain, save_checkpoint
from .registry import Registry, RunArtifacts, RunRecord
from .synthgen import FileSelector, GenerationClientConfig, HTTPChatClient, MockChatClient, build_synth_set
from .training import FineTuner, HeFiTConfig, HypSet

log = logging.getLogger("hefitlab")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


@dataclass
class PretrainSpec:
    corpus: Path
    steps: int = 300
    learning_rate: float = 1e-3
    batch_size: int = 16
    mask_prob: float = 0.15
    seed: int = 0


@dataclass
class ExperimentConfig:
    data_dir: Path
    registry_dir: Path
    out_dir: Path
    model: ModelConfig
    plan: dict
    seeds: list[int]
    compilation: comp.CompilationConfig | None = None
    pretrain: PretrainSpec | None = None
    targets: list[str] = field(default_factory=lambda: ["dev", "test"])
    ablation: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def fine_tuner(self, encoder_state=None) -> FineTuner:
        plan = self.plan
        if plan["method"] == "sfit":
            hyp = HypSet(
                plan.get("name", "custom"),
                plan["epochs"],
                plan["dropout"],
                plan["learning_rate"],
                plan["batch_size"],
            )
            return FineTuner(self.model, "sfit", hyp=hyp, encoder_state=encoder_state)
        cfg = HeFiTConfig(
            plan["head_epochs"],
            plan["full_epochs"],
            plan["learning_rate"],
            plan["stage2_lr_factor"],
            plan["dropout"],
            plan["batch_size"],
        )
        return FineTuner(self.model, "hefit", hefit_config=cfg, encoder_state=encoder_state)


_PLAN_DEFAULTS = {
    "sfit": {"epochs": 4, "dropout": 0.10, "learning_rate": 4e-5, "batch_size": 8},
    "hefit": {
        "head_epochs": 3,
        "full_epochs": 6,
        "dropout": 0.05,
        "learning_rate": 4e-5,
        "stage2_lr_factor": 0.5,
        "batch_size": 8,
    },
}
_TOP_KEYS = {
    "data_dir", "registry_dir", "out_dir", "model", "plan", "seeds", "compilation",
    "pretrain", "targets", "ablation", "sweep",
}


def _require(mapping: Mapping, key: str, path: str):
    if key not in mapping:
        raise ConfigError(f"{path}.{key}" if path else key, "required field is missing")
    return mapping[key]


def _typed(value, kind, path: str):
    ok = isinstance(value, kind) and not (kind in (int, (int, float)) and isinstance(value, bool))
    if not ok:
        name = kind.__name__ if isinstance(kind, type) else "number"
        raise ConfigError(path, f"expected {name}, got {value!r}")
    return value


def _plan(raw: Mapping) -> dict:
    method = str(_require(raw, "method", "plan")).lower()
    if method not in _PLAN_DEFAULTS:
        raise ConfigError("plan.method", f"must be sfit or hefit, got {raw['method']!r}")
    plan = {"method": method, **_PLAN_DEFAULTS[method]}
    for key, value in raw.items():
        if key == "method":
            continue
        if key == "name":
            plan["name"] = str(value)
            continue
        if key not in plan:
            raise ConfigError(f"plan.{key}", f"unknown field for a {method} plan")
        kind = int if key in ("epochs", "head_epochs", "full_epochs", "batch_size") else (int, float)
        plan[key] = _typed(value, kind, f"plan.{key}")
    return plan


def parse_config(raw: Mapping, base: Path = Path(".")) -> ExperimentConfig:
    """Build an ExperimentConfig from parsed JSON; relative paths resolve against ``base``."""
    if not isinstance(raw, Mapping):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigError(key, "unknown field")

    def path_of(key: str, default: str | None = None) -> Path:
        value = raw.get(key, default)
        if value is None:
            raise ConfigError(key, "required field is missing")
        p = Path(_typed(value, str, key))
        return p if p.is_absolute() else base / p

    data_dir = path_of("data_dir")
    if not data_dir.is_dir():
        raise ConfigError("data_dir", f"{data_dir} is not a directory")
    try:
        model = ModelConfig.from_dict(dict(raw.get("model", {})))
    except (TypeError, LabError) as exc:
        raise ConfigError("model", str(exc)) from exc
    try:
        plan = _plan(raw.get("plan", {"method": "hefit"}))
        if plan["method"] == "sfit":
            HypSet("check", plan["epochs"], plan["dropout"], plan["learning_rate"], plan["batch_size"])
        else:
            HeFiTConfig(plan["head_epochs"], plan["full_epochs"], plan["learning_rate"],
                        plan["stage2_lr_factor"], plan["dropout"], plan["batch_size"])
    except ConfigError:
        raise
    except LabError as exc:
        raise ConfigError("plan", str(exc)) from exc

    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "must be a nonempty list of integers")
    for i, s in enumerate(seeds):
        _typed(s, int, f"seeds[{i}]")

    compilation = None
    if raw.get("compilation") is not None:
        value = raw["compilation"]
        try:
            if isinstance(value, int) and not isinstance(value, bool):
                compilation = comp.get_config(value)
            elif isinstance(value, Mapping):
                compilation = comp.CompilationConfig.from_dict(value)
            else:
                raise ConfigError("compilation", "must be a setting id or an inline compilation object")
        except ConfigError:
            raise
        except (LabError, KeyError, TypeError) as exc:
            raise ConfigError("compilation", str(exc)) from exc

    pre = None
    if raw.get("pretrain") is not None:
        p = raw["pretrain"]
        if not isinstance(p, Mapping):
            raise ConfigError("pretrain", "must be an object")
        corpus = Path(_typed(_require(p, "corpus", "pretrain"), str, "pretrain.corpus"))
        corpus = corpus if corpus.is_absolute() else data_dir / corpus
        if not corpus.exists():
            raise ConfigError("pretrain.corpus", f"{corpus} does not exist")
        extra = set(p) - {"corpus", "steps", "learning_rate", "batch_size", "mask_prob", "seed"}
        if extra:
            raise ConfigError(f"pretrain.{sorted(extra)[0]}", "unknown field")
        pre = PretrainSpec(
            corpus,
            _typed(p.get("steps", 300), int, "pretrain.steps"),
            float(_typed(p.get("learning_rate", 1e-3), (int, float), "pretrain.learning_rate")),
            _typed(p.get("batch_size", 16), int, "pretrain.batch_size"),
            float(_typed(p.get("mask_prob", 0.15), (int, float), "pretrain.mask_prob")),
            _typed(p.get("seed", 0), int, "pretrain.seed"),
        )

    targets = raw.get("targets", ["dev", "test"])
    if not isinstance(targets, list) or not targets:
        raise ConfigError("targets", "must be a nonempty list")
    for i, t in enumerate(targets):
        if t not in ("dev", "test"):
            raise ConfigError(f"targets[{i}]", f"must be dev or test, got {t!r}")
        if not (data_dir / f"{t}.csv").exists():
            raise ConfigError(f"targets[{i}]", f"{data_dir / (t + '.csv')} does not exist")

    for section in ("ablation", "sweep"):
        if not isinstance(raw.get(section, {}), Mapping):
            raise ConfigError(section, "must be an object")

    return ExperimentConfig(
        data_dir=data_dir,
        registry_dir=path_of("registry_dir", "registry"),
        out_dir=path_of("out_dir", "out"),
        model=model,
        plan=plan,
        seeds=list(seeds),
        compilation=compilation,
        pretrain=pre,
        targets=list(targets),
        ablation=dict(raw.get("ablation", {})),
        sweep=dict(raw.get("sweep", {})),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("--config", f"{path} does not exist")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"{path} is not valid JSON: {exc}") from exc
    return parse_config(raw, path.parent)


# ---------------------------------------------------------------------------
# data access
# ---------------------------------------------------------------------------


def _load_split(cfg: ExperimentConfig, name: str) -> Dataset:
    path = cfg.data_dir / f"{name}.csv"
    if not path.exists():
        raise ResourceError(f"{path} does not exist")
    return load_dataset(path, name=name)


def _load_synth(cfg: ExperimentConfig) -> dict[str, Dataset]:
    out = {}
    for lang in LANGUAGES:
        path = cfg.data_dir / "synth" / f"{lang}.csv"
        if path.exists():
            out[lang] = load_dataset(path, name=f"synth-{lang}")
    return out


def _training_set(cfg: ExperimentConfig) -> Dataset:
    train = _load_split(cfg, "train")
    if cfg.compilation is None:
        return train
    humans = {lang: train.by_language(lang) for lang in TRAINING_LANGUAGES}
    return comp.compile_training_set(cfg.compilation, humans, _load_synth(cfg))


def _file_sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# pretrain / train
# ---------------------------------------------------------------------------


def _pretrain_config(cfg: ExperimentConfig) -> dict:
    assert cfg.pretrain is not None
    p = cfg.pretrain
    return {
        "kind": "pretrain",
        "model": cfg.model.to_dict(),
        "corpus_sha256": _file_sha(p.corpus),
        "steps": p.steps,
        "learning_rate": p.learning_rate,
        "batch_size": p.batch_size,
        "mask_prob": p.mask_prob,
        "seed": p.seed,
    }


def ensure_pretrained(cfg: ExperimentConfig, registry: Registry) -> tuple[RunRecord | None, bool]:
    """Pretrain the encoder once per pretraining config; None when no pretraining is configured."""
    if cfg.pretrain is None:
        return None, False
    run_cfg = _pretrain_config(cfg)
    found = registry.lookup(run_cfg)
    if found is not None:
        return found, False
    p = cfg.pretrain
    corpus = [ln for ln in p.corpus.read_text(encoding="utf-8").splitlines() if ln.strip()]
    model = init_model(cfg.model, p.seed)
    losses = pretrain(model, corpus, p.steps, p.mask_prob, p.seed, p.learning_rate, p.batch_size)
    metrics = {"final_loss": losses[-1] if losses else None, "steps": len(losses)}
    art = RunArtifacts(metrics, history={"losses": losses}, write_checkpoint=lambda path: save_checkpoint(model, path))
    return registry.put("pretrain", run_cfg, art)


def _encoder_state(registry: Registry, record: RunRecord | None):
    if record is None:
        return None
    model = load_checkpoint(registry.checkpoint_path(record.run_id))
    return {n: a for n, a in model.state_dict().items() if model.group_of(n) == "encoder"}


def _train_config(cfg: ExperimentConfig, seed: int, encoder_run: str | None, train: Dataset) -> dict:
    return {
        "kind": "train",
        "method": cfg.plan["method"],
        "plan": cfg.plan,
        "model": cfg.model.to_dict(),
        "compilation": cfg.compilation.to_dict() if cfg.compilation is not None else None,
        "train_fingerprint": train.fingerprint(),
        "targets": {t: _file_sha(cfg.data_dir / f"{t}.csv") for t in cfg.targets},
        "encoder_run": encoder_run,
        "seed": seed,
    }


def train_one(cfg: ExperimentConfig, seed: int) -> tuple[RunRecord, bool]:
    registry = Registry(cfg.registry_dir)
    encoder_record, _ = ensure_pretrained(cfg, registry)
    train = _training_set(cfg)
    run_cfg = _train_config(cfg, seed, encoder_record.run_id if encoder_record else None, train)
    found = registry.lookup(run_cfg)
    if found is not None:
        return found, False
    tuner = cfg.fine_tuner(_encoder_state(registry, encoder_record))
    dev = _load_split(cfg, "dev")
    model, history = tuner.fit(train, seed, dev)
    preds: dict[str, PredictionSet] = {}
    reports: dict[str, EvalReport] = {}
    for target in cfg.targets:
        ds = dev if target == "dev" else _load_split(cfg, target)
        ps = PredictionSet.from_dataset(ds, predict_batch(model, ds.tokens(model.config.max_len)))
        preds[target] = ps
        reports[target] = evaluate(ps, dataset_id=target)
    metrics = {
        "success": history.success,
        "failure_reason": history.failure_reason,
        **{f"{t}_r": reports[t].overall_r for t in cfg.targets},
    }
    art = RunArtifacts(
        metrics, preds, reports, history.to_dict(), write_checkpoint=lambda path: save_checkpoint(model, path)
    )
    return registry.put("train", run_cfg, art)


def _train_worker(args: tuple[ExperimentConfig, int]) -> tuple[RunRecord, bool]:
    return train_one(*args)


def _fan_out(fn, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _emit(obj: Any) -> None:
    print(json.dumps(obj, sort_keys=True))


def _override(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    if getattr(args, "seed", None):
        cfg.seeds = list(args.seed)
    if getattr(args, "out", None):
        cfg.out_dir = Path(args.out)
    return cfg


def cmd_pretrain(args: argparse.Namespace) -> int:
    cfg = _override(load_config(args.config), args)
    if cfg.pretrain is None:
        raise ConfigError("pretrain", "config has no pretrain section")
    record, created = ensure_pretrained(cfg, Registry(cfg.registry_dir))
    assert record is not None
    _emit({"run_id": record.run_id, "kind": "pretrain", "status": "computed" if created else "already computed"})
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _override(load_config(args.config), args)
    if cfg.pretrain is not None:
        # pretrain before fanning out so workers do not race on it
        ensure_pretrained(cfg, Registry(cfg.registry_dir))
    results = _fan_out(_train_worker, [(cfg, s) for s in cfg.seeds], args.jobs)
    reports = []
    registry = Registry(cfg.registry_dir)
    for seed, (record, created) in zip(cfg.seeds, results):
        _emit({
            "run_id": record.run_id,
            "seed": seed,
            "method": record.method,
            "status": "computed" if created else "already computed",
            "success": record.metrics.get("success"),
        })
        for target in cfg.targets:
            path = registry.root / "runs" / record.run_id / "reports" / f"{target}.json"
            rep = EvalReport.from_dict(json.loads(path.read_text()))
            rep.model_id = record.run_id
            reports.append(rep)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "train_report.csv").write_text(report_table(reports).to_csv(), encoding="utf-8")
    return EXIT_OK


def _trainer_for(cfg: ExperimentConfig) -> FineTuner:
    registry = Registry(cfg.registry_dir)
    record, _ = ensure_pretrained(cfg, registry)
    return cfg.fine_tuner(_encoder_state(registry, record))


def _ablate_cell(args: tuple[ExperimentConfig, str, str]):
    cfg, language, mode = args
    base = {"train": _training_set(cfg), "dev": _load_split(cfg, "dev"), "synth": _load_synth(cfg)}
    return ablation_run(base, language, mode, _trainer_for(cfg), cfg.seeds)


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _override(load_config(args.config), args)
    languages = args.language or cfg.ablation.get("languages", list(TRAINING_LANGUAGES))
    modes = args.mode or cfg.ablation.get("modes", list(ABLATION_MODES))
    for lang in languages:
        if lang not in TRAINING_LANGUAGES:
            raise ConfigError("ablation.languages", f"{lang} is not a training language")
    for mode in modes:
        if mode not in ABLATION_MODES:
            raise ConfigError("ablation.modes", f"unknown mode {mode!r}")
    if cfg.pretrain is not None:
        ensure_pretrained(cfg, Registry(cfg.registry_dir))
    cells = [(cfg, lang, mode) for lang in languages for mode in modes]
    results = _fan_out(_ablate_cell, cells, args.jobs)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "ablation.csv"
    path.write_text(ablation_csv(results), encoding="utf-8")
    _emit({"output": str(path), "rows": sum(2 * len(r.seeds) for r in results)})
    return EXIT_OK


def _sweep_sizes(cfg: ExperimentConfig) -> list[int | None]:
    raw = cfg.sweep.get("sizes", [("full" if s is None else s) for s in SWEEP_GRID])
    sizes: list[int | None] = []
    for i, s in enumerate(raw):
        if s == "full":
            sizes.append(None)
        elif isinstance(s, int) and not isinstance(s, bool) and s >= 0:
            sizes.append(s)
        else:
            raise ConfigError(f"sweep.sizes[{i}]", f"must be a non-negative integer or 'full', got {s!r}")
    return sizes


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _override(load_config(args.config), args)
    sizes = _sweep_sizes(cfg)
    controlled = cfg.sweep.get("controlled", ["es", "it"])
    points = sample_size_sweep(
        _training_set(cfg), _load_split(cfg, "dev"), sizes, _trainer_for(cfg), cfg.seeds, controlled
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "sweep.csv"
    path.write_text(sweep_csv(points), encoding="utf-8")
    _emit({"output": str(path), "points": len(points)})
    return EXIT_OK


def cmd_ensemble(args: argparse.Namespace) -> int:
    registry = Registry(args.registry)
    if args.preset is not None:
        if args.preset != SUBMISSION_PRESET:
            raise ConfigError("--preset", f"unknown preset {args.preset!r}")
        if args.member:
            raise ConfigError("--member", "cannot be combined with --preset")
        spec = submission_spec(registry)
    else:
        if not args.member:
            raise ConfigError("--member", "give at least one run id or --preset")
        members = []
        for run_id in args.member:
            rec = registry.record(run_id)
            method = {"sfit": "SFiT", "hefit": "HeFiT"}.get(rec.method or "", "SFiT")
            members.append(EnsembleMember(run_id, method, rec.compilation_id))
        spec = EnsembleSpec(tuple(members))
    result = build_submission(registry, spec, args.target)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pred_path = result.to_csv(out / f"ensemble_{args.target}.csv")
    summary: dict[str, Any] = {"output": str(pred_path), "members": len(spec.members)}
    labels_path = Path(args.labels) if args.labels else None
    if labels_path is not None:
        report = evaluate(result.with_labels(load_dataset(labels_path)), "ensemble", args.target)
        (out / f"ensemble_{args.target}_report.csv").write_text(report_table([report]).to_csv(), encoding="utf-8")
        summary["overall_r"] = report.overall_r
    _emit(summary)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    languages = args.language or list(LANGUAGES)
    for lang in languages:
        if lang not in LANGUAGES:
            raise ConfigError("--language", f"unknown language {lang!r}")
    if args.mock:
        client = MockChatClient(seed=args.seed[0] if args.seed else 0)
    else:
        settings = {}
        if args.client_config:
            settings = json.loads(Path(args.client_config).read_text(encoding="utf-8"))
        try:
            client_cfg = GenerationClientConfig(**settings)
        except TypeError as exc:
            raise ConfigError("--client-config", str(exc)) from exc
        client = HTTPChatClient(client_cfg)
    selector = FileSelector(args.selection) if args.selection else None
    out = Path(args.out)

    def one(lang: str) -> Path:
        ds = build_synth_set(lang, client, selector)
        return save_dataset(ds, out / "synth" / f"{lang}.csv")

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        paths = list(pool.map(one, languages))
    _emit({"outputs": [str(p) for p in paths], "items": 50 * len(paths)})
    return EXIT_OK


def cmd_fixtures(args: argparse.Namespace) -> int:
    root = write_fixture_tree(args.out, args.scale, args.seed[0] if args.seed else 0, True, args.pretrain_corpus)
    _emit({"output": str(root)})
    return EXIT_OK


def cmd_compilations(args: argparse.Namespace) -> int:
    configs = comp.generate_all_15()
    out = Path(args.out)
    comp.save_configs(configs, out)
    (out / "matrix.tsv").write_text(comp.format_matrix(configs), encoding="utf-8")
    _emit({"output": str(out), "settings": len(configs)})
    return EXIT_OK


def cmd_registry(args: argparse.Namespace) -> int:
    for rec in Registry(args.registry).list(args.kind):
        _emit({
            "run_id": rec.run_id,
            "kind": rec.kind,
            "seed": rec.seed,
            "method": rec.method,
            "compilation": rec.compilation_id,
            "metrics": rec.metrics,
        })
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hefitlab", description="Fine-tuning experiments for intimacy regression.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config: bool = True) -> None:
        if config:
            p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--seed", type=int, nargs="+", help="seed list, overrides the config")
        p.add_argument("--jobs", type=int, default=1, help="run up to N independent jobs at once")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("pretrain", help="pretrain the encoder on the formal corpus")
    common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="fine-tune one model per seed and store the runs")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="zero/few/synthetic-few shot ablation, writes ablation.csv")
    common(p)
    p.add_argument("--language", nargs="+", help="restrict to these training languages")
    p.add_argument("--mode", nargs="+", choices=ABLATION_MODES)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="Spanish/Italian sample-size sweep, writes sweep.csv")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ensemble", help="average stored run predictions")
    p.add_argument("--registry", required=True)
    p.add_argument("--member", nargs="+", help="run ids to average")
    p.add_argument("--preset", help=f"named composition, e.g. {SUBMISSION_PRESET}")
    p.add_argument("--target", default="test", choices=("dev", "test"))
    p.add_argument("--labels", help="labelled CSV to score the ensemble against")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("synth", help="generate 50 synthetic items per language")
    common(p, config=False)
    p.set_defaults(out=".")
    p.add_argument("--language", nargs="+")
    p.add_argument("--mock", action="store_true", help="use the offline deterministic client")
    p.add_argument("--client-config", help="JSON with GenerationClientConfig fields")
    p.add_argument("--selection", help="file listing the 5 batch ids to keep")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fixtures", help="write a synthetic data tree")
    common(p, config=False)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--pretrain-corpus", type=int, default=1000, help="formal sentences to write")
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("compilations", help="write the 15 compilation settings")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compilations)

    p = sub.add_parser("registry", help="list stored runs")
    p.add_argument("--registry", required=True)
    p.add_argument("--kind", choices=("pretrain", "train"))
    p.set_defaults(func=cmd_registry)
    return parser


def _error_payload(exc: BaseException) -> dict:
    payload: dict[str, Any] = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        payload["field"] = exc.field
    missing = getattr(exc, "missing", None)
    if missing:
        payload["missing"] = list(missing)[:20]
    diagnostics = getattr(exc, "diagnostics", None)
    if diagnostics:
        payload["diagnostics"] = diagnostics[:20]
    return payload


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    if args.command == "fixtures" and args.out is None:
        parser.error("fixtures needs --out")
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(json.dumps(_error_payload(exc)), file=sys.stderr)
        return EXIT_USAGE
    except (LabError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps(_error_payload(exc)), file=sys.stderr)
        return EXIT_ERROR
