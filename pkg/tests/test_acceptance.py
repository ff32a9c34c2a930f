"""Acceptance criteria 1-10, one test each.

Every test records a PASS/FAIL line; the lines are printed in the pytest
terminal summary and also when this file is run as a script.
"""

import contextlib
import itertools
import json
import math
import time

import numpy as np
import pytest

from hefitlab import autodiff as ad
from hefitlab.cli import main
from hefitlab.compilation import compile_training_set, expected_size, format_matrix, generate_all_15, get_config
from hefitlab.data import LANGUAGES, TRAINING_LANGUAGES
from hefitlab.ensemble import (
    SUBMISSION_PRESET,
    SUBMISSION_ROWS,
    EnsembleMember,
    EnsembleSpec,
    build_submission,
    ensemble_average,
    submission_spec,
)
from hefitlab.errors import ValidationError
from hefitlab.evaluation import (
    FEW_SHOT_K,
    PredictionSet,
    ablation_compilation,
    ablation_csv,
    ablation_run,
    controlled_compilation,
    parse_plot_csv,
    pearson_r,
    sample_size_sweep,
    sweep_csv,
)
from hefitlab.fixtures import REFERENCE_TRAIN, formal_corpus, human_sets_by_language, make_split
from hefitlab.model import ModelConfig, forward, init_model, pretrain
from hefitlab.synthgen import (
    REFERENCE_EXAMPLES,
    GeneratedBatch,
    MockChatClient,
    PromptSpec,
    build_example_line,
    build_prompt,
    build_synth_set,
    parse_generated,
    select_batches,
)
from hefitlab.tokenizer import tokenize_batch
from hefitlab.training import FineTuner, HeFiTConfig, HypSet, hefit, run_batch, sfit, successful_runs

from gradcheck import check, weighted_sum
from oracles import pearson_direct

RESULTS: dict[int, str] = {}


@contextlib.contextmanager
def criterion(number: int, title: str):
    start = time.perf_counter()
    details: list[str] = []
    try:
        yield details
    except BaseException:
        RESULTS[number] = f"criterion {number:2d} FAIL  {title}  " + "; ".join(details)
        print(RESULTS[number])
        raise
    took = time.perf_counter() - start
    RESULTS[number] = f"criterion {number:2d} PASS  {title}  ({took:.1f}s) " + "; ".join(details)
    print(RESULTS[number])


def summary_lines() -> list[str]:
    return [RESULTS.get(n, f"criterion {n:2d} FAIL  not run") for n in range(1, 11)]


# ---------------------------------------------------------------------------


def test_c01_metric_oracle():
    with criterion(1, "pearson_r vs direct formula") as notes:
        rng = np.random.default_rng(2024)
        cases = []
        for k in range(1000):
            x = rng.normal(size=int(rng.integers(2, 501)))
            # every other pair is correlated
            cases.append((x, rng.uniform(-2, 2) * x * (k % 2) + rng.normal(size=len(x))))
        start = time.perf_counter()
        worst = max(abs(pearson_r(x, y) - pearson_direct(list(x), list(y))) for x, y in cases)
        took = time.perf_counter() - start
        notes.append(f"max abs diff {worst:.2e}, {took:.2f}s")
        assert worst <= 1e-12
        assert took < 1.0
        assert pearson_r([1, 2, 3], [1, 2, 3]) == 1.0
        assert pearson_r([1, 2, 3], [3, 2, 1]) == -1.0
        # cov 1.0, var 1.25 each: 1 / 1.25
        assert pearson_r([1, 2, 3, 4], [2, 1, 4, 3]) == 0.6


def _op_cases(rng):
    def leaf(*shape):
        return ad.Tensor(rng.normal(size=shape), requires_grad=True)

    mask = np.zeros((2, 1, 4))
    mask[1, 0, 2:] = -1e9
    pool_mask = np.array([[1, 1, 1, 0], [1, 0, 0, 0]], dtype=bool)
    return {
        "matmul": (lambda t: weighted_sum(ad.matmul(t[0], t[1])), [leaf(2, 3, 4), leaf(4, 3)]),
        "add": (lambda t: weighted_sum(ad.add(ad.add(t[0], t[1]), t[2])), [leaf(3, 4), leaf(4), leaf(3, 4)]),
        "mul": (lambda t: weighted_sum(ad.mul(t[0], t[1])), [leaf(3, 4), leaf(3, 4)]),
        "scale": (lambda t: weighted_sum(ad.scale(t[0], -1.7)), [leaf(5)]),
        "reshape": (lambda t: weighted_sum(ad.reshape(t[0], (6, 2))), [leaf(3, 4)]),
        "transpose": (lambda t: weighted_sum(ad.transpose(t[0], (1, 2, 0))), [leaf(2, 3, 4)]),
        "tanh": (lambda t: weighted_sum(ad.tanh(t[0])), [leaf(3, 4)]),
        "gelu": (lambda t: weighted_sum(ad.gelu(t[0])), [leaf(3, 4)]),
        "softmax": (lambda t: weighted_sum(ad.softmax(t[0], mask)), [leaf(2, 3, 4)]),
        "layer_norm": (lambda t: weighted_sum(ad.layer_norm(*t)), [leaf(2, 3, 5), leaf(5), leaf(5)]),
        "embedding": (lambda t: weighted_sum(ad.embedding(t[0], np.array([[0, 2, 2], [5, 1, 0]]))), [leaf(6, 3)]),
        "dropout": (lambda t: weighted_sum(ad.dropout(t[0], 0.4, True, np.random.default_rng(1))), [leaf(4, 4)]),
        "mean_pool": (lambda t: weighted_sum(ad.mean_pool(t[0], pool_mask)), [leaf(2, 4, 3)]),
        "mse": (lambda t: ad.mse(t[0], np.arange(5.0)), [leaf(5)]),
        "cross_entropy": (lambda t: ad.cross_entropy(t[0], np.array([0, 4, 2])), [leaf(3, 6)]),
    }


def test_c02_gradient_correctness():
    with criterion(2, "finite differences on every op and the tiny model") as notes:
        rng = np.random.default_rng(7)
        errors = {name: check(build, inputs) for name, (build, inputs) in _op_cases(rng).items()}
        cfg = ModelConfig(d_model=16, n_layers=1, n_heads=2, d_ff=32, max_len=8, head_hidden_dim=16)
        model = init_model(cfg, 0)
        for t in model.params.values():
            t.data = t.data + rng.normal(0, 0.2, size=t.shape)
        ids = tokenize_batch(["hi!", "abcdef"], cfg.max_len)
        labels = np.array([1.0, 4.0])
        tensors = list(model.params.values())
        # the key bias has an exactly zero gradient, so the model is scored on its joint gradient scale
        errors["model"] = check(lambda _: ad.mse(forward(model, ids), labels), tensors, joint=True)
        worst = max(errors, key=errors.get)
        notes.append(f"{len(errors) - 1} ops + model, worst {worst} {errors[worst]:.2e}")
        assert set(errors) - {"model"} == set(ad.OP_KINDS)
        assert all(e < 1e-6 for e in errors.values())


TINY = ModelConfig(d_model=16, n_layers=1, n_heads=2, d_ff=32, max_len=32, head_hidden_dim=16)


def test_c03_hefit_invariant():
    with criterion(3, "HeFiT stage-1 freeze, stage-2 lr, 3+6 epochs") as notes:
        train = make_split({lang: 64 // 6 + (k < 64 % 6) for k, lang in enumerate(TRAINING_LANGUAGES)}, 0, "train")
        assert len(train) == 64
        model = init_model(TINY, 0)
        names = [n for n in model.params if model.group_of(n) == "encoder"]
        start = {n: model.params[n].data.tobytes() for n in names}
        snapshots = []

        def on_epoch(m, hist):
            snapshots.append(all(m.params[n].data.tobytes() == start[n] for n in names))

        cfg = HeFiTConfig()
        _, hist = hefit(model, train, cfg, seed=0, on_epoch=on_epoch)
        notes.append(f"epochs {hist.epochs}, boundary {hist.stage_boundaries}, lrs {sorted(set(hist.epoch_lrs))}")
        assert snapshots[:3] == [True] * 3 and not snapshots[3]
        assert hist.epochs == 9 and hist.stage_boundaries == [3]
        assert hist.epoch_lrs[3:] == [cfg.base_learning_rate * 0.5] * 6
        assert hist.epoch_lrs[:3] == [cfg.base_learning_rate] * 3
        steps = math.ceil(64 / 8)
        assert hist.step_lrs == [cfg.base_learning_rate] * 3 * steps + [cfg.base_learning_rate / 2] * 6 * steps


def test_c04_overfit():
    with criterion(4, "SFiT overfits 8 samples") as notes:
        train = make_split({"en": 8}, 3, "train")
        hyp = HypSet("overfit", epochs=500, head_hidden_dropout_p=0.0, learning_rate=3e-3, batch_size=8)
        model, hist = sfit(init_model(TINY, 0), train, hyp, seed=0)
        loss, _ = run_batch(model, (train.tokens(TINY.max_len), train.scores), "eval")
        notes.append(f"train MSE {loss.item():.2e} after {len(hist.step_lrs)} steps")
        assert len(hist.step_lrs) <= 500
        assert loss.item() < 1e-2
        assert hist.success


def test_c05_compilation_matrix(golden_matrix):
    with criterion(5, "compilation matrix and row-1 size") as notes:
        assert format_matrix(generate_all_15()) == golden_matrix
        humans = human_sets_by_language(make_split(REFERENCE_TRAIN, 0, "train"))
        synth = {lang: make_split({lang: 50}, 0, f"synth-{lang}", origin="synthetic") for lang in ("nl", "hi", "ko", "ar")}
        # half of Spanish, all Italian, all four other human languages, four synthetic sets
        oracle = math.floor(0.5 * 1274) + 1226 + (1270 + 1285 + 1271 + 1277) + 4 * 50
        size = len(compile_training_set(get_config(1), humans, synth))
        notes.append(f"row 1 holds {size} items")
        assert oracle == 7166 == size == expected_size(get_config(1), REFERENCE_TRAIN)


class _FakeRegistry:
    def __init__(self, sets):
        self.sets = sets

    def find(self, compilation_id, method):
        return [f"{method}-{compilation_id}"] if (method, compilation_id) in self.sets else []

    def predictions(self, run_id, target):
        method, row = run_id.split("-")
        return self.sets[(method, int(row))]


def test_c06_ensemble_contracts():
    with criterion(6, "ensemble averaging and the submission preset") as notes:
        rng = np.random.default_rng(3)
        ids = tuple(f"t{i}" for i in range(40))
        members = [PredictionSet(ids, ("en",) * 40, rng.uniform(1, 5, 40)) for _ in range(5)]
        ref = ensemble_average(members).predictions.tobytes()
        for perm in itertools.permutations(range(5)):
            assert ensemble_average([members[i] for i in perm]).predictions.tobytes() == ref
        assert ensemble_average(members[:1]).predictions.tobytes() == members[0].predictions.tobytes()
        pair = [PredictionSet(("a", "b"), ("en", "en"), np.array(v, dtype=float)) for v in ([1, 3], [3, 1])]
        assert ensemble_average(pair).predictions.tolist() == [2.0, 2.0]
        sets = {
            (method, row): PredictionSet(ids, ("en",) * 40, rng.uniform(1, 5, 40))
            for method, rows in SUBMISSION_ROWS.items()
            for row in rows
        }
        spec = submission_spec(_FakeRegistry(sets))
        spec.validate()
        got = {m: sorted(x.compilation_id for x in spec.members if x.method == m) for m in ("HeFiT", "SFiT")}
        notes.append(f"preset HeFiT rows {got['HeFiT']}, SFiT rows {got['SFiT']}")
        assert got == {"HeFiT": [1, 2, 3, 4, 11, 12], "SFiT": [3, 4, 5, 10]}
        expected = np.mean(np.stack([s.predictions for s in sets.values()]), axis=0)
        np.testing.assert_allclose(build_submission(_FakeRegistry(sets), spec).predictions, expected, rtol=1e-15)
        bad = EnsembleSpec(spec.members[:-1] + (EnsembleMember("x", "SFiT", 7),), SUBMISSION_PRESET)
        with pytest.raises(ValidationError):
            bad.validate()


def test_c07_synth_pipeline():
    with criterion(7, "mock synthesis, reference lines, batch selection") as notes:
        client = MockChatClient(seed=0)
        sizes = {lang: len(build_synth_set(lang, client)) for lang in LANGUAGES}
        notes.append(f"{sum(sizes.values())} items over {len(sizes)} languages")
        assert set(sizes.values()) == {50} and sum(sizes.values()) == 500 and len(sizes) == 10
        for text, score in REFERENCE_EXAMPLES:
            [item] = parse_generated(build_example_line(text, score), "en").items
            assert item.text == text.strip() and item.score == score
        prompt = build_prompt(PromptSpec("en"))
        raws = [client.complete(prompt) for _ in range(10)]
        batches = [parse_generated(raw, "en", i) for i, raw in enumerate(raws)]
        first = [b.batch_id for b in select_batches(batches)]
        shuffled = [batches[i] for i in np.random.default_rng(1).permutation(10)]
        assert len(first) == 5 and len(set(first)) == 5
        assert [b.batch_id for b in select_batches(shuffled)] == first
        assert all(isinstance(b, GeneratedBatch) for b in batches)


# desk-scale setting: a formal pretraining corpus, a tweet-like regression task
DESK = ModelConfig(d_model=32, n_layers=2, n_heads=4, d_ff=64, max_len=48, head_hidden_dim=32)
DESK_LR = 1e-3
DESK_EPOCHS = 9
N_SEEDS = 10


def test_c08_hefit_vs_sfit_desk_scale():
    with criterion(8, "HeFiT vs SFiT at desk scale") as notes:
        train = make_split({lang: 60 for lang in TRAINING_LANGUAGES}, 0, "train")
        dev = make_split({lang: 30 for lang in TRAINING_LANGUAGES}, 0, "dev")
        base = init_model(DESK, 1234)
        losses = pretrain(base, formal_corpus(1000, 0), steps=300, seed=0, lr=1e-3)
        assert np.mean(losses[-20:]) < losses[0]
        encoder = {n: a for n, a in base.state_dict().items() if base.group_of(n) == "encoder"}
        scores = {}
        for plan in ("sfit", "hefit"):
            tuner = FineTuner(
                DESK,
                plan,
                hyp=HypSet("desk", DESK_EPOCHS, 0.05, DESK_LR, 8),
                hefit_config=HeFiTConfig(base_learning_rate=DESK_LR),
                encoder_state=encoder,
            )
            runs = successful_runs(lambda seed: tuner.fit(train, seed, dev), N_SEEDS)
            scores[plan] = np.array([hist.dev_r[-1] for _, hist in runs])
        mean = {p: float(v.mean()) for p, v in scores.items()}
        std = {p: float(v.std(ddof=1)) for p, v in scores.items()}
        notes.append(
            f"HeFiT r {mean['hefit']:.3f} sd {std['hefit']:.3f}, SFiT r {mean['sfit']:.3f} sd {std['sfit']:.3f}"
        )
        assert len(scores["hefit"]) == len(scores["sfit"]) == N_SEEDS
        assert mean["hefit"] >= mean["sfit"] - 0.02
        assert std["hefit"] <= 1.5 * std["sfit"]


def _mean_trainer(train, dev, seed):
    rng = np.random.default_rng(seed)
    means = {lang: train.by_language(lang).scores.mean() if train.count(lang) else 2.0 for lang in LANGUAGES}
    preds = np.array([means[lang] for lang in dev.languages]) + rng.normal(0, 0.3, len(dev))
    return PredictionSet.from_dataset(dev, preds)


def test_c09_ablation_plumbing():
    with criterion(9, "ablation and sweep plumbing") as notes:
        train = make_split({lang: 80 for lang in TRAINING_LANGUAGES}, 0, "train")
        dev = make_split({lang: 15 for lang in TRAINING_LANGUAGES}, 0, "dev")
        synth = {lang: make_split({lang: 50}, 0, f"synth-{lang}", origin="synthetic") for lang in LANGUAGES}
        for lang in TRAINING_LANGUAGES:
            zero = ablation_compilation(train, synth, lang, "ZeroShot", 0)
            few = ablation_compilation(train, synth, lang, "FewShot", 0)
            syn = ablation_compilation(train, synth, lang, "SynthFewShot", 0)
            assert zero.count(lang) == 0
            assert few.count(lang) == few.count(lang, "human") == FEW_SHOT_K == 50
            assert syn.count(lang) == syn.count(lang, "synthetic") == 50
            assert len(zero) == len(train) - 80 and len(few) == len(syn) == len(zero) + 50
        points = sample_size_sweep(train, dev, [0, 20, None], _mean_trainer, [0, 1])
        zero_shot = ablation_compilation(ablation_compilation(train, {}, "es", "ZeroShot", 0), {}, "it", "ZeroShot", 0)
        assert controlled_compilation(train, 0, 0).ids == zero_shot.ids
        size0 = [p for p in points if p.size == 0][0]
        zs = _mean_trainer(zero_shot, dev, 0)
        assert len(size0.report.per_language) == len(set(zs.languages)) and size0.report.n == len(zs)
        results = [
            ablation_run({"train": train, "dev": dev, "synth": synth}, "pt", mode, _mean_trainer, [0, 1])
            for mode in ("ZeroShot", "FewShot", "SynthFewShot")
        ]
        rows = parse_plot_csv(ablation_csv(results))
        expected = [row for res in results for row in res.rows()]
        assert [(r["language"], r["mode"], r["panel"], r["seed"], r["r"]) for r in rows] == expected
        sweep_rows = parse_plot_csv(sweep_csv(points))
        assert sweep_rows[0]["r"] == points[0].report.overall_r
        notes.append(f"{len(rows)} ablation rows and {len(sweep_rows)} sweep rows parsed back exactly")


def test_c10_cli_determinism(tmp_path, capsys):
    with criterion(10, "byte-identical CLI outputs on re-run") as notes:
        outputs = []
        for name in ("a", "b"):
            root = tmp_path / name
            assert main(["fixtures", "--out", str(root / "data"), "--scale", "0.05", "--pretrain-corpus", "60"]) == 0
            config = {
                "data_dir": "data",
                "registry_dir": "reg",
                "out_dir": "out",
                "model": {"d_model": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32, "max_len": 32, "head_hidden_dim": 16},
                "pretrain": {"corpus": "formal.txt", "steps": 5},
                "plan": {"method": "hefit", "head_epochs": 1, "full_epochs": 1, "learning_rate": 1e-3},
                "seeds": [0, 1],
                "sweep": {"sizes": [0, 30, "full"]},
            }
            (root / "config.json").write_text(json.dumps(config))
            cfg = str(root / "config.json")
            for argv in (
                ["train", "--config", cfg],
                ["ablate", "--config", cfg, "--language", "fr"],
                ["sweep", "--config", cfg],
                ["synth", "--mock", "--out", str(root / "out"), "--language", "hi", "ar"],
                ["compilations", "--out", str(root / "out" / "comp")],
            ):
                assert main(argv) == 0, argv
            capsys.readouterr()
            files = sorted(p for p in (root / "out").rglob("*") if p.is_file())
            files += sorted((root / "reg").rglob("*.csv"))
            outputs.append({str(p.relative_to(root)): p.read_bytes() for p in files})
        notes.append(f"{len(outputs[0])} files compared")
        assert len(outputs[0]) > 20
        assert outputs[0] == outputs[1]


if __name__ == "__main__":
    import sys

    # the conftest summary hook prints the PASS/FAIL lines
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
