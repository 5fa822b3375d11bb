"""Experiment configuration and the synth -> pretrain -> unlearn -> eval pipeline.

An experiment is one INI file. Every stage reads its inputs from, and writes
its outputs to, the experiment's output directory::

    <output_dir>/
      rho1.00/                 one unit per synthetic overlap (or "external")
        bundle/                synthetic files + manifest.json
        vocab.txt
        base.ulab              pretrained baseline checkpoint
        pretrain.json
        masked/                run.json, ckpt-stepNNNN.ulab, report.csv, report.txt
        full-sequence/
      rho0.00/ ...

Stages can be run one at a time (``synth``, ``pretrain``, ``unlearn``,
``eval``) or all together by :func:`run_repro`, which also checks the
acceptance thresholds.
"""

from __future__ import annotations

import configparser
import json
import logging
import shutil
import time
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

from .artifacts import atomic_write_text, sha256_file
from .data import (default_synth_config, generate_synthetic, load_hatespeech_jsonl, load_pairs_csv,
                   load_triads_json, read_bundle_manifest, read_lines, write_bundle)
from .evaluation import REPORT_COLUMNS, report_csv, report_text, transfer_matrix
from .model import ChecksumError, ConfigError, ModelConfig, init_model, load_checkpoint, save_checkpoint
from .text import Vocabulary, build_vocab
from .train import PretrainConfig, pretrain
from .unlearn import (MaskedExample, MaskLexicon, RunManifest, UnlearnConfig, apply_lexicon_mask,
                      run_unlearning)

log = logging.getLogger(__name__)

DATA_KEYS = ("pretrain_corpus", "unlearn_set", "unlearn_test_set", "retain_set", "pairs", "triads")
SYNTH_KEYS = ("templates_per_domain", "toxic_per_domain", "anti_per_domain", "neutral", "retain",
              "stereotype_strength", "template_skew", "unlearn_fraction")


@dataclass
class Thresholds:
    retain_max_ratio: float = 1.10
    lm_max_drop: float = 5.0
    unlearn_min_ratio: float = 1.5
    crows_min_drop: float = 2.0
    crows_floor: float = 45.0
    runtime_budget_s: float = 600.0
    check_determinism: bool = True


@dataclass
class ExperimentConfig:
    """Everything one experiment needs; see the README for the annotated file format."""

    seed: int = 0
    output_dir: Path = Path("runs/experiment")
    overlaps: list[float] = field(default_factory=lambda: [1.0, 0.0])
    modes: list[str] = field(default_factory=lambda: ["masked", "full-sequence"])
    synth: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    target_group: str | None = None
    mask_words: list[str] = field(default_factory=list)
    model: dict = field(default_factory=dict)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    unlearn: UnlearnConfig = field(default_factory=UnlearnConfig)
    thresholds: Thresholds = field(default_factory=Thresholds)
    source: str = ""

    @property
    def external(self) -> bool:
        return any(self.data.get(k) for k in DATA_KEYS)

    def units(self) -> list[str]:
        return ["external"] if self.external else [f"rho{r:.2f}" for r in self.overlaps]

    def unit_dir(self, unit: str) -> Path:
        return self.output_dir / unit

    def unit_modes(self, unit: str) -> list[str]:
        # the first unit gets every mode; the others only the first (the contrast runs)
        return self.modes if unit == self.units()[0] else self.modes[:1]

    def validate(self) -> "ExperimentConfig":
        if not self.overlaps:
            raise ConfigError("[experiment] overlaps must list at least one value")
        for r in self.overlaps:
            if not 0.0 <= r <= 1.0:
                raise ConfigError(f"[experiment] overlap {r} outside [0, 1]")
        for m in self.modes:
            if m not in ("masked", "full-sequence"):
                raise ConfigError(f"[experiment] unknown mode {m!r}")
        if self.external:
            missing = [k for k in DATA_KEYS if not self.data.get(k)]
            if missing:
                raise ConfigError(f"[data] external data needs every path set; missing {missing}")
            for k in DATA_KEYS:
                if not Path(self.data[k]).exists():
                    raise ConfigError(f"[data] {k} = {self.data[k]} does not exist")
        try:
            self.unlearn.validate()
        except ValueError as e:
            raise ConfigError(f"[unlearn] {e}") from None
        if self.pretrain.steps < 1 or self.pretrain.batch_size < 1:
            raise ConfigError("[pretrain] steps and batch_size must be >= 1")
        return self

    def with_overrides(self, seed: int | None = None, output_dir=None) -> "ExperimentConfig":
        cfg = ExperimentConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        if seed is not None:
            cfg.seed = int(seed)
        if output_dir is not None:
            cfg.output_dir = Path(output_dir)
        cfg.pretrain = PretrainConfig(**{**asdict(self.pretrain), "seed": cfg.seed})
        cfg.unlearn = UnlearnConfig(**{**asdict(self.unlearn), "seed": cfg.seed})
        return cfg


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _words(text: str) -> list[str]:
    return [x for x in text.replace(",", " ").split() if x]


def _typed(section: configparser.SectionProxy, cls, skip=()) -> dict:
    out = {}
    known = {f.name: f for f in fields(cls)}
    for key in section:
        if key in skip:
            continue
        if key not in known:
            raise ConfigError(f"[{section.name}] unknown key {key!r}")
        default = known[key].default
        raw = section[key].strip()
        try:
            if isinstance(default, bool):
                out[key] = section.getboolean(key)
            elif isinstance(default, int) and not isinstance(default, bool):
                out[key] = int(raw)
            elif isinstance(default, float):
                out[key] = None if raw.lower() in ("", "none") else float(raw)
            else:
                out[key] = raw
        except ValueError:
            raise ConfigError(f"[{section.name}] {key} = {raw!r} is not a valid value") from None
    return out


def parse_config(text: str, source: str = "<string>", base_dir: Path | None = None) -> ExperimentConfig:
    """Parse INI text into an :class:`ExperimentConfig`. Relative data paths resolve against ``base_dir``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None
    known = {"experiment", "data", "model", "pretrain", "unlearn", "acceptance"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {sorted(unknown)}")
    cfg = ExperimentConfig(source=source)
    try:
        if cp.has_section("experiment"):
            ex = cp["experiment"]
            extra = set(ex) - {"seed", "output_dir", "overlaps", "modes"}
            if extra:
                raise ConfigError(f"[experiment] unknown key(s) {sorted(extra)}")
            cfg.seed = ex.getint("seed", fallback=0)
            cfg.output_dir = Path(ex.get("output_dir", fallback=str(cfg.output_dir)))
            if "overlaps" in ex:
                cfg.overlaps = _floats(ex["overlaps"])
            if "modes" in ex:
                cfg.modes = _words(ex["modes"])
        if cp.has_section("data"):
            sec = cp["data"]
            for key in sec:
                raw = sec[key].strip()
                if key in SYNTH_KEYS:
                    cfg.synth[key] = float(raw) if "." in raw or "e" in raw.lower() else int(raw)
                elif key in DATA_KEYS:
                    if raw:
                        p = Path(raw)
                        cfg.data[key] = str(p if p.is_absolute() or base_dir is None else base_dir / p)
                elif key == "target_group":
                    cfg.target_group = raw or None
                elif key == "mask_words":
                    cfg.mask_words = _words(raw)
                else:
                    raise ConfigError(f"[data] unknown key {key!r}")
        if cp.has_section("model"):
            cfg.model = _typed(cp["model"], ModelConfig, skip=("vocab_size", "seed"))
        if cp.has_section("pretrain"):
            cfg.pretrain = PretrainConfig(**_typed(cp["pretrain"], PretrainConfig))
        if cp.has_section("unlearn"):
            cfg.unlearn = UnlearnConfig(**_typed(cp["unlearn"], UnlearnConfig))
        if cp.has_section("acceptance"):
            cfg.thresholds = Thresholds(**_typed(cp["acceptance"], Thresholds))
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{source}: {e}") from None
    cfg = cfg.with_overrides()
    return cfg.validate()


def load_config(path, seed: int | None = None, output_dir=None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    cfg = parse_config(path.read_text(encoding="utf-8"), source=str(path), base_dir=path.parent)
    return cfg.with_overrides(seed, output_dir).validate()


def acceptance_config_text() -> str:
    """The shipped acceptance config, as text."""
    return resources.files("unlearnlab").joinpath("configs/acceptance.ini").read_text(encoding="utf-8")


def acceptance_config(seed: int | None = None, output_dir=None) -> ExperimentConfig:
    cfg = parse_config(acceptance_config_text(), source="unlearnlab/configs/acceptance.ini")
    return cfg.with_overrides(seed, output_dir).validate()


def calibration_record() -> dict:
    """The fixture manifest: calibration seeds, per-seed outcomes and the thresholds they fixed."""
    text = resources.files("unlearnlab").joinpath("configs/calibration.json").read_text(encoding="utf-8")
    return json.loads(text)


# ---------------------------------------------------------------- stages


def synth_config_for(cfg: ExperimentConfig, overlap: float):
    sc = default_synth_config(overlap=overlap, seed=cfg.seed)
    for k, v in cfg.synth.items():
        setattr(sc, k, v)
    return sc


def run_synth(cfg: ExperimentConfig) -> dict[str, dict]:
    """Write one synthetic bundle per overlap. Returns ``{unit: bundle manifest}``."""
    if cfg.external:
        raise ConfigError("synth has nothing to do: [data] points at external files")
    out = {}
    for unit, overlap in zip(cfg.units(), cfg.overlaps):
        bundle = generate_synthetic(synth_config_for(cfg, overlap))
        out[unit] = write_bundle(bundle, cfg.unit_dir(unit) / "bundle")
        log.info("wrote bundle %s", cfg.unit_dir(unit) / "bundle")
    return out


@dataclass
class UnitData:
    pretrain: list[str]
    unlearn_train: list
    unlearn_test: list
    retain: list[str]
    pairs: list
    triads: list
    unlearn_domain: str | None


def unit_data(cfg: ExperimentConfig, unit: str) -> UnitData:
    """Load a unit's text files, verifying the synthetic bundle's checksums first."""
    if unit == "external":
        d = cfg.data
        paths = {k: Path(d[k]) for k in DATA_KEYS}
        domain = cfg.target_group
    else:
        root = cfg.unit_dir(unit) / "bundle"
        if not (root / "manifest.json").exists():
            raise ConfigError(f"{root}: no bundle found; run `synth` first")
        manifest = read_bundle_manifest(root, verify=True)
        paths = {"pretrain_corpus": root / manifest["files"]["pretrain"]["path"],
                 "unlearn_set": root / manifest["files"]["unlearn_train"]["path"],
                 "unlearn_test_set": root / manifest["files"]["unlearn_test"]["path"],
                 "retain_set": root / manifest["files"]["retain"]["path"],
                 "pairs": root / manifest["files"]["pairs"]["path"],
                 "triads": root / manifest["files"]["triads"]["path"]}
        domain = manifest["unlearn_domain"]
    group = cfg.target_group if unit == "external" else None
    return UnitData(
        pretrain=read_lines(paths["pretrain_corpus"]),
        unlearn_train=load_hatespeech_jsonl(paths["unlearn_set"], target_group=group),
        unlearn_test=load_hatespeech_jsonl(paths["unlearn_test_set"], target_group=group),
        retain=read_lines(paths["retain_set"]),
        pairs=load_pairs_csv(paths["pairs"]),
        triads=load_triads_json(paths["triads"]),
        unlearn_domain=domain,
    )


def run_pretrain(cfg: ExperimentConfig) -> dict[str, dict]:
    """Build the vocabulary and pretrain a baseline per unit. Returns ``{unit: pretrain record}``."""
    out = {}
    for unit in cfg.units():
        data = unit_data(cfg, unit)
        udir = cfg.unit_dir(unit)
        vocab = build_vocab(data.pretrain)
        vocab.save(udir / "vocab.txt")
        model = init_model(ModelConfig(vocab_size=len(vocab), seed=cfg.seed, **cfg.model))
        corpus = [vocab.encode(s) for s in data.pretrain]
        history = pretrain(model, corpus, cfg.pretrain)
        digest = save_checkpoint(model, udir / "base.ulab")
        record = {
            "format": "unlearnlab-pretrain/1",
            "config": asdict(cfg.pretrain),
            "model_config": asdict(model.cfg),
            "history": [{"step": s, "loss": v} for s, v in history],
            "checkpoint": "base.ulab",
            "sha256": digest,
            "vocab": "vocab.txt",
            "vocab_sha256": sha256_file(udir / "vocab.txt"),
        }
        # no wall-clock fields: this file must be bit-identical across reruns
        atomic_write_text(udir / "pretrain.json", json.dumps(record, indent=2, sort_keys=True) + "\n")
        out[unit] = record
        log.info("%s: pretrain loss %.4f -> %.4f", unit, history[0][1], history[-1][1])
    return out


def load_baseline(cfg: ExperimentConfig, unit: str):
    udir = cfg.unit_dir(unit)
    rec_path = udir / "pretrain.json"
    if not rec_path.exists():
        raise ConfigError(f"{udir}: no pretrained baseline; run `pretrain` first")
    rec = json.loads(rec_path.read_text(encoding="utf-8"))
    for name, key in ((rec["checkpoint"], "sha256"), (rec["vocab"], "vocab_sha256")):
        if sha256_file(udir / name) != rec[key]:
            raise ChecksumError(f"{udir / name}: checksum does not match pretrain.json")
    return load_checkpoint(udir / rec["checkpoint"]), Vocabulary.load(udir / rec["vocab"])


def masked_dataset(cfg: ExperimentConfig, records, vocab: Vocabulary):
    fallback = MaskLexicon(cfg.mask_words) if cfg.mask_words else None
    out = []
    for r in records:
        lex = MaskLexicon(r.mask_words) if r.mask_words else fallback
        seq = vocab.encode(r.text)
        if lex is None:
            out.append(MaskedExample(seq, (), r.target_group, "record has no mask words"))
        else:
            out.append(apply_lexicon_mask(seq, lex, vocab, r.target_group))
    return out


def run_unlearn(cfg: ExperimentConfig) -> dict[tuple[str, str], RunManifest]:
    """Unlearn from each unit's baseline in each configured mode."""
    out = {}
    for unit in cfg.units():
        model, vocab = load_baseline(cfg, unit)
        data = unit_data(cfg, unit)
        dataset = masked_dataset(cfg, data.unlearn_train, vocab)
        for mode in cfg.unit_modes(unit):
            run_dir = cfg.unit_dir(unit) / mode
            if run_dir.exists():
                shutil.rmtree(run_dir)
            ucfg = UnlearnConfig(**{**asdict(cfg.unlearn), "mode": mode})
            manifest, _ = run_unlearning(model, dataset, ucfg, run_dir)
            manifest.base_checkpoint = "../base.ulab"
            manifest.save(run_dir / "run.json")
            out[(unit, mode)] = manifest
            log.info("%s/%s: objective %.4f -> %.4f", unit, mode, manifest.losses[0][1], manifest.losses[-1][1])
    return out


def run_eval(cfg: ExperimentConfig) -> dict[tuple[str, str], list]:
    """Score every checkpoint of every run; writes ``report.csv`` and ``report.txt`` per run."""
    out = {}
    for unit in cfg.units():
        _, vocab = load_baseline(cfg, unit)
        data = unit_data(cfg, unit)
        corpora = {"retain": [vocab.encode(s) for s in data.retain],
                   "unlearn_train": [vocab.encode(r.text) for r in data.unlearn_train],
                   "unlearn_test": [vocab.encode(r.text) for r in data.unlearn_test]}
        for mode in cfg.unit_modes(unit):
            run_dir = cfg.unit_dir(unit) / mode
            if not (run_dir / "run.json").exists():
                raise ConfigError(f"{run_dir}: no run manifest; run `unlearn` first")
            manifest = RunManifest.read(run_dir / "run.json")
            rows = transfer_matrix(manifest, vocab, data.pairs, data.triads,
                                   unlearned_domain=data.unlearn_domain, corpora=corpora)
            atomic_write_text(run_dir / "report.csv", report_csv(rows))
            atomic_write_text(run_dir / "report.txt", report_text(rows, title=f"{unit} / {mode}"))
            out[(unit, mode)] = rows
    return out


# ---------------------------------------------------------------- acceptance


@dataclass
class Check:
    criterion: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.criterion}: {self.name} -- {self.detail}"


def _cell(rows, step, domain, col):
    for r in rows:
        if r.step == step and r.domain == domain:
            d = r.row()
            return d[col]
    raise KeyError((step, domain, col))


def check_trends(cfg: ExperimentConfig, reports: dict[tuple[str, str], list]) -> list[Check]:
    """Criteria 4 to 8 from the evaluation reports of a two-overlap synthetic experiment."""
    th = cfg.thresholds
    units = cfg.units()
    primary, contrast = units[0], units[-1]
    rows = reports[(primary, "masked")]
    steps = sorted({r.step for r in rows})
    first, last = steps[0], steps[-1]
    domains = sorted({r.domain for r in rows})
    target = next(r.domain for r in rows if r.unlearned)
    other = next(d for d in domains if d != target)
    checks = []

    r0, r1 = _cell(rows, first, target, "ppl_retain"), _cell(rows, last, target, "ppl_retain")
    lm_drops = {d: _cell(rows, first, d, "ss_lm") - _cell(rows, last, d, "ss_lm") for d in domains}
    worst = max(lm_drops.values())
    checks.append(Check(4, "retain perplexity and LM score preserved",
                        r1 / r0 <= th.retain_max_ratio and worst <= th.lm_max_drop,
                        f"retain ppl x{r1 / r0:.3f} (max {th.retain_max_ratio}), "
                        f"largest ss_lm drop {worst:.2f} (max {th.lm_max_drop})"))

    ratios = {c: _cell(rows, last, target, c) / _cell(rows, first, target, c)
              for c in ("ppl_unlearn_train", "ppl_unlearn_test")}
    checks.append(Check(5, "unlearn-set perplexity rises",
                        all(v >= th.unlearn_min_ratio for v in ratios.values()),
                        f"train x{ratios['ppl_unlearn_train']:.3f}, test x{ratios['ppl_unlearn_test']:.3f} "
                        f"(min {th.unlearn_min_ratio})"))

    a0, a1 = _cell(rows, first, target, "crows"), _cell(rows, last, target, "crows")
    checks.append(Check(6, "target-domain crows moves toward 50",
                        a0 - a1 >= th.crows_min_drop and a1 >= th.crows_floor,
                        f"{target} crows {a0:.2f} -> {a1:.2f} (drop >= {th.crows_min_drop}, floor {th.crows_floor})"))

    b0, b1 = _cell(rows, first, other, "crows"), _cell(rows, last, other, "crows")
    crow = reports[(contrast, "masked")]
    c0, c1 = _cell(crow, first, other, "crows"), _cell(crow, last, other, "crows")
    shared, disjoint = b1 - b0, c1 - c0
    checks.append(Check(7, "transfer to the untouched domain needs shared contexts",
                        shared < 0 and abs(disjoint) < abs(shared),
                        f"{other} crows change {shared:+.2f} at {primary}, {disjoint:+.2f} at {contrast}"))

    full = reports.get((primary, "full-sequence"))
    if full is None:
        checks.append(Check(8, "full-sequence ascent hurts retain more", False, "no full-sequence run configured"))
    else:
        f0, f1 = _cell(full, first, target, "ppl_retain"), _cell(full, last, target, "ppl_retain")
        checks.append(Check(8, "full-sequence ascent hurts retain more", f1 / f0 > r1 / r0,
                            f"retain ppl x{f1 / f0:.4f} full-sequence vs x{r1 / r0:.4f} masked"))
    return checks


def bias_injected(reports: dict[tuple[str, str], list], unit: str, floor: float = 60.0) -> tuple[bool, float]:
    rows = reports[(unit, "masked")]
    first = min(r.step for r in rows)
    score = next(r.crows for r in rows if r.step == first and r.unlearned)
    return score > floor, score


def _artifact_digests(root: Path) -> dict[str, str]:
    skip = {"acceptance.json", "repro.txt"}
    return {str(p.relative_to(root)): sha256_file(p) for p in sorted(root.rglob("*"))
            if p.is_file() and p.name not in skip and ".determinism" not in p.relative_to(root).parts}


def run_pipeline(cfg: ExperimentConfig) -> dict[tuple[str, str], list]:
    run_synth(cfg)
    run_pretrain(cfg)
    run_unlearn(cfg)
    return run_eval(cfg)


@dataclass
class ReproResult:
    checks: list[Check]
    reports: dict
    seconds: float
    seed: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = [c.line() for c in self.checks]
        n = sum(c.passed for c in self.checks)
        lines.append(f"{'PASS' if self.passed else 'FAIL'}: {n}/{len(self.checks)} criteria met "
                     f"(seed {self.seed}, {self.seconds:.1f} s)")
        return "\n".join(lines) + "\n"


def run_repro(cfg: ExperimentConfig) -> ReproResult:
    """Run the whole pipeline, then check criteria 4 to 10. Never raises on a failed threshold."""
    if cfg.external or len(cfg.overlaps) < 2 or cfg.modes[0] != "masked":
        raise ConfigError("repro needs a synthetic experiment with two overlaps and masked mode first")
    started = time.perf_counter()
    reports = run_pipeline(cfg)
    checks = check_trends(cfg, reports)
    # the budget covers one full pass; the determinism twin below is a second, separate run
    seconds = time.perf_counter() - started

    if cfg.thresholds.check_determinism:
        twin = cfg.with_overrides(output_dir=cfg.output_dir / ".determinism")
        run_pipeline(twin)
        a, b = _artifact_digests(cfg.output_dir), _artifact_digests(twin.output_dir)
        differing = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
        shutil.rmtree(twin.output_dir)
        checks.append(Check(9, "same seed gives bit-identical artifacts", not differing,
                            f"{len(a)} files compared" if not differing else f"differing: {differing[:5]}"))
    checks.append(Check(10, "runtime budget", seconds < cfg.thresholds.runtime_budget_s,
                        f"{seconds:.1f} s (budget {cfg.thresholds.runtime_budget_s:.0f} s)"))

    ok, score = bias_injected(reports, cfg.units()[0])
    if not ok:
        log.warning("baseline prefers stereo in only %.1f%% of target pairs; bias injection is weak", score)
    result = ReproResult(checks, reports, seconds, cfg.seed)
    doc = {"format": "unlearnlab-acceptance/1", "seed": cfg.seed, "passed": result.passed,
           "baseline_target_crows": score,
           "checks": [asdict(c) for c in checks],
           "thresholds": asdict(cfg.thresholds),
           "report_columns": list(REPORT_COLUMNS)}
    atomic_write_text(cfg.output_dir / "acceptance.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    atomic_write_text(cfg.output_dir / "repro.txt", result.summary())
    return result


def calibrate(cfg: ExperimentConfig, seeds, workdir) -> dict:
    """Run the repro checks for several seeds (no determinism twin) and summarise them.

    The returned record is what ``configs/calibration.json`` stores.
    """
    per_seed = []
    for seed in seeds:
        run_cfg = cfg.with_overrides(seed=seed, output_dir=Path(workdir) / f"seed{seed}")
        run_cfg.thresholds = Thresholds(**{**asdict(cfg.thresholds), "check_determinism": False})
        result = run_repro(run_cfg)
        trend = [c for c in result.checks if 4 <= c.criterion <= 8]
        _, injected = bias_injected(result.reports, run_cfg.units()[0])
        per_seed.append({"seed": seed, "passed_4_to_8": all(c.passed for c in trend),
                         "failed": [c.criterion for c in trend if not c.passed],
                         "baseline_target_crows": injected,
                         "seconds": round(result.seconds, 1),
                         "details": {str(c.criterion): c.detail for c in trend}})
        shutil.rmtree(run_cfg.output_dir)
    return {"format": "unlearnlab-calibration/1",
            "config": "configs/acceptance.ini",
            "seeds": list(seeds),
            "default_seed": cfg.seed,
            "required_passing_seeds": 4,
            "passing_seeds": sum(s["passed_4_to_8"] for s in per_seed),
            "bias_injection_floor": 60.0,
            "thresholds": asdict(cfg.thresholds),
            "per_seed": per_seed}
