"""Pipeline configuration: INI files with one flat key-value section per stage.

Unknown sections or keys are rejected.  Dataclass defaults are desk-scale so
the full pipeline runs on a CPU in minutes; paper-scale values can be set in
the file.  The resolved configuration is logged and hashed into checkpoints.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from fairchat.dialogue import AdvConfig, GumbelSchedule, Seq2SeqConfig
from fairchat.disentangle import DetConfig


@dataclass
class PathsConfig:
    raw: str = "raw.jsonl"
    lexicons: str = "builtin"
    out: str = "runs/out"


@dataclass
class RunConfig:
    seed: int = 0


@dataclass
class CorporaConfig:
    max_len: int = 50
    holdout_fraction: float = 0.1
    n_fairness_pairs: int = 200
    sentiment_threshold: int = 1
    vocab_size: int = 512
    fairness_from: str = "test"  # or "train"


@dataclass
class DialogueTrainConfig:
    pretrain_epochs: int = 30
    pretrain_lr: float = 1.0
    clip_norm: float = 5.0
    batch_size: int = 32


@dataclass
class WerConfig:
    k: float = 0.25


@dataclass
class DetTrainExtra:
    probe_every: int = 0


@dataclass
class PipelineConfig:
    paths: PathsConfig
    run: RunConfig
    corpora: CorporaConfig
    disentangle: DetConfig
    det_extra: DetTrainExtra
    seq2seq: Seq2SeqConfig
    dialogue_train: DialogueTrainConfig
    adversarial: AdvConfig
    schedule: GumbelSchedule
    wer: WerConfig

    def resolved(self) -> dict:
        return {
            "paths": asdict(self.paths),
            "run": asdict(self.run),
            "corpora": asdict(self.corpora),
            "disentangle": {**asdict(self.disentangle), **asdict(self.det_extra)},
            "dialogue": {**asdict(self.seq2seq), **asdict(self.dialogue_train)},
            "adversarial": {
                **asdict(self.adversarial),
                "tau0": self.schedule.tau0,
                "tau_divisor": self.schedule.divisor,
                "tau_interval": self.schedule.interval,
                "tau_floor": self.schedule.floor,
            },
            "wer": asdict(self.wer),
        }


_TAU_KEYS = {
    "tau0": "tau0",
    "tau_divisor": "divisor",
    "tau_interval": "interval",
    "tau_floor": "floor",
}


def _coerce(value: str, pytype):
    if pytype is bool:
        lowered = value.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"invalid boolean {value!r}")
    return pytype(value)


def _apply(obj, section, items):
    by_name = {f.name: f.type for f in fields(obj)}
    for key, raw in items:
        if key not in by_name:
            raise ValueError(f"unknown key {key!r} in section [{section}]")
        pytype = {"int": int, "float": float, "str": str, "bool": bool}.get(
            by_name[key], type(getattr(obj, key))
        )
        setattr(obj, key, _coerce(raw, pytype))


def default_config() -> PipelineConfig:
    return PipelineConfig(
        paths=PathsConfig(),
        run=RunConfig(),
        corpora=CorporaConfig(),
        disentangle=DetConfig.desk(),
        det_extra=DetTrainExtra(),
        seq2seq=Seq2SeqConfig.desk(),
        dialogue_train=DialogueTrainConfig(),
        adversarial=AdvConfig(),
        schedule=GumbelSchedule(),
        wer=WerConfig(),
    )


def load_config(path=None) -> PipelineConfig:
    cfg = default_config()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    text = Path(path).read_text(encoding="utf-8")
    parser.read_string(text)
    known = {
        "paths": cfg.paths,
        "run": cfg.run,
        "corpora": cfg.corpora,
        "wer": cfg.wer,
    }
    for section in parser.sections():
        items = list(parser.items(section))
        if section in known:
            _apply(known[section], section, items)
        elif section == "disentangle":
            det_keys = {f.name for f in fields(DetConfig)}
            _apply(cfg.disentangle, section, [(k, v) for k, v in items if k in det_keys])
            _apply(cfg.det_extra, section, [(k, v) for k, v in items if k not in det_keys])
        elif section == "dialogue":
            model_keys = {f.name for f in fields(Seq2SeqConfig)}
            _apply(cfg.seq2seq, section, [(k, v) for k, v in items if k in model_keys])
            _apply(cfg.dialogue_train, section, [(k, v) for k, v in items if k not in model_keys])
        elif section == "adversarial":
            adv_items, tau_items = [], []
            for key, value in items:
                (tau_items if key in _TAU_KEYS else adv_items).append((key, value))
            _apply(cfg.adversarial, section, adv_items)
            for key, value in tau_items:
                setattr(cfg.schedule, _TAU_KEYS[key], _coerce(value, float if key != "tau_interval" else int))
        else:
            raise ValueError(f"unknown config section [{section}]")
    return cfg
