"""Pipeline configuration stored as an INI-style file with one section per concern."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

from .masking import METHODS


@dataclass
class Paths:
    data_dir: str = ""       # empty: generate a synthetic corpus into <out>/data
    out_dir: str = "runs/default"


@dataclass
class Data:
    max_len: int = 32
    synthetic_train: int = 2000
    synthetic_dev: int = 500
    synthetic_test: int = 500


@dataclass
class Mask:
    method: str = "fusion"
    gamma_c: float = 15.0
    gamma: float = 5.0
    lam: float = 1.0
    n_max: int = 4
    min_content: int = 5


@dataclass
class Classifier:
    epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 32
    # narrow layers and dropout keep the attention on the marker words instead
    # of a sentence-initial token whose backward state summarizes everything
    d_emb: int = 16
    d_hidden: int = 8
    d_attn: int = 16
    dropout: float = 0.3


@dataclass
class Cnn:
    epochs: int = 5
    lr: float = 1e-3
    batch_size: int = 32
    d_emb: int = 64
    n_filters: int = 32


@dataclass
class Mlm:
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 256
    n_layers: int = 2
    dropout: float = 0.1
    norm_first: bool = False
    mask_rate: float = 0.15
    pretrain_epochs: int = 10
    rec_epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 32


@dataclass
class SoftSampling:
    enabled: bool = True
    eta: float = 1.0
    tau: float = 1.0
    epochs: int = 6
    schedule: str = "phased"     # or "interleaved"
    sweep_etas: str = "0,0.5,1,2,4"

    @property
    def etas(self) -> list[float]:
        return [float(x) for x in self.sweep_etas.split(",") if x.strip()]


@dataclass
class Run:
    seed: int = 0


@dataclass
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    data: Data = field(default_factory=Data)
    mask: Mask = field(default_factory=Mask)
    classifier: Classifier = field(default_factory=Classifier)
    cnn: Cnn = field(default_factory=Cnn)
    mlm: Mlm = field(default_factory=Mlm)
    ss: SoftSampling = field(default_factory=SoftSampling)
    run: Run = field(default_factory=Run)

    def validate(self) -> "PipelineConfig":
        m = self.mask
        if m.method not in METHODS:
            raise ValueError(f"mask.method must be one of {METHODS}")
        for name in ("gamma_c", "gamma", "lam"):
            if not getattr(m, name) > 0:
                raise ValueError(f"mask.{name} must be positive")
        if m.n_max < 1 or m.min_content < 1:
            raise ValueError("mask.n_max and mask.min_content must be >= 1")
        if not 0 < self.mlm.mask_rate < 1:
            raise ValueError("mlm.mask_rate must lie in (0, 1)")
        if self.mlm.d_model % self.mlm.n_heads:
            raise ValueError("mlm.d_model must be divisible by mlm.n_heads")
        if self.ss.eta < 0 or not self.ss.tau > 0:
            raise ValueError("ss.eta must be >= 0 and ss.tau > 0")
        if self.ss.schedule not in ("phased", "interleaved"):
            raise ValueError("ss.schedule must be 'phased' or 'interleaved'")
        if len(self.ss.etas) < 2 or any(e < 0 for e in self.ss.etas):
            raise ValueError("ss.sweep_etas needs at least two non-negative values")
        return self

    # -- serialization --------------------------------------------------

    def sections(self):
        for f in dataclasses.fields(self):
            yield f.name, getattr(self, f.name)

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for name, sec in self.sections():
            cp[name] = {f.name: _fmt(getattr(sec, f.name)) for f in dataclasses.fields(sec)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_string(text)
        cfg = cls()
        for name, sec in cfg.sections():
            if name not in cp:
                continue
            known = {f.name: f for f in dataclasses.fields(sec)}
            for key, raw in cp[name].items():
                if key not in known:
                    raise ValueError(f"unknown config key {name}.{key}")
                setattr(sec, key, _parse(raw, type(getattr(sec, key))))
        unknown = set(cp.sections()) - {n for n, _ in cfg.sections()}
        if unknown:
            raise ValueError(f"unknown config sections {sorted(unknown)}")
        return cfg.validate()

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def flat(self, include_out: bool = False) -> dict[str, str]:
        out = {}
        for name, sec in self.sections():
            for f in dataclasses.fields(sec):
                if name == "paths" and f.name == "out_dir" and not include_out:
                    continue
                out[f"{name}.{f.name}"] = _fmt(getattr(sec, f.name))
        return out

    @property
    def hash(self) -> str:
        """Digest of every setting except the output directory."""
        blob = "\n".join(f"{k}={v}" for k, v in sorted(self.flat().items()))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(raw: str, typ):
    raw = raw.strip()
    if typ is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return typ(raw)
