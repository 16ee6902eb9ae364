"""Benchmark run configuration: one declarative YAML/JSON file.

Defaults are resolved at load time and the effective config is echoed into
the run manifest, so a run is reproducible from its manifest alone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from .codecs import BandPolicy, CodecKind, CodecSpec
from .degrade import NoiseSpec, RirSpec
from .errors import ConfigError
from .metrics import DcfParams

KNOWN_PROTOCOL_KINDS = ("within_group", "cross_lingual", "lombard", "spoof", "attack")


@dataclass(frozen=True)
class ConditionSpec:
    """One degradation condition: optional noise, RIR, and codec stages."""

    condition_id: str
    noise: NoiseSpec | None = None
    rir: RirSpec | None = None
    codec: CodecSpec | None = None

    @property
    def is_clean(self) -> bool:
        return self.noise is None and self.rir is None and self.codec is None


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    kind: str
    group_by: tuple[str, ...] = ()
    mode: str = "mixed"          # lombard
    attack: str = "fgsm"         # attack
    tts_system: str | None = None
    max_pairs: int | None = None
    condition_id: str = "clean"

    def __post_init__(self) -> None:
        if self.kind not in KNOWN_PROTOCOL_KINDS:
            raise ConfigError(f"unknown protocol kind {self.kind!r}; "
                              f"expected one of {KNOWN_PROTOCOL_KINDS}")


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    adapter_command: str


@dataclass(frozen=True)
class AttackSettings:
    oracle: str = "toy"            # "toy" or "toy-score-only"
    epsilon: float = 0.002
    max_iters: int = 200
    nes_samples: int = 50
    sigma: float = 0.001
    step_size: float | None = None
    threshold: float | None = None  # None: estimate from clean trials
    mode: str = "evade"
    max_utterances: int | None = None


@dataclass(frozen=True)
class BenchConfig:
    seed: int
    output_dir: Path
    corpus_manifest: Path
    conditions: tuple[ConditionSpec, ...]
    protocols: tuple[ProtocolSpec, ...]
    models: tuple[ModelSpec, ...]
    dcf: DcfParams = DcfParams()
    stats_model_subset: tuple[str, ...] = ()
    stats_group_by: tuple[str, ...] = ("gender",)
    stats_min_speakers: int = 4
    attack: AttackSettings = AttackSettings()
    workers: int = 1
    adapter_timeout_s: float = 600.0

    def condition(self, condition_id: str) -> ConditionSpec:
        for cond in self.conditions:
            if cond.condition_id == condition_id:
                return cond
        raise ConfigError(f"condition {condition_id!r} is not defined")

    def effective_dict(self) -> dict:
        """Fully resolved config as plain data (for hashing and the manifest)."""

        def cond_dict(c: ConditionSpec) -> dict:
            out: dict = {"id": c.condition_id}
            if c.noise:
                out["noise"] = {"kind": c.noise.kind, "snr_db": c.noise.snr_db,
                                "source_manifest": c.noise.source_manifest}
            if c.rir:
                out["rir"] = {"severity": c.rir.severity,
                              "pool": {k: list(v) for k, v in c.rir.rir_pool.items()}}
            if c.codec:
                out["codec"] = {"kind": c.codec.kind.value,
                                "band_policy": c.codec.band_policy.value,
                                "adapter_command": c.codec.adapter_command,
                                "internal_rate": c.codec.internal_rate}
            return out

        return {
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "corpus_manifest": str(self.corpus_manifest),
            "conditions": [cond_dict(c) for c in self.conditions],
            "protocols": [vars(p) | {"group_by": list(p.group_by)} for p in self.protocols],
            "models": [{"id": m.model_id, "adapter": m.adapter_command} for m in self.models],
            "dcf": {"p_target": self.dcf.p_target, "c_miss": self.dcf.c_miss,
                    "c_fa": self.dcf.c_fa},
            "stats": {"model_subset": list(self.stats_model_subset),
                      "group_by": list(self.stats_group_by),
                      "min_speakers": self.stats_min_speakers},
            "attack": vars(self.attack).copy(),
            "workers": self.workers,
            "adapter_timeout_s": self.adapter_timeout_s,
        }

    def config_hash(self) -> str:
        """Hash of the run definition; the output destination is excluded so
        identical runs into different directories agree."""
        effective = self.effective_dict()
        effective.pop("output_dir")
        canonical = json.dumps(effective, sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _parse_noise(obj: dict, defaults: dict) -> NoiseSpec:
    kind = obj.get("kind", "gaussian")
    manifest = obj.get("source_manifest")
    if manifest is None:
        if kind == "environmental":
            manifest = defaults.get("noise_manifest")
        elif kind == "crosstalk":
            manifest = defaults.get("crosstalk_manifest") or defaults.get("corpus_manifest")
    return NoiseSpec(kind=kind, snr_db=float(obj["snr_db"]), source_manifest=manifest)


def _parse_rir(obj: dict, defaults: dict) -> RirSpec:
    pool = obj.get("pool") or defaults.get("rir_pools")
    if not pool:
        raise ConfigError("RIR condition given but no rir_pools configured")
    pool = {int(k): tuple(v) for k, v in pool.items()}
    return RirSpec(severity=int(obj["severity"]), rir_pool=pool)


def _parse_codec(obj: dict) -> CodecSpec:
    kind = CodecKind(obj["kind"])
    policy = BandPolicy(obj.get("band_policy", "fixed_narrow"))
    rate = int(obj.get("internal_rate", 8000 if policy is BandPolicy.FIXED_NARROW else 16000))
    return CodecSpec(kind=kind, band_policy=policy,
                     adapter_command=obj.get("adapter_command"),
                     internal_rate=rate,
                     timeout_s=float(obj.get("timeout_s", 60.0)))


def _expand_grid(grid: dict, defaults: dict) -> list[ConditionSpec]:
    """SNR x noise-kind x RIR-level expansion.

    pairing "paired" couples SNR and severity row-wise (5-2, 15-3, 25-4);
    "grid" crosses them fully.
    """
    kinds = grid.get("noise_kinds", ["gaussian"])
    snrs = [float(s) for s in grid.get("snrs", [5, 15, 25])]
    levels = grid.get("rir_levels", [])
    pairing = grid.get("pairing", "paired")
    out = []
    for kind in kinds:
        for i, snr in enumerate(snrs):
            noise = _parse_noise({"kind": kind, "snr_db": snr}, defaults)
            out.append(ConditionSpec(f"{kind}_snr{snr:g}", noise=noise))
            if not levels:
                continue
            if pairing == "paired":
                level = levels[i % len(levels)]
                rir = _parse_rir({"severity": level}, defaults)
                out.append(ConditionSpec(f"{kind}_snr{snr:g}_rir{level}", noise=noise, rir=rir))
            else:
                for level in levels:
                    rir = _parse_rir({"severity": level}, defaults)
                    out.append(ConditionSpec(f"{kind}_snr{snr:g}_rir{level}", noise=noise, rir=rir))
    return out


def load_config(path: str | Path, seed_override: int | None = None,
                workers_override: int | None = None) -> BenchConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = yaml.safe_load(path.read_text())
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")

    def require(key: str):
        if key not in raw:
            raise ConfigError(f"{path}: missing required key {key!r}")
        return raw[key]

    base = path.parent

    def resolve(p) -> str:
        p = Path(p)
        return str(p if p.is_absolute() else base / p)

    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise ConfigError(f"{path}: a master seed is required for randomized stages")

    defaults = {
        "corpus_manifest": resolve(require("corpus_manifest")),
        "noise_manifest": resolve(raw["noise_manifest"]) if raw.get("noise_manifest") else None,
        "crosstalk_manifest": resolve(raw["crosstalk_manifest"]) if raw.get("crosstalk_manifest") else None,
        "rir_pools": {k: [resolve(p) for p in v] for k, v in raw.get("rir_pools", {}).items()} or None,
    }

    conditions: list[ConditionSpec] = []
    for obj in raw.get("conditions", [{"id": "clean"}]):
        cid = obj.get("id")
        if not cid:
            raise ConfigError(f"{path}: every condition needs an id")
        conditions.append(ConditionSpec(
            condition_id=cid,
            noise=_parse_noise(obj["noise"], defaults) if obj.get("noise") else None,
            rir=_parse_rir(obj["rir"], defaults) if obj.get("rir") else None,
            codec=_parse_codec(obj["codec"]) if obj.get("codec") else None,
        ))
    if raw.get("condition_grid"):
        conditions.extend(_expand_grid(raw["condition_grid"], defaults))
    ids = [c.condition_id for c in conditions]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"{path}: duplicate condition ids")

    protocols = []
    for obj in raw.get("protocols", []):
        protocols.append(ProtocolSpec(
            name=obj.get("name") or obj["kind"],
            kind=obj["kind"],
            group_by=tuple(obj.get("group_by", ())),
            mode=obj.get("mode", "mixed"),
            attack=obj.get("attack", "fgsm"),
            tts_system=obj.get("tts_system"),
            max_pairs=obj.get("max_pairs"),
            condition_id=obj.get("condition", "clean"),
        ))
    names = [p.name for p in protocols]
    if len(set(names)) != len(names):
        raise ConfigError(f"{path}: duplicate protocol names")

    models = []
    for obj in raw.get("models", []):
        models.append(ModelSpec(model_id=obj["id"], adapter_command=obj["adapter"]))
    if len({m.model_id for m in models}) != len(models):
        raise ConfigError(f"{path}: model ids must be unique")

    dcf_raw = raw.get("dcf", {})
    dcf = DcfParams(p_target=float(dcf_raw.get("p_target", 0.01)),
                    c_miss=float(dcf_raw.get("c_miss", 1.0)),
                    c_fa=float(dcf_raw.get("c_fa", 1.0)))

    stats_raw = raw.get("stats", {})
    attack_raw = raw.get("attack", {})
    attack = AttackSettings(
        oracle=attack_raw.get("oracle", "toy"),
        epsilon=float(attack_raw.get("epsilon", 0.002)),
        max_iters=int(attack_raw.get("max_iters", 200)),
        nes_samples=int(attack_raw.get("nes_samples", 50)),
        sigma=float(attack_raw.get("sigma", 0.001)),
        step_size=attack_raw.get("step_size"),
        threshold=attack_raw.get("threshold"),
        mode=attack_raw.get("mode", "evade"),
        max_utterances=attack_raw.get("max_utterances"),
    )

    output_dir = Path(resolve(require("output_dir")))
    return BenchConfig(
        seed=int(seed),
        output_dir=output_dir,
        corpus_manifest=Path(defaults["corpus_manifest"]),
        conditions=tuple(conditions),
        protocols=tuple(protocols),
        models=tuple(models),
        dcf=dcf,
        stats_model_subset=tuple(stats_raw.get("model_subset", ())),
        stats_group_by=tuple(stats_raw.get("group_by", ("gender",))),
        stats_min_speakers=int(stats_raw.get("min_speakers", 4)),
        attack=attack,
        workers=workers_override or int(raw.get("workers", 1)),
        adapter_timeout_s=float(raw.get("adapter_timeout_s", 600.0)),
    )
