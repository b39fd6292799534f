"""Profiling data: model variants, hardware configurations and measurements.

A :class:`ProfileDB` is the device-specific ground truth behind every
device-dependent objective. It is immutable once built; loaders, the
validator and the synthetic generator all return fresh instances.
"""

from __future__ import annotations

import itertools
import json
import math
import statistics
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ParseError, SchemaError

PRECISIONS = ("FP32", "FP16", "DR8", "FX8", "FFX8")

# bytes per weight, used when deriving on-disk size from a parameter count
WEIGHT_BYTES = {"FP32": 4.0, "FP16": 2.0, "DR8": 1.0, "FX8": 1.0, "FFX8": 1.0}


@dataclass(frozen=True)
class ModelVariant:
    id: str
    architecture: str
    task_id: str
    input_size: str
    precision: str
    size_mb: float
    flops: float
    params: float
    accuracy: float
    # "max" for top-1 style metrics, "min" for error metrics such as MAE
    accuracy_direction: str = "max"

    def __post_init__(self):
        if self.precision not in PRECISIONS:
            raise ValueError(f"model {self.id!r}: unknown precision {self.precision!r}")
        if self.accuracy_direction not in ("max", "min"):
            raise ValueError(f"model {self.id!r}: accuracy_direction must be 'max' or 'min'")
        for name in ("size_mb", "flops", "params"):
            if not getattr(self, name) > 0:
                raise ValueError(f"model {self.id!r}: {name} must be positive")


@dataclass(frozen=True)
class HardwareConfig:
    """A compute engine plus its tunable options.

    ``options`` is kept as a sorted tuple of ``(name, value)`` pairs so the
    config is hashable and has one canonical encoding.
    """

    engine: str
    options: tuple = ()

    def __post_init__(self):
        opts = self.options
        if isinstance(opts, Mapping):
            opts = opts.items()
        object.__setattr__(self, "options", tuple(sorted((str(k), v) for k, v in opts)))

    @classmethod
    def of(cls, engine: str, **options) -> "HardwareConfig":
        return cls(engine, tuple(options.items()))

    def options_dict(self) -> dict:
        return dict(self.options)

    @property
    def key(self) -> str:
        """Canonical text encoding, used for ordering and tie-breaking."""
        if not self.options:
            return self.engine
        return self.engine + json.dumps(self.options_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def label(self) -> str:
        if not self.options:
            return self.engine
        parts = []
        for _, v in self.options:
            parts.append(("T" if v else "F") if isinstance(v, bool) else str(v))
        return f"{self.engine}_{','.join(parts)}"

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class MeasurementRecord:
    model_id: str
    hw: HardwareConfig
    latency_samples: tuple
    memory_mb: float
    energy_j: Optional[float] = None
    batch: int = 1

    def __post_init__(self):
        object.__setattr__(self, "latency_samples", tuple(float(v) for v in self.latency_samples))
        if not self.latency_samples:
            raise ValueError(f"{self.model_id}@{self.hw.key}: latency_samples is empty")
        if any(not (v > 0 and math.isfinite(v)) for v in self.latency_samples):
            raise ValueError(f"{self.model_id}@{self.hw.key}: latency samples must be positive")
        if not self.memory_mb > 0:
            raise ValueError(f"{self.model_id}@{self.hw.key}: memory_mb must be positive")
        if self.energy_j is not None and not self.energy_j > 0:
            raise ValueError(f"{self.model_id}@{self.hw.key}: energy_j must be positive")
        if int(self.batch) != self.batch or self.batch < 1:
            raise ValueError(f"{self.model_id}@{self.hw.key}: batch must be an integer >= 1")


@dataclass(frozen=True)
class JointMeasurementRecord:
    """Latencies of M co-running configurations, one sample list per entry."""

    entries: tuple
    joint_latency_samples: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((str(m), hw) for m, hw in self.entries))
        object.__setattr__(
            self,
            "joint_latency_samples",
            tuple(tuple(float(v) for v in s) for s in self.joint_latency_samples),
        )
        if len(self.entries) < 2:
            raise ValueError("joint measurement needs at least two entries")
        if len(self.joint_latency_samples) != len(self.entries):
            raise ValueError("joint measurement needs one sample list per entry")
        for s in self.joint_latency_samples:
            if not s or any(not v > 0 for v in s):
                raise ValueError("joint latency samples must be non-empty and positive")


@dataclass(frozen=True)
class ProfileDB:
    device_name: str
    engine_set: tuple
    models: tuple
    single_records: tuple = ()
    joint_records: tuple = ()

    def __post_init__(self):
        for name in ("engine_set", "models", "single_records", "joint_records"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.models:
            raise SchemaError("profile has no models")
        if len(set(self.engine_set)) != len(self.engine_set):
            raise SchemaError("duplicate engine in engine set")
        ids = [m.id for m in self.models]
        dup = [i for i in set(ids) if ids.count(i) > 1]
        if dup:
            raise SchemaError(f"duplicate model id {sorted(dup)[0]!r}")
        known = set(ids)
        engines = set(self.engine_set)
        seen = set()
        for rec in self.single_records:
            self._check_ref(rec.model_id, rec.hw, known, engines)
            key = (rec.model_id, rec.hw)
            if key in seen:
                raise SchemaError(f"duplicate measurement for {rec.model_id!r} on {rec.hw.key}")
            seen.add(key)
        for rec in self.joint_records:
            for model_id, hw in rec.entries:
                self._check_ref(model_id, hw, known, engines)

    @staticmethod
    def _check_ref(model_id, hw, known, engines):
        if model_id not in known:
            raise SchemaError(f"measurement references unknown model_id {model_id!r}")
        if hw.engine not in engines:
            raise SchemaError(f"measurement for {model_id!r} uses unknown engine {hw.engine!r}")

    @cached_property
    def _models_by_id(self) -> dict:
        return {m.id: m for m in self.models}

    @cached_property
    def _records_by_key(self) -> dict:
        return {(r.model_id, r.hw): r for r in self.single_records}

    @cached_property
    def _joint_by_key(self) -> dict:
        out = {}
        for rec in self.joint_records:
            out.setdefault(tuple(sorted(rec.entries, key=_entry_key)), rec)
        return out

    def model(self, model_id: str) -> ModelVariant:
        return self._models_by_id[model_id]

    def record(self, model_id: str, hw: HardwareConfig) -> MeasurementRecord:
        return self._records_by_key[(model_id, hw)]

    def has_record(self, model_id: str, hw: HardwareConfig) -> bool:
        return (model_id, hw) in self._records_by_key

    def joint_samples(self, entries: Sequence) -> Optional[list]:
        """Per-entry joint latency samples for exactly these co-running configs, if measured."""
        wanted = [(m, hw) for m, hw in entries]
        rec = self._joint_by_key.get(tuple(sorted(wanted, key=_entry_key)))
        if rec is None:
            return None
        if list(rec.entries) == wanted:
            return [list(s) for s in rec.joint_latency_samples]
        by_entry = dict(zip(rec.entries, rec.joint_latency_samples))
        if len(by_entry) != len(rec.entries):
            # repeated config inside one tuple: only positional matches are unambiguous
            return None
        return [list(by_entry[e]) for e in wanted]

    def tasks(self) -> list:
        return sorted({m.task_id for m in self.models})

    def has_energy(self, model_ids: Optional[Iterable[str]] = None) -> bool:
        wanted = None if model_ids is None else set(model_ids)
        return all(
            r.energy_j is not None
            for r in self.single_records
            if wanted is None or r.model_id in wanted
        )


def _entry_key(entry):
    model_id, hw = entry
    return (model_id, hw.key)


# --------------------------------------------------------------------------
# canonical document format
# --------------------------------------------------------------------------

_MODEL_FIELDS = ("id", "architecture", "task_id", "input_size", "precision",
                 "size_mb", "flops", "params", "accuracy")


def _require(obj, key, where):
    if not isinstance(obj, Mapping):
        raise SchemaError(f"{where}: expected an object")
    if key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    return obj[key]


def _hw_from_doc(doc, where) -> HardwareConfig:
    engine = _require(doc, "engine", where)
    options = doc.get("options", {}) or {}
    if not isinstance(options, Mapping):
        raise SchemaError(f"{where}: options must be an object")
    return HardwareConfig(str(engine), tuple(options.items()))


def _hw_to_doc(hw: HardwareConfig) -> dict:
    return {"engine": hw.engine, "options": hw.options_dict()}


def profiles_from_dict(doc: Mapping) -> ProfileDB:
    device = _require(doc, "device", "profile")
    engines = _require(doc, "engines", "profile")
    models_doc = _require(doc, "models", "profile")
    if not isinstance(models_doc, list) or not isinstance(engines, list):
        raise SchemaError("profile: 'models' and 'engines' must be lists")
    if not models_doc:
        raise SchemaError("profile has no models")

    models = []
    for i, m in enumerate(models_doc):
        where = f"models[{i}]"
        vals = {k: _require(m, k, where) for k in _MODEL_FIELDS}
        if vals["precision"] not in PRECISIONS:
            raise SchemaError(f"{where}: unknown precision {vals['precision']!r}")
        models.append(ModelVariant(
            id=str(vals["id"]), architecture=str(vals["architecture"]),
            task_id=str(vals["task_id"]), input_size=str(vals["input_size"]),
            precision=vals["precision"], size_mb=float(vals["size_mb"]),
            flops=float(vals["flops"]), params=float(vals["params"]),
            accuracy=float(vals["accuracy"]),
            accuracy_direction=m.get("accuracy_direction", "max"),
        ))

    singles = []
    for i, r in enumerate(doc.get("measurements", []) or []):
        where = f"measurements[{i}]"
        samples = _require(r, "latency_samples", where)
        if not isinstance(samples, list):
            raise SchemaError(f"{where}: latency_samples must be a list")
        energy = r.get("energy_j")
        singles.append(MeasurementRecord(
            model_id=str(_require(r, "model_id", where)),
            hw=_hw_from_doc(_require(r, "hw", where), where + ".hw"),
            latency_samples=tuple(samples),
            memory_mb=float(_require(r, "memory_mb", where)),
            energy_j=None if energy is None else float(energy),
            batch=int(r.get("batch", 1)),
        ))

    joints = []
    for i, r in enumerate(doc.get("joint_measurements", []) or []):
        where = f"joint_measurements[{i}]"
        entries = [
            (str(_require(e, "model_id", f"{where}.entries[{j}]")),
             _hw_from_doc(_require(e, "hw", f"{where}.entries[{j}]"), f"{where}.entries[{j}].hw"))
            for j, e in enumerate(_require(r, "entries", where))
        ]
        joints.append(JointMeasurementRecord(entries, _require(r, "joint_latency_samples", where)))

    return ProfileDB(str(device), tuple(str(e) for e in engines), tuple(models),
                     tuple(singles), tuple(joints))


def profiles_to_dict(db: ProfileDB) -> dict:
    models = []
    for m in db.models:
        d = {k: getattr(m, k) for k in _MODEL_FIELDS}
        d["accuracy_direction"] = m.accuracy_direction
        models.append(d)
    return {
        "device": db.device_name,
        "engines": list(db.engine_set),
        "models": models,
        "measurements": [
            {
                "model_id": r.model_id,
                "hw": _hw_to_doc(r.hw),
                "latency_samples": list(r.latency_samples),
                "memory_mb": r.memory_mb,
                "energy_j": r.energy_j,
                "batch": r.batch,
            }
            for r in db.single_records
        ],
        "joint_measurements": [
            {
                "entries": [{"model_id": m, "hw": _hw_to_doc(hw)} for m, hw in r.entries],
                "joint_latency_samples": [list(s) for s in r.joint_latency_samples],
            }
            for r in db.joint_records
        ],
    }


def dumps_profiles(db: ProfileDB) -> str:
    return json.dumps(profiles_to_dict(db), indent=1, sort_keys=True) + "\n"


def loads_profiles(text: str) -> ProfileDB:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed profile document: {exc}") from exc
    return profiles_from_dict(doc)


def load_profiles(path) -> ProfileDB:
    """Read a profile document from ``path``.

    Raises ParseError for undecodable text, SchemaError for structural
    problems (missing fields, dangling model ids, unknown engines) and
    ValueError for non-positive metrics.
    """
    return loads_profiles(Path(path).read_text(encoding="utf-8"))


def write_profiles(db: ProfileDB, path) -> None:
    Path(path).write_text(dumps_profiles(db), encoding="utf-8")


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    kind: str  # "coverage_gap" or "high_cv"
    model_id: str
    engine: str
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple = ()

    def __len__(self):
        return len(self.findings)

    def __iter__(self):
        return iter(self.findings)

    @property
    def clean(self) -> bool:
        return not self.findings

    def to_text(self) -> str:
        if self.clean:
            return "profile is fully covered and clean\n"
        return "".join(
            f"{f.kind}\t{f.model_id}\t{f.engine}\t{f.detail}\n" for f in self.findings
        )


def latency_cv(samples: Sequence[float]) -> float:
    """Coefficient of variation with the population standard deviation."""
    mean = statistics.fmean(samples)
    return statistics.pstdev(samples) / mean


def validate_profiles(db: ProfileDB, cv_threshold: float = 0.5) -> ValidationReport:
    findings = []
    covered = {(r.model_id, r.hw.engine) for r in db.single_records}
    for m in db.models:
        for engine in db.engine_set:
            if (m.id, engine) not in covered:
                findings.append(Finding("coverage_gap", m.id, engine, "no measurement"))
    for r in db.single_records:
        cv = latency_cv(r.latency_samples)
        if cv > cv_threshold:
            findings.append(Finding(
                "high_cv", r.model_id, r.hw.engine,
                f"latency CV {cv:.3f} > {cv_threshold} on {r.hw.key}",
            ))
    return ValidationReport(tuple(findings))


# --------------------------------------------------------------------------
# synthetic fixtures
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    n_models: int = 3  # per task
    engines: tuple = ("CPU", "GPU")
    # engine -> list of option dicts; engines not listed get one option-less config
    engine_options: Mapping[str, Sequence[Mapping[str, Any]]] = field(default_factory=dict)
    n_tasks: int = 1
    n_samples: int = 20
    latency_ms: tuple = (5.0, 80.0)
    latency_cv: float = 0.1
    memory_mb: tuple = (10.0, 200.0)
    with_energy: bool = True
    batch: int = 1
    joint: bool = False
    device_name: str = "synthetic"

    def check(self):
        if self.n_models < 1 or self.n_tasks < 1 or self.n_samples < 1 or self.batch < 1:
            raise ValueError("n_models, n_tasks, n_samples and batch must all be >= 1")
        if not self.engines:
            raise ValueError("synthetic spec needs at least one engine")
        if len(set(self.engines)) != len(self.engines):
            raise ValueError("duplicate engine in synthetic spec")
        stray = set(self.engine_options) - set(self.engines)
        if stray:
            raise ValueError(f"options given for undeclared engine(s) {sorted(stray)}")
        for lo_hi in (self.latency_ms, self.memory_mb):
            lo, hi = lo_hi
            if not 0 < lo <= hi:
                raise ValueError(f"bad range {lo_hi}")
        # the generated profile must pass validation at the default 0.5 threshold
        if not 0 <= self.latency_cv < 0.3:
            raise ValueError("latency_cv must lie in [0, 0.3)")


def synth_profiles(seed: int, spec: SynthSpec) -> ProfileDB:
    """Generate a fully covered, clean profile that depends only on ``(seed, spec)``."""
    spec.check()
    rng = np.random.default_rng(seed)

    hw_configs = []
    for engine in spec.engines:
        for opts in spec.engine_options.get(engine) or [{}]:
            hw_configs.append(HardwareConfig(engine, tuple(dict(opts).items())))
    engine_speed = {e: float(rng.uniform(0.5, 2.0)) for e in spec.engines}

    models = []
    for t in range(spec.n_tasks):
        for i in range(spec.n_models):
            precision = PRECISIONS[int(rng.integers(len(PRECISIONS)))]
            params = float(np.round(rng.uniform(1e6, 2e7), 0))
            models.append(ModelVariant(
                id=f"t{t}-m{i}",
                architecture=f"arch-{t}-{i}",
                task_id=f"task{t}",
                input_size="224x224",
                precision=precision,
                size_mb=round(params * WEIGHT_BYTES[precision] / 1e6, 6),
                flops=float(np.round(10 ** rng.uniform(8, 9.7), 0)),
                params=params,
                accuracy=round(float(rng.uniform(60, 80)), 3),
            ))

    lo, hi = spec.latency_ms
    mlo, mhi = spec.memory_mb
    records = []
    for m in models:
        base_model = float(rng.uniform(lo, hi))
        mem = float(rng.uniform(mlo, mhi))
        for hw in hw_configs:
            base = base_model * engine_speed[hw.engine] * float(rng.uniform(0.8, 1.25))
            noise = rng.standard_normal(spec.n_samples) * spec.latency_cv
            samples = np.round(base * np.clip(1 + noise, 0.5, 1.5), 6)
            energy = round(base * float(rng.uniform(0.002, 0.01)), 6) if spec.with_energy else None
            records.append(MeasurementRecord(
                m.id, hw, tuple(float(v) for v in samples),
                round(mem * float(rng.uniform(0.9, 1.1)), 6), energy, spec.batch,
            ))

    joints = []
    if spec.joint and spec.n_tasks >= 2:
        per_task = [[r for r in records if r.model_id.startswith(f"t{t}-")] for t in range(spec.n_tasks)]
        for combo in itertools.product(*per_task):
            if rng.uniform() < 0.5:
                continue
            engines = [r.hw.engine for r in combo]
            lists = []
            for r in combo:
                share = engines.count(r.hw.engine)
                slow = share * float(rng.uniform(0.9, 1.1)) if share > 1 else float(rng.uniform(1.0, 1.15))
                lists.append(tuple(float(v) for v in np.round(np.asarray(r.latency_samples) * max(slow, 1.0), 6)))
            joints.append(JointMeasurementRecord(tuple((r.model_id, r.hw) for r in combo), tuple(lists)))

    return ProfileDB(spec.device_name, tuple(spec.engines), tuple(models), tuple(records), tuple(joints))
