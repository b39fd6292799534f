"""Bundled use-case fixtures.

Model metadata (FLOPs, parameter counts, per-precision accuracy) is real;
latency, memory and energy are synthetic, produced by a small analytic
device model so that the fixtures are reproducible and the bundled JSON
can be regenerated with ``python -m slodeploy.fixtures``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .problem import SLOSpec, parse_slo_spec
from .profiles import (
    WEIGHT_BYTES,
    HardwareConfig,
    MeasurementRecord,
    ModelVariant,
    ProfileDB,
    dumps_profiles,
    loads_profiles,
)
from .runtime import RuntimeEvent, dumps_trace, loads_trace

CPU_THREADS = (1, 2, 4, 8)
N_SAMPLES = 30


@dataclass(frozen=True)
class Architecture:
    name: str
    family: str
    task_id: str
    input_size: str
    gflops: float
    mparams: float
    accuracy: Mapping[str, float]  # precision -> accuracy; missing precisions do not exist
    activation_mb: float
    accuracy_direction: str = "max"

    def slug(self) -> str:
        return self.name.lower().replace(" ", "-")


@dataclass(frozen=True)
class DeviceModel:
    """Analytic latency/memory/energy model of one phone."""

    name: str
    engines: tuple
    cpu_threads: tuple = CPU_THREADS
    cpu_ms_per_gflop: float = 80.0
    # xnnpack flag -> thread count -> relative latency
    thread_scale: Mapping[bool, Mapping[int, float]] = field(default_factory=dict)
    xnnpack_speedup: float = 0.55
    cpu_precision: Mapping[str, float] = field(default_factory=dict)
    engine_ms_per_gflop: Mapping[str, float] = field(default_factory=dict)
    engine_precision: Mapping[str, Mapping[str, float]] = field(default_factory=dict)  # absent = unsupported
    overhead_ms: Mapping[str, float] = field(default_factory=dict)
    cv: Mapping[str, float] = field(default_factory=dict)
    family_factor: Mapping[tuple, float] = field(default_factory=dict)  # (family, engine)
    family_cv: Mapping[tuple, float] = field(default_factory=dict)  # (family, engine) -> cv multiplier
    # per-family CPU behaviour that departs from the device default
    family_threads: Mapping[str, Mapping[int, float]] = field(default_factory=dict)
    family_xnnpack: Mapping[str, float] = field(default_factory=dict)
    family_cpu_precision: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    mem_overhead_mb: Mapping[str, float] = field(default_factory=dict)
    mem_weight_copies: Mapping[str, float] = field(default_factory=dict)
    precision_mem_mb: Mapping[str, float] = field(default_factory=dict)
    power_w: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0

    def hardware(self) -> list:
        out = []
        for engine in self.engines:
            if engine == "CPU":
                for t in self.cpu_threads:
                    for x in (True, False):
                        out.append(HardwareConfig.of("CPU", threads=t, xnnpack=x))
            elif engine == "DSP":
                out.append(HardwareConfig("DSP"))
            else:
                out.append(HardwareConfig.of(engine, precision="fp16"))
        return out

    def supports(self, precision: str, hw: HardwareConfig) -> bool:
        if hw.engine == "CPU":
            return True
        return precision in self.engine_precision.get(hw.engine, {})

    def latency_ms(self, arch: Architecture, precision: str, hw: HardwareConfig) -> float:
        e = hw.engine
        if e == "CPU":
            o = hw.options_dict()
            fam = arch.family
            threads = self.family_threads.get(fam) or self.thread_scale[o["xnnpack"]]
            xnn = self.family_xnnpack.get(fam, self.xnnpack_speedup) if o["xnnpack"] else 1.0
            prec = {**self.cpu_precision, **self.family_cpu_precision.get(fam, {})}[precision]
            per = self.cpu_ms_per_gflop * threads[o["threads"]] * xnn * prec
        else:
            per = self.engine_ms_per_gflop[e] * self.engine_precision[e][precision]
        per *= self.family_factor.get((arch.family, e), 1.0)
        return self.overhead_ms[e] + arch.gflops * per

    def memory_mb(self, arch: Architecture, precision: str, hw: HardwareConfig) -> float:
        size = arch.mparams * WEIGHT_BYTES[precision]
        copies = self.mem_weight_copies.get(hw.engine, 1.0)
        if hw.engine == "CPU" and hw.options_dict()["xnnpack"]:
            copies += 1.0  # packed weight copy
        return (self.mem_overhead_mb[hw.engine] + size * copies + arch.activation_mb
                + self.precision_mem_mb.get(precision, 0.0))


def _jitter(seed: int, n: int) -> np.ndarray:
    z = np.random.default_rng(seed).standard_normal(n)
    return (z - z.mean()) / z.std()


def build_profile(device: DeviceModel, archs, batch: int = 1) -> ProfileDB:
    """Materialise a profile for every supported (variant, hardware) pair."""
    models, records = [], []
    z = {e: _jitter(device.seed * 100 + i, N_SAMPLES) for i, e in enumerate(device.engines)}
    hardware = device.hardware()
    for arch in archs:
        for precision, acc in arch.accuracy.items():
            mid = f"{arch.slug()}-{precision.lower()}"
            models.append(ModelVariant(
                id=mid, architecture=arch.name, task_id=arch.task_id, input_size=arch.input_size,
                precision=precision, size_mb=round(arch.mparams * WEIGHT_BYTES[precision], 4),
                flops=arch.gflops * 1e9, params=arch.mparams * 1e6, accuracy=acc,
                accuracy_direction=arch.accuracy_direction,
            ))
            for hw in hardware:
                if not device.supports(precision, hw):
                    continue
                base = device.latency_ms(arch, precision, hw) * batch
                cv = device.cv[hw.engine] * device.family_cv.get((arch.family, hw.engine), 1.0)
                samples = tuple(round(float(v), 4) for v in base * (1.0 + cv * z[hw.engine]))
                mean = sum(samples) / len(samples)
                records.append(MeasurementRecord(
                    mid, hw, samples, round(device.memory_mb(arch, precision, hw), 4),
                    round(mean * device.power_w[hw.engine] / 1000.0, 6), batch,
                ))
    return ProfileDB(device.name, tuple(device.engines), tuple(models), tuple(records), ())


# --------------------------------------------------------------------------
# model tables
# --------------------------------------------------------------------------

def _acc(*values, schemes=("FP32", "FP16", "DR8", "FX8", "FFX8")):
    return {p: v for p, v in zip(schemes, values) if v is not None}


IMAGENET = (
    Architecture("MobileNet V2 1.0", "mnv2-1.0", "imagenet", "224x224", 0.60, 3.49,
                 _acc(71.92, 71.96, 71.65, 71.28, 71.26), 6.0),
    Architecture("RegNetY 008", "regnet", "imagenet", "224x224", 1.60, 6.25,
                 _acc(74.28, 74.28, 74.18, 74.45, 74.47), 7.0),
    Architecture("MobileViT XS", "mobilevit", "imagenet", "256x256", 2.10, 2.31,
                 _acc(74.61, 74.61), 12.0),
    Architecture("EfficientNet Lite0", "effnet-lite0", "imagenet", "224x224", 0.77, 4.63,
                 _acc(75.19, 75.23, 75.14, 75.09, 75.11), 3.44),
    Architecture("MobileNet V2 1.4", "mnv2-1.4", "imagenet", "224x224", 1.16, 6.09,
                 _acc(75.66, 75.68, 75.47, 75.41, 75.45), 8.0),
    Architecture("RegNetY 016", "regnet", "imagenet", "224x224", 3.23, 11.18,
                 _acc(76.76, 76.76, 76.62, 76.92, 76.84), 9.0),
    Architecture("MobileViT S", "mobilevit", "imagenet", "256x256", 4.06, 5.57,
                 _acc(78.31, 78.30), 16.0),
    Architecture("EfficientNet Lite4", "effnet", "imagenet", "300x300", 5.11, 12.95,
                 _acc(80.81, 80.80, 80.78, 80.69, 80.71), 12.0),
)

EMOTIONS = (
    Architecture("BERT-L2-H128", "bert", "emotions", "64", 0.05, 4.31,
                 _acc(92.10, 92.10, 91.90, 91.75, 91.75), 6.0),
    Architecture("XtremeDistil-L6-H256", "bert", "emotions", "64", 0.63, 12.57,
                 _acc(93.30, 93.30, 93.20, 93.15, 93.20), 10.0),
    Architecture("MobileBERT-L24-H512", "mobilebert", "emotions", "64", 2.66, 24.33,
                 _acc(93.80, 93.80, 93.80, 93.65, 94.10), 14.0),
)

SCENES = (
    Architecture("EfficientNet Lite0", "effnet-lite0", "scene", "224x224", 0.59, 3.44,
                 _acc(69.78, 69.70, 68.96, 69.18, 69.18), 4.0),
    Architecture("EfficientNet Lite2", "effnet", "scene", "260x260", 1.51, 4.87,
                 _acc(76.72, 76.72, 77.16, 77.69, 77.54), 8.0),
    Architecture("EfficientNet Lite4", "effnet", "scene", "300x300", 4.57, 11.76,
                 _acc(79.33, 79.33, 79.18, 79.78, 79.48), 12.0),
    Architecture("YAMNet", "yamnet", "audio", "15600", 0.14, 3.75,
                 _acc(0.3756, 0.3757, 0.3620), 3.0),
)

FACES = (
    Architecture("GenderNet-MNV2", "mnv2-1.0", "gender", "62x62", 0.04, 0.66,
                 _acc(95.12, 94.95, 94.90, 94.79, 94.90), 1.0),
    Architecture("AgeNet-MNV2", "mnv2-1.0", "age", "62x62", 0.04, 0.66,
                 _acc(5.976, 5.974, 5.964, 5.947, 5.923), 1.0, accuracy_direction="min"),
    Architecture("EthniNet-MNV2", "mnv2-1.0", "ethnicity", "62x62", 0.04, 0.66,
                 _acc(78.17, 78.04, 78.55, 79.30, 79.14), 1.0),
)

# --------------------------------------------------------------------------
# devices
# --------------------------------------------------------------------------

_FLOAT = {"FP32": 1.0, "FP16": 1.0}
_QUANT_SLOW = {"DR8": 1.6, "FX8": 1.6, "FFX8": 1.6}

S20 = DeviceModel(
    name="S20", engines=("CPU", "GPU", "NPU"), seed=20,
    thread_scale={True: {1: 1.0, 2: 0.55, 4: 0.30, 8: 0.36}, False: {1: 1.0, 2: 0.56, 4: 0.34, 8: 0.32}},
    cpu_precision={"FP32": 1.0, "FP16": 1.0, "DR8": 0.85, "FX8": 0.5, "FFX8": 0.5},
    engine_ms_per_gflop={"GPU": 8.0, "NPU": 10.0},
    engine_precision={"GPU": {**_FLOAT, **_QUANT_SLOW}, "NPU": {**_FLOAT, "DR8": 1.2, "FX8": 1.2, "FFX8": 1.2}},
    overhead_ms={"CPU": 0.5, "GPU": 2.0, "NPU": 1.5},
    cv={"CPU": 0.08, "GPU": 0.05, "NPU": 0.04},
    family_factor={
        ("mobilevit", "CPU"): 1.5, ("mobilevit", "GPU"): 2.0, ("mobilevit", "NPU"): 4.0,
        ("regnet", "GPU"): 1.2,
        ("effnet-lite0", "GPU"): 0.8, ("effnet", "GPU"): 0.8,
        ("effnet-lite0", "NPU"): 3.0, ("effnet", "NPU"): 3.0,
        ("mnv2-1.0", "GPU"): 1.4, ("mnv2-1.4", "GPU"): 1.4, ("mnv2-1.4", "NPU"): 0.6,
    },
    mem_overhead_mb={"CPU": 3.0, "GPU": 40.0, "NPU": 30.0},
    mem_weight_copies={"GPU": 2.0, "NPU": 1.0},
    precision_mem_mb={"FFX8": 0.3},
    power_w={"CPU": 3.5, "GPU": 2.5, "NPU": 1.2},
)

A71 = DeviceModel(
    name="A71", engines=("CPU", "GPU", "NPU", "DSP"), seed=71,
    cpu_ms_per_gflop=120.0,
    thread_scale={True: {1: 1.0, 2: 0.55, 4: 0.40, 8: 0.45}, False: {1: 1.0, 2: 0.52, 4: 0.42, 8: 0.48}},
    cpu_precision={"FP32": 1.0, "FP16": 1.0, "DR8": 0.8, "FX8": 0.5, "FFX8": 0.5},
    engine_ms_per_gflop={"GPU": 14.0, "NPU": 9.0, "DSP": 8.0},
    engine_precision={"GPU": {**_FLOAT, "DR8": 1.3, "FX8": 1.0, "FFX8": 1.3}, "NPU": {"FX8": 1.0, "FFX8": 1.0},
                      "DSP": {"FX8": 2.0, "FFX8": 1.0}},
    overhead_ms={"CPU": 0.8, "GPU": 3.0, "NPU": 2.5, "DSP": 2.0},
    cv={"CPU": 0.09, "GPU": 0.06, "NPU": 0.05, "DSP": 0.03},
    family_factor={
        ("mobilevit", "CPU"): 1.5, ("mobilevit", "GPU"): 2.0,
        ("effnet-lite0", "DSP"): 15.0, ("effnet-lite0", "GPU"): 8.0,
        ("effnet-lite0", "NPU"): 8.0, ("effnet", "NPU"): 8.0,
        ("mnv2-1.4", "NPU"): 0.7, ("yamnet", "GPU"): 15.0,
    },
    family_cv={("effnet-lite0", "DSP"): 3.0, ("effnet-lite0", "GPU"): 3.0},
    family_threads={"yamnet": {1: 1.0, 2: 0.5, 4: 0.55, 8: 0.7}, "effnet-lite0": {1: 1.0, 2: 0.52, 4: 0.42, 8: 0.48}},
    family_xnnpack={"yamnet": 1.3, "effnet-lite0": 1.0},
    family_cpu_precision={"yamnet": {"DR8": 0.6}},
    mem_overhead_mb={"CPU": 3.5, "GPU": 81.15, "NPU": 25.0, "DSP": 20.0},
    mem_weight_copies={"GPU": 2.0},
    precision_mem_mb={"FX8": 0.3},
    power_w={"CPU": 3.0, "GPU": 2.2, "NPU": 1.0, "DSP": 0.8},
)

P7 = DeviceModel(
    name="P7", engines=("CPU", "GPU", "NPU"), seed=7,
    cpu_ms_per_gflop=70.0,
    thread_scale={True: {1: 1.0, 2: 0.55, 4: 0.32, 8: 0.40}, False: {1: 1.0, 2: 0.55, 4: 0.35, 8: 0.38}},
    cpu_precision={"FP32": 1.0, "FP16": 1.0, "DR8": 0.8, "FX8": 0.55, "FFX8": 0.5},
    engine_ms_per_gflop={"GPU": 7.0, "NPU": 5.0},
    engine_precision={"GPU": {**_FLOAT, **_QUANT_SLOW}, "NPU": {**_FLOAT, "DR8": 1.4, "FX8": 0.8, "FFX8": 0.8}},
    overhead_ms={"CPU": 0.4, "GPU": 1.8, "NPU": 1.2},
    cv={"CPU": 0.07, "GPU": 0.05, "NPU": 0.03},
    family_factor={("mobilevit", "CPU"): 1.5, ("mobilevit", "GPU"): 2.0, ("mobilevit", "NPU"): 3.0},
    mem_overhead_mb={"CPU": 3.0, "GPU": 45.0, "NPU": 20.0},
    mem_weight_copies={"GPU": 2.0},
    precision_mem_mb={"FFX8": 0.2},
    power_w={"CPU": 3.2, "GPU": 2.4, "NPU": 0.9},
)

# UC4 runs on a reduced CPU option grid to keep the 3-task product near 27k variables
P7_FACES = DeviceModel(**{**P7.__dict__, "cpu_threads": (1, 4)})

DEVICES = {"S20": S20, "A71": A71, "P7": P7}

# --------------------------------------------------------------------------
# use cases
# --------------------------------------------------------------------------

SLO_DOCS = {
    "uc1": {
        "tasks": ["imagenet"],
        "objectives": [{"metric": "A", "direction": "max"}, {"metric": "TP", "direction": "max"}],
        "constraints": [{"metric": "L", "statistic": "max", "bound": 41.67}],
    },
    "uc2": {
        "tasks": ["emotions"],
        "objectives": [
            {"metric": "L", "statistic": "avg", "direction": "min"},
            {"metric": "S", "direction": "min"},
            {"metric": "A", "direction": "max"},
        ],
        "constraints": [{"metric": "MF", "bound": 90}],
    },
    "uc3": {
        "tasks": ["audio", "scene"],
        "objectives": [
            {"metric": "L", "statistic": "avg", "direction": "min"},
            {"metric": "L", "statistic": "std", "direction": "min"},
            {"metric": "A", "direction": "max"},
        ],
        "constraints": [
            {"metric": "L", "statistic": "avg", "bound": 100},
            {"metric": "L", "statistic": "std", "bound": 10},
        ],
    },
    "uc4": {
        "tasks": ["gender", "age", "ethnicity"],
        "objectives": [
            {"metric": "L", "statistic": "avg", "direction": "min"},
            {"metric": "L", "statistic": "std", "direction": "min"},
            {"metric": "S", "direction": "min"},
            {"metric": "MF", "direction": "min"},
            {"metric": "A", "direction": "max"},
        ],
        "constraints": [{"metric": "L", "statistic": "max", "bound": 10}],
    },
}

# fixture name -> (use case, device model, architectures, batch)
PROFILES = {
    "uc1-s20": ("uc1", S20, IMAGENET, 1),
    "uc1-a71": ("uc1", A71, IMAGENET, 1),
    "uc1-p7": ("uc1", P7, IMAGENET, 1),
    "uc2-s20": ("uc2", S20, EMOTIONS, 1),
    "uc3-a71": ("uc3", A71, SCENES, 1),
    "uc4-p7": ("uc4", P7_FACES, FACES, 4),
}

TRACES = {
    # CPU overload, then memory pressure
    "uc1": [RuntimeEvent(5.0, "engine_overload", "CPU"), RuntimeEvent(12.0, "memory_pressure")],
    # start with the DSP overloaded; the GPU design's footprint then drives a memory
    # spike, which leaves the GPU flagged for the rest of the run
    "uc3": [
        RuntimeEvent(0.0, "engine_overload", "DSP"),
        RuntimeEvent(5.0, "memory_pressure"),
        RuntimeEvent(5.0, "engine_overload", "GPU"),
        RuntimeEvent(10.0, "engine_recover", "DSP"),
        RuntimeEvent(10.0, "memory_recover"),
        RuntimeEvent(15.0, "engine_overload", "DSP"),
    ],
}
TRACE_HORIZON = 20.0


def generate(name: str) -> ProfileDB:
    _, device, archs, batch = PROFILES[name]
    return build_profile(device, archs, batch)


def data_dir():
    return resources.files("slodeploy") / "data"


def load_fixture(name: str) -> ProfileDB:
    """Profile for a bundled fixture such as ``"uc1-s20"``."""
    if name not in PROFILES:
        raise KeyError(f"unknown fixture {name!r}; known: {sorted(PROFILES)}")
    return loads_profiles((data_dir() / f"{name}.json").read_text(encoding="utf-8"))


def load_slo(use_case: str) -> SLOSpec:
    return parse_slo_spec((data_dir() / f"{use_case}-slo.json").read_text(encoding="utf-8"))


def load_trace(use_case: str) -> list:
    return loads_trace((data_dir() / f"{use_case}-trace.jsonl").read_text(encoding="utf-8"))


def write_bundle(out_dir: Optional[Path] = None) -> list:
    """Regenerate every bundled document; returns the paths written."""
    out_dir = Path(out_dir) if out_dir else Path(__file__).parent / "data"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in PROFILES:
        p = out_dir / f"{name}.json"
        p.write_text(dumps_profiles(generate(name)), encoding="utf-8")
        written.append(p)
    for uc, doc in SLO_DOCS.items():
        p = out_dir / f"{uc}-slo.json"
        p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(p)
    for uc, events in TRACES.items():
        p = out_dir / f"{uc}-trace.jsonl"
        p.write_text(dumps_trace(events), encoding="utf-8")
        written.append(p)
    return written


if __name__ == "__main__":
    for path in write_bundle():
        print(path)
