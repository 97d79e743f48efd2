"""Timing harness for feature extraction, training and inference.

Durations are taken from ``time.perf_counter_ns`` and kept as integer
nanoseconds; every derived quantity is a :class:`fractions.Fraction` of
seconds, so the averaging identities hold exactly rather than to rounding:

* average feature time      = sum of extraction run durations / runs
* per-instance feature time = average feature time / N
* average training time     = sum of training run durations / runs
* total inference time      = per-instance inference time * N

Each phase runs once untimed before the timed runs.
"""
from __future__ import annotations

import json
import os
import platform
import statistics
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import WorkloadFailure
from .fuse import ExtractorConfig, prepare_dataset
from .learn import SplitSpec, evaluate_predictions, stratified_split, train
from .learn.metrics import EvalReport

PHASES = ("feature_extraction", "training", "inference")
REPORT_FORMAT = "deepfuse-bench"
REPORT_VERSION = 1
NS = 1_000_000_000


@dataclass(frozen=True)
class TimingSample:
    phase: str
    t_start: int  # perf_counter_ns readings
    t_end: int
    n_instances: int

    def __post_init__(self):
        if self.t_end < self.t_start:
            raise ValueError("monotonic clock went backwards")
        if self.n_instances < 1:
            raise ValueError("n_instances must be >= 1")

    @property
    def duration_ns(self) -> int:
        return self.t_end - self.t_start

    @property
    def duration(self) -> Fraction:
        """Seconds, exact."""
        return Fraction(self.duration_ns, NS)


@dataclass(frozen=True)
class PhaseTiming:
    """Samples of one phase plus the statistics computed from them."""

    phase: str
    samples: tuple
    n_instances: int
    result: object = field(default=None, compare=False, repr=False)

    @property
    def runs(self) -> int:
        return len(self.samples)

    @property
    def total(self) -> Fraction:
        return sum((s.duration for s in self.samples), Fraction(0))

    @property
    def mean(self) -> Fraction:
        return self.total / self.runs

    @property
    def per_instance(self) -> Fraction:
        return self.mean / self.n_instances

    @property
    def minimum(self) -> Fraction:
        return min(s.duration for s in self.samples)

    @property
    def median(self) -> Fraction:
        return statistics.median(s.duration for s in self.samples)

    @property
    def maximum(self) -> Fraction:
        return max(s.duration for s in self.samples)


def environment(threads=1) -> dict:
    return {
        "device": "CPU",
        "threads": int(threads),
        "cpu_count": os.cpu_count(),
        "processor": platform.processor() or platform.machine(),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "clock": "time.perf_counter_ns",
        "warmup_runs_excluded": 1,
    }


@dataclass(frozen=True)
class TimingReport:
    phases: dict  # phase name -> PhaseTiming
    environment: dict = field(default_factory=environment)

    def _phase(self, name):
        try:
            return self.phases[name]
        except KeyError:
            raise KeyError(f"report has no {name} phase") from None

    @property
    def runs(self) -> int:
        return max(p.runs for p in self.phases.values())

    @property
    def N(self) -> int:
        """Instances in the feature extraction phase (or the only phase)."""
        if "feature_extraction" in self.phases:
            return self.phases["feature_extraction"].n_instances
        return next(iter(self.phases.values())).n_instances

    @property
    def avg_feature_time(self) -> Fraction:
        return self._phase("feature_extraction").mean

    @property
    def per_instance_feature_time(self) -> Fraction:
        return self._phase("feature_extraction").per_instance

    @property
    def avg_training_time(self) -> Fraction:
        return self._phase("training").mean

    @property
    def per_instance_inference_time(self) -> Fraction:
        return self._phase("inference").per_instance

    @property
    def total_inference_time(self) -> Fraction:
        inf = self._phase("inference")
        return inf.per_instance * inf.n_instances

    def to_dict(self) -> dict:
        out = {"environment": self.environment, "phases": {}}
        for name, p in self.phases.items():
            out["phases"][name] = {
                "runs": p.runs,
                "n_instances": p.n_instances,
                "samples_ns": [[s.t_start, s.t_end] for s in p.samples],
                "mean_s": float(p.mean), "mean_exact": str(p.mean),
                "per_instance_s": float(p.per_instance), "per_instance_exact": str(p.per_instance),
                "min_s": float(p.minimum), "median_s": float(p.median), "max_s": float(p.maximum),
            }
        return out

    @classmethod
    def from_dict(cls, d) -> "TimingReport":
        phases = {}
        for name, p in d["phases"].items():
            samples = tuple(TimingSample(name, a, b, p["n_instances"]) for a, b in p["samples_ns"])
            phases[name] = PhaseTiming(name, samples, p["n_instances"])
        return cls(phases, d.get("environment", {}))


def measure(phase, workload, n_runs=3, n_instances=1, threads=1) -> TimingReport:
    """Run ``workload()`` once untimed, then ``n_runs`` timed times.

    The last run's return value is kept as ``report.phases[phase].result``.
    Any exception is re-raised as :class:`WorkloadFailure` naming the phase.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    try:
        result = workload()
        samples = []
        for _ in range(n_runs):
            t0 = time.perf_counter_ns()
            result = workload()
            t1 = time.perf_counter_ns()
            samples.append(TimingSample(phase, t0, t1, n_instances))
    except WorkloadFailure:
        raise
    except Exception as exc:
        raise WorkloadFailure(phase, exc) from exc
    return TimingReport({phase: PhaseTiming(phase, tuple(samples), n_instances, result)},
                        environment(threads))


@dataclass
class BenchResult:
    report: TimingReport
    evaluation: EvalReport
    scheme: str
    classifier: str
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "classifier": self.classifier, "config": self.config,
                "evaluation": self.evaluation.to_dict(), **self.report.to_dict()}


def bench_pipeline(corpus, cfg: ExtractorConfig = ExtractorConfig(), classifier="svc",
                   n_runs=3, split=SplitSpec(), seed=0, hyperparameters=None,
                   standardize=False, threads=1) -> BenchResult:
    """Time extraction over the whole corpus, training on the train split and
    inference on the test split; accuracy comes from the last timed model."""
    feat = measure("feature_extraction", lambda: prepare_dataset(corpus, cfg, threads),
                   n_runs, 1, threads)
    ds = feat.phases["feature_extraction"].result
    # the instance count is only known after the first extraction
    fphase = feat.phases["feature_extraction"]
    fphase = PhaseTiming(fphase.phase, tuple(TimingSample(s.phase, s.t_start, s.t_end, len(ds))
                                             for s in fphase.samples), len(ds), ds)
    train_ds, test_ds = stratified_split(ds, split)
    fit = measure("training", lambda: train(classifier, train_ds, hyperparameters, seed,
                                            standardize=standardize, threads=threads),
                  n_runs, len(train_ds), threads)
    model = fit.phases["training"].result
    inf = measure("inference", lambda: model.predict(test_ds.X, test_ds.param_fingerprint),
                  n_runs, len(test_ds), threads)
    pred = inf.phases["inference"].result
    report = TimingReport({"feature_extraction": fphase, "training": fit.phases["training"],
                           "inference": inf.phases["inference"]}, environment(threads))
    config = {"extractor": cfg.to_dict(), "classifier": model.kind,
              "hyperparameters": model.hyperparameters, "seed": seed,
              "split": {"train_fraction": split.train_fraction, "seed": split.seed,
                        "stratified": split.stratified},
              "standardize": standardize, "n_runs": n_runs,
              "fingerprint": ds.param_fingerprint}
    return BenchResult(report, evaluate_predictions(test_ds.y, pred), cfg.scheme, model.kind, config)


def save_report(result: BenchResult, path) -> None:
    """``# {header}`` line followed by the JSON body, like feature files."""
    head = {"format": REPORT_FORMAT, "version": REPORT_VERSION,
            "fingerprint": result.config.get("fingerprint"), "scheme": result.scheme,
            "classifier": result.classifier}
    Path(path).write_text(f"# {json.dumps(head, sort_keys=True)}\n"
                          f"{json.dumps(result.to_dict(), indent=1, sort_keys=True)}\n")


def load_report(path) -> dict:
    text = Path(path).read_text()
    first, _, body = text.partition("\n")
    head = json.loads(first[2:])
    if head.get("format") != REPORT_FORMAT or head.get("version") != REPORT_VERSION:
        raise ValueError(f"{path}: not a {REPORT_FORMAT} v{REPORT_VERSION} report")
    data = json.loads(body)
    data["report"] = TimingReport.from_dict(data)
    return data


def format_table(results) -> str:
    """Text table with one column per (scheme, classifier) run, rows as in an
    extraction / training / inference comparison."""
    results = list(results)
    heads = [f"{r.scheme.upper()} / {r.classifier} (CPU)" for r in results]
    rows = [
        ("Feature extraction, avg per run (s)", lambda r: f"{float(r.report.avg_feature_time):.4f}"),
        ("Feature extraction per instance (ms)",
         lambda r: f"{1e3 * float(r.report.per_instance_feature_time):.3f}"),
        ("Training, avg per run (s)", lambda r: f"{float(r.report.avg_training_time):.4f}"),
        ("Inference per instance (ms)",
         lambda r: f"{1e3 * float(r.report.per_instance_inference_time):.4f}"),
        ("Inference total (s)", lambda r: f"{float(r.report.total_inference_time):.4f}"),
        ("Accuracy", lambda r: f"{r.evaluation.accuracy:.4f}"),
        ("Runs (after 1 warm-up)", lambda r: str(r.report.runs)),
    ]
    label_w = max(len(n) for n, _ in rows)
    widths = [max(len(h), 10) for h in heads]
    lines = ["".ljust(label_w) + "  " + "  ".join(h.rjust(w) for h, w in zip(heads, widths))]
    for name, fn in rows:
        lines.append(name.ljust(label_w) + "  "
                     + "  ".join(fn(r).rjust(w) for r, w in zip(results, widths)))
    env = results[0].report.environment if results else environment()
    lines.append(f"environment: {env.get('device')} threads={env.get('threads')} "
                 f"cpus={env.get('cpu_count')} {env.get('processor')}")
    return "\n".join(lines)
