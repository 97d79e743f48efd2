"""Time extraction, training and inference the way the benchmark table does.

Every phase gets one untimed warm-up and ``runs`` timed repetitions;
averages and per-instance figures are exact fractions of the recorded
nanosecond samples.  Run with ``python demos/03_timing.py``.
"""
import tempfile

from deepfuse.bench import bench_pipeline, format_table
from deepfuse.fuse import ExtractorConfig
from deepfuse.synthetic import generate_corpus

with tempfile.TemporaryDirectory() as tmp:
    generate_corpus(tmp, n_per_class=60, seed=2)
    results = [bench_pipeline(tmp, ExtractorConfig(scheme=s), classifier="svc", n_runs=3)
               for s in ("hog+kaze", "lbp+kaze")]

print(format_table(results))

r = results[1].report
fe = r.phases["feature_extraction"]
print("\nLBP+KAZE feature extraction samples (s):",
      [round(float(s.duration), 4) for s in fe.samples])
print("mean", float(fe.mean), "= total", float(fe.total), "/", fe.runs)
print("per instance", float(r.per_instance_feature_time), "= mean /", r.N)
print("inference total", float(r.total_inference_time), "=",
      float(r.per_instance_inference_time), "x", r.phases["inference"].n_instances)
