"""
Latency, throughput and memory
==============================

Training latency is wall time per training sample. Throughput is batched
predictions per second, median of several runs.
"""

import numpy as np

from lim import fit
from lim.capture import parse_capture
from lim.extract import extract_records, manifest_index
from lim.metrics import benchmark_inference, measure_resources
from lim.synth import generate_capture, graded_profiles

pcap, manifest = generate_capture(graded_profiles(10), sessions_per_class=400, seed=42)
data = extract_records(parse_capture(pcap).records, labels=manifest_index(manifest))
X = data.X.astype(np.float64)
y = data.labels

models = {}
train = measure_resources(lambda: models.setdefault("m", fit(X, y)), None, train_count=len(X))
model = models["m"]
print(f"train: {train.train_seconds:.2f} s, {train.train_latency_s_per_sample:.6f} s/sample")

model.predict_index(X[:1])  # warm up
bench = benchmark_inference(lambda: model.predict_index(X), len(X), repeat=5)
print(f"inference: {bench.inference_throughput_samples_per_s:,.0f} samples/s")
print(f"peak RSS: {bench.peak_memory_mib} MiB, energy: {bench.energy_watts}")

# the same numbers from the command line:
#   lim train --features features.csv --model-out model.json
#   lim bench --model model.json --features features.csv --repeat 5 --out bench.json
