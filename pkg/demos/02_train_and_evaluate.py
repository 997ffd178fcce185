"""
Training the boosted-tree classifier
====================================

Ten overlapping synthetic classes, an 80/20 stratified split and the
default hyperparameters.
"""

import os
import tempfile

import numpy as np

from lim import fit, GbtHyperparams
from lim.capture import parse_capture
from lim.extract import extract_records, manifest_index
from lim.metrics import evaluate, stratified_split
from lim.synth import generate_capture, graded_profiles

pcap, manifest = generate_capture(graded_profiles(10), sessions_per_class=200, seed=42)
data = extract_records(parse_capture(pcap).records, labels=manifest_index(manifest))
X, y = data.X, data.labels
print("feature matrix", X.shape)

train, test = stratified_split(y, 0.8, seed=42)
y_train = [y[i] for i in train]
y_test = [y[i] for i in test]

model = fit(X[train], y_train, GbtHyperparams())
report = evaluate(model, X[test], y_test)
print(report.format_table())

# confusion mass sits next to the diagonal: neighbouring classes overlap
cm = np.array(report.confusion)
print(cm)

# fewer rounds, weaker model
for rounds in (1, 5, 25):
    small = fit(X[train], y_train, GbtHyperparams(num_rounds=rounds))
    print(rounds, "rounds:", round(evaluate(small, X[test], y_test).accuracy, 4))

# the model file is plain JSON and reloads to identical predictions
path = os.path.join(tempfile.mkdtemp(), "model.json")
model.save(path)
again = type(model).load(path)
assert np.array_equal(again.predict_proba(X[test]), model.predict_proba(X[test]))
