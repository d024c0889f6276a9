"""Experiment configs, replication runs and their CSV/JSON artifacts.

The same run is available from the shell:
    improper-o2b run config.toml --out results --workers 4

Run: python demos/07_experiment_harness.py
"""
import tempfile
from pathlib import Path

from improper_o2b.harness import ExperimentConfig, ModelParams, dump_config, parse_config, run_experiment

cfg = ExperimentConfig("discrete", ModelParams(d=3, T=150), replications=40, delta=0.05, seed=11)
text = dump_config(cfg)
print(text)
assert parse_config(text) == cfg

with tempfile.TemporaryDirectory() as tmp:
    res = run_experiment(cfg, out=tmp)
    print(sorted(p.name for p in Path(tmp).iterdir()))
    print("\n".join(res.csv_text.splitlines()[:4]))
s = res.summary
print(f"bound {s['bound']:.4f}, {s['quantile_level']:.2f}-quantile {s['quantile']:.5f}, violation rate {s['violation_rate']}")
