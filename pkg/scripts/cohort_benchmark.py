#!/usr/bin/env python3
"""Benchmark the three trainable architectures on a synthetic cohort.

Runs within-subject evaluation per subject and leave-two-out cross-subject
evaluation across the cohort, printing mean AUC, epochs, and wall-clock
timing per architecture.
"""

import argparse

import numpy as np

from p300kit.arch import get_architecture
from p300kit.data import SyntheticConfig, synth_generate
from p300kit.evaluate import run_cross_subject, run_within_subject
from p300kit.train import TrainConfig


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--subjects", type=int, default=4)
    parser.add_argument("--trials", type=int, default=600)
    parser.add_argument("--amplitude", type=float, default=1.0)
    parser.add_argument("--reps", type=int, default=2)
    parser.add_argument("--folds", type=int, default=5)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--jobs", type=int, default=2)
    parser.add_argument("--archs", default="sepconv1d,fcnn,oclnn")
    args = parser.parse_args()

    cohort = SyntheticConfig(n_subjects=args.subjects,
                             trials_per_subject=args.trials,
                             p300_amplitude=args.amplitude, seed=args.seed)
    subjects = synth_generate(cohort)
    config = TrainConfig(seed=args.seed)

    for name in args.archs.split(","):
        spec = get_architecture(name, cohort.channels, cohort.samples)
        within_aucs = []
        epochs = []
        train_s = []
        for subject in subjects:
            report = run_within_subject(spec, subject, config,
                                        repetitions=args.reps, k=args.folds,
                                        jobs=args.jobs)
            within_aucs.extend(r.auc for r in report.records)
            epochs.extend(r.epochs_ran for r in report.records)
            train_s.extend(r.train_seconds for r in report.records)
        cross = run_cross_subject(spec, subjects, config, jobs=args.jobs)
        cross_mean, cross_std = cross.aggregate()
        print(f"{name:<10} within AUC {np.mean(within_aucs):.4f} "
              f"+/- {np.std(within_aucs):.4f}  "
              f"cross AUC {cross_mean:.4f} +/- {cross_std:.4f}  "
              f"epochs {np.mean(epochs):.0f}  train {np.mean(train_s):.2f}s/fold")


if __name__ == "__main__":
    main()
